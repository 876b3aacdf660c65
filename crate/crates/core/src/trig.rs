//! Trigonometric test functions with closed-form derivatives of every order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::multiindex::MultiIndex;

/// `amplitude * cos(<omega, x> + phase)`.
#[derive(Clone, Debug, Serialize)]
pub struct CosTerm {
    pub omega: Vec<f64>,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrigPolynomial {
    pub terms: Vec<CosTerm>,
}

impl TrigPolynomial {
    pub fn dim(&self) -> usize {
        self.terms.first().map_or(0, |t| t.omega.len())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.derivative(&MultiIndex::zero(x.len()), x)
    }

    /// `d^alpha f(x)`: each term contributes `omega^alpha cos(<omega,x> + phase + |alpha| pi/2)`.
    pub fn derivative(&self, alpha: &MultiIndex, x: &[f64]) -> f64 {
        let shift = alpha.order() as f64 * std::f64::consts::FRAC_PI_2;
        self.terms
            .iter()
            .map(|t| {
                let arg: f64 = t.omega.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + t.phase + shift;
                t.amplitude * alpha.monomial(&t.omega) * arg.cos()
            })
            .sum()
    }

    /// `sin(a x_1)` in one dimension.
    pub fn sin_1d(a: f64) -> Self {
        TrigPolynomial {
            terms: vec![CosTerm {
                omega: vec![a],
                amplitude: 1.0,
                phase: -std::f64::consts::FRAC_PI_2,
            }],
        }
    }

    /// `sin(a x_1) cos(b x_2) = (sin(a x_1 + b x_2) + sin(a x_1 - b x_2)) / 2`.
    pub fn sin_cos_2d(a: f64, b: f64) -> Self {
        let p = -std::f64::consts::FRAC_PI_2;
        TrigPolynomial {
            terms: vec![
                CosTerm { omega: vec![a, b], amplitude: 0.5, phase: p },
                CosTerm { omega: vec![a, -b], amplitude: 0.5, phase: p },
            ],
        }
    }
}

/// Fixed-seed corpus: each member has three terms with integer cycle counts
/// `|k_j| <= max_freq` (angular frequency `2 pi k`) and amplitudes in [-1, 1].
pub fn corpus(dim: usize, count: usize, max_freq: u32, seed: u64) -> Vec<TrigPolynomial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    (0..count)
        .map(|_| TrigPolynomial {
            terms: (0..3)
                .map(|_| CosTerm {
                    omega: (0..dim)
                        .map(|_| tau * rng.gen_range(-(max_freq as i32)..=max_freq as i32) as f64)
                        .collect(),
                    amplitude: rng.gen_range(-1.0..1.0),
                    phase: rng.gen_range(0.0..tau),
                })
                .collect(),
        })
        .collect()
}
