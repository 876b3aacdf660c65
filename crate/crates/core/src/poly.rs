//! Dense multivariate polynomials in the monomial basis about the origin.
//!
//! Coefficients are stored by graded-lex rank up to a storage degree, so two
//! polynomials of the same dimension and storage degree share a layout.

use crate::error::{Error, Result};
use crate::multiindex::{self, MultiIndex};

#[derive(Clone, Debug, PartialEq)]
pub struct MultiPolynomial {
    dim: usize,
    max_degree: u32,
    coeffs: Vec<f64>,
}

impl MultiPolynomial {
    pub fn zero(dim: usize, max_degree: u32) -> Self {
        MultiPolynomial {
            dim,
            max_degree,
            coeffs: vec![0.0; multiindex::count_up_to(dim, max_degree as usize)],
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        let mut p = Self::zero(dim, 0);
        p.coeffs[0] = c;
        p
    }

    /// Builds a polynomial from graded-lex coefficients up to `max_degree`.
    pub fn from_coeffs(dim: usize, max_degree: u32, coeffs: Vec<f64>) -> Result<Self> {
        let expected = multiindex::count_up_to(dim, max_degree as usize);
        if coeffs.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: coeffs.len(),
            });
        }
        Ok(MultiPolynomial {
            dim,
            max_degree,
            coeffs,
        })
    }

    /// Sum of `c * y^alpha` terms.
    pub fn from_terms(dim: usize, terms: &[(MultiIndex, f64)]) -> Self {
        let deg = terms.iter().map(|(a, _)| a.order()).max().unwrap_or(0);
        let mut p = Self::zero(dim, deg);
        for (a, c) in terms {
            assert_eq!(a.dim(), dim, "multi-index dimension");
            p.coeffs[a.rank()] += c;
        }
        p
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, alpha: &MultiIndex) -> f64 {
        if alpha.order() > self.max_degree {
            return 0.0;
        }
        self.coeffs[alpha.rank()]
    }

    /// Largest `|alpha|` with a nonzero coefficient; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.terms()
            .filter(|(_, c)| *c != 0.0)
            .map(|(a, _)| a.order())
            .max()
            .unwrap_or(0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        multiindex::enumerate(self.dim, self.max_degree)
            .into_iter()
            .zip(self.coeffs.iter().copied())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.terms().map(|(a, c)| c * a.monomial(x)).sum())
    }

    /// Exact partial derivative `d^alpha P`.
    pub fn derivative(&self, alpha: &MultiIndex) -> MultiPolynomial {
        assert_eq!(alpha.dim(), self.dim, "multi-index dimension");
        let order = alpha.order();
        if order > self.max_degree {
            return Self::zero(self.dim, 0);
        }
        let mut out = Self::zero(self.dim, self.max_degree - order);
        for (gamma, c) in self.terms() {
            if c == 0.0 {
                continue;
            }
            if let Some(rest) = gamma.checked_sub(alpha) {
                // d^alpha y^gamma = gamma!/(gamma-alpha)! y^(gamma-alpha)
                let falling = gamma.factorial() / rest.factorial();
                out.coeffs[rest.rank()] += c * falling;
            }
        }
        out
    }

    /// The part of `P` made of monomials of order exactly `k`.
    pub fn homogeneous_part(&self, k: u32) -> MultiPolynomial {
        if k > self.max_degree {
            return Self::zero(self.dim, 0);
        }
        let mut out = Self::zero(self.dim, k);
        for (a, c) in self.terms() {
            if a.order() == k {
                out.coeffs[a.rank()] = c;
            }
        }
        out
    }

    pub fn add(&self, other: &MultiPolynomial) -> MultiPolynomial {
        assert_eq!(self.dim, other.dim, "polynomial dimension");
        let deg = self.max_degree.max(other.max_degree);
        let mut out = Self::zero(self.dim, deg);
        out.coeffs[..self.coeffs.len()]
            .iter_mut()
            .zip(&self.coeffs)
            .for_each(|(o, c)| *o += c);
        out.coeffs[..other.coeffs.len()]
            .iter_mut()
            .zip(&other.coeffs)
            .for_each(|(o, c)| *o += c);
        out
    }

    pub fn scale(&self, s: f64) -> MultiPolynomial {
        MultiPolynomial {
            dim: self.dim,
            max_degree: self.max_degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Largest absolute coefficient difference, with missing coefficients read as 0.
    pub fn max_coeff_diff(&self, other: &MultiPolynomial) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n)
            .map(|i| {
                let a = self.coeffs.get(i).copied().unwrap_or(0.0);
                let b = other.coeffs.get(i).copied().unwrap_or(0.0);
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Re-expands `sum_alpha d_alpha / alpha! (x - center)^alpha` about the origin.
    ///
    /// `derivs` holds `d_alpha` in graded-lex order for all `|alpha| <= n`.
    pub fn taylor_expansion(center: &[f64], derivs: &[f64], n: u32) -> Result<MultiPolynomial> {
        let dim = center.len();
        let basis = multiindex::enumerate(dim, n);
        if derivs.len() < basis.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                found: derivs.len(),
            });
        }
        let neg: Vec<f64> = center.iter().map(|c| -c).collect();
        let mut out = Self::zero(dim, n);
        for (alpha, &d) in basis.iter().zip(derivs) {
            if d == 0.0 {
                continue;
            }
            let scaled = d / alpha.factorial();
            // (x - y)^alpha = sum_{gamma <= alpha} binom(alpha, gamma) x^gamma (-y)^(alpha - gamma)
            for gamma in alpha.lower_set() {
                let rest = alpha.checked_sub(&gamma).expect("gamma <= alpha");
                out.coeffs[gamma.rank()] += scaled * alpha.binomial(&gamma) * rest.monomial(&neg);
            }
        }
        Ok(out)
    }
}
