//! Whitney jets of finite order on a point cloud, the remainder functional
//! `q_{n,t}` and the Whitney norm.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::multiindex::{self, MultiIndex};
use crate::poly::MultiPolynomial;
use crate::sets::{dist, PointCloud};

/// Carriers larger than this are subsampled for pair suprema.
pub const EXACT_PAIR_LIMIT: usize = 3000;
const PAIR_SAMPLE_SEED: u64 = 0x5eed_0001;

/// Values `f^(alpha)(x)` for every `|alpha| <= order` and every carrier point.
#[derive(Clone, Debug)]
pub struct Jet {
    carrier: Arc<PointCloud>,
    order: u32,
    basis: Vec<MultiIndex>,
    // row-major: point i holds basis.len() values
    values: Vec<f64>,
}

impl Jet {
    pub fn new(carrier: Arc<PointCloud>, order: u32, values: Vec<f64>) -> Result<Self> {
        let basis = multiindex::enumerate(carrier.dim(), order);
        let expected = basis.len() * carrier.len();
        if values.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("jet value {v}")));
        }
        Ok(Jet { carrier, order, basis, values })
    }

    /// Samples `oracle(alpha, x)` at every carrier point for `|alpha| <= n`.
    pub fn from_function<F>(carrier: Arc<PointCloud>, n: u32, mut oracle: F) -> Result<Self>
    where
        F: FnMut(&MultiIndex, &[f64]) -> Result<f64>,
    {
        let basis = multiindex::enumerate(carrier.dim(), n);
        let mut values = Vec::with_capacity(basis.len() * carrier.len());
        for x in carrier.points() {
            for a in &basis {
                values.push(oracle(a, x)?);
            }
        }
        Jet::new(carrier, n, values)
    }

    /// The exact jet of a polynomial.
    pub fn from_polynomial(carrier: Arc<PointCloud>, n: u32, p: &MultiPolynomial) -> Result<Self> {
        let derivs: Vec<MultiPolynomial> =
            multiindex::enumerate(carrier.dim(), n).iter().map(|a| p.derivative(a)).collect();
        let mut k = 0;
        Jet::from_function(carrier, n, |_, x| {
            let v = derivs[k % derivs.len()].eval(x);
            k += 1;
            v
        })
    }

    pub fn zero(carrier: Arc<PointCloud>, n: u32) -> Self {
        let len = multiindex::count_up_to(carrier.dim(), n as usize) * carrier.len();
        Jet::new(carrier, n, vec![0.0; len]).expect("zero jet is valid")
    }

    pub fn carrier(&self) -> &Arc<PointCloud> {
        &self.carrier
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn basis(&self) -> &[MultiIndex] {
        &self.basis
    }

    /// All values at point `i`, graded-lex.
    pub fn at(&self, i: usize) -> &[f64] {
        let k = self.basis.len();
        &self.values[i * k..(i + 1) * k]
    }

    pub fn value(&self, i: usize, alpha: &MultiIndex) -> f64 {
        self.at(i)[alpha.rank()]
    }

    /// The order-0 values `f^(0)` on the carrier.
    pub fn values0(&self) -> Vec<f64> {
        (0..self.carrier.len()).map(|i| self.at(i)[0]).collect()
    }

    pub fn scaled(&self, c: f64) -> Jet {
        Jet { values: self.values.iter().map(|v| c * v).collect(), ..self.clone() }
    }

    pub fn add(&self, other: &Jet) -> Result<Jet> {
        if self.values.len() != other.values.len() || !Arc::ptr_eq(&self.carrier, &other.carrier) {
            return Err(Error::InvalidInput("jets live on different carriers or orders".into()));
        }
        Ok(Jet {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        })
    }

    /// Order-`n` Taylor polynomial at carrier point `i`, expanded about the origin.
    pub fn taylor_at(&self, i: usize, n: u32) -> Result<MultiPolynomial> {
        self.check_order(n)?;
        MultiPolynomial::taylor_expansion(self.carrier.point(i), self.at(i), n)
    }

    /// `T_y^n(f)` for a carrier point `y`.
    pub fn taylor_poly(&self, y: &[f64], n: u32) -> Result<MultiPolynomial> {
        let i = self.carrier.find(y).ok_or_else(|| Error::NotInCarrier(y.to_vec()))?;
        self.taylor_at(i, n)
    }

    fn check_order(&self, n: u32) -> Result<()> {
        if n > self.order {
            return Err(Error::OrderTooHigh { requested: n, max: self.order });
        }
        Ok(())
    }

    /// True when pair suprema use a fixed-seed subsample of the carrier.
    pub fn is_sampled(&self) -> bool {
        self.carrier.len() > EXACT_PAIR_LIMIT
    }

    fn pair_points(&self) -> Vec<usize> {
        let m = self.carrier.len();
        if m <= EXACT_PAIR_LIMIT {
            return (0..m).collect();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SAMPLE_SEED);
        let mut idx = sample(&mut rng, m, EXACT_PAIR_LIMIT).into_vec();
        idx.sort_unstable();
        idx
    }

    /// `q_{n,t}(f)`: the worst normalized Taylor deviation over pairs with
    /// `0 < |x - y| <= t`; 0 when no such pair exists.
    pub fn remainder(&self, n: u32, t: f64) -> Result<f64> {
        self.check_order(n)?;
        let dim = self.carrier.dim();
        let basis = multiindex::enumerate(dim, n);
        // for each alpha: (rank of alpha, |alpha|, [(rank of gamma, rank of gamma - alpha, 1/(gamma-alpha)!)])
        let plan: Vec<(usize, u32, Vec<(usize, usize, f64)>)> = basis
            .iter()
            .map(|a| {
                let terms = basis
                    .iter()
                    .filter_map(|g| g.checked_sub(a).map(|rest| (g.rank(), rest.rank(), 1.0 / rest.factorial())))
                    .collect();
                (a.rank(), a.order(), terms)
            })
            .collect();
        let pts = self.pair_points();
        let mut worst: f64 = 0.0;
        let mut diff = vec![0.0; dim];
        let mut mono = vec![0.0; basis.len()];
        let mut scan = |i: usize, j: usize| {
            let x = self.carrier.point(i);
            let y = self.carrier.point(j);
            let r = dist(x, y);
            if r == 0.0 || r > t {
                return;
            }
            for k in 0..dim {
                diff[k] = x[k] - y[k];
            }
            for (m, b) in mono.iter_mut().zip(&basis) {
                *m = b.monomial(&diff);
            }
            let (fx, fy) = (self.at(i), self.at(j));
            for (ra, oa, terms) in &plan {
                let taylor: f64 = terms.iter().map(|&(rg, rr, f)| fy[rg] * f * mono[rr]).sum();
                let q = (fx[*ra] - taylor).abs() / r.powi((n - oa) as i32);
                worst = worst.max(q);
            }
        };
        if self.is_sampled() {
            for &i in &pts {
                for &j in &pts {
                    scan(i, j);
                }
            }
        } else {
            for &i in &pts {
                for j in self.carrier.ball_indices(self.carrier.point(i), t) {
                    scan(i, j);
                }
            }
        }
        Ok(worst)
    }

    /// `sup |f^(alpha)|` over the carrier and `|alpha| <= n`.
    pub fn sup_part(&self, n: u32) -> Result<f64> {
        self.check_order(n)?;
        let k = multiindex::count_up_to(self.carrier.dim(), n as usize);
        Ok((0..self.carrier.len())
            .flat_map(|i| self.at(i)[..k].iter().map(|v| v.abs()))
            .fold(0.0, f64::max))
    }

    /// `||f||_n = sup|f^(alpha)| + sup_t q_{n,t}(f)`; the second supremum is
    /// attained at `t = diam(K)`.
    pub fn whitney_norm(&self, n: u32) -> Result<f64> {
        let t = self.carrier.diameter() * (1.0 + 1e-12) + 1e-300;
        Ok(self.sup_part(n)? + self.remainder(n, t)?)
    }

    /// Text format: header `d n m`, then per point its coordinates followed by
    /// the values in graded-lex order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {} {}", self.carrier.dim(), self.order, self.carrier.len())?;
        for i in 0..self.carrier.len() {
            let mut line = String::new();
            for v in self.carrier.point(i).iter().chain(self.at(i)) {
                if !line.is_empty() {
                    line.push(' ');
                }
                line.push_str(&format!("{v:.17e}"));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the text format; the carrier is rebuilt from the listed points
    /// (all flagged boundary unless `boundary` is given).
    pub fn read<R: BufRead>(r: R, boundary: Option<Vec<bool>>) -> Result<Jet> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| {
            l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.trim().starts_with('#'))
        });
        let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "missing header".into() })?;
        let header = header?;
        let h: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse { line: 1, message: format!("bad header: {e}") })?;
        if h.len() != 3 {
            return Err(Error::Parse { line: 1, message: "header must be 'd n m'".into() });
        }
        let (d, n, m) = (h[0], h[1] as u32, h[2]);
        let k = multiindex::count_up_to(d, n as usize);
        let mut coords = Vec::with_capacity(d * m);
        let mut values = Vec::with_capacity(k * m);
        for _ in 0..m {
            let (ln, line) = lines.next().ok_or(Error::Parse { line: 0, message: "too few point lines".into() })?;
            let line = line?;
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: ln + 1, message: e.to_string() })?;
            if v.len() != d + k {
                return Err(Error::Parse {
                    line: ln + 1,
                    message: format!("expected {} numbers, found {}", d + k, v.len()),
                });
            }
            coords.extend_from_slice(&v[..d]);
            values.extend_from_slice(&v[d..]);
        }
        let boundary = boundary.unwrap_or_else(|| vec![true; m]);
        let cloud = PointCloud::new(d, coords, boundary, 0.0, "jet_file")?;
        Jet::new(Arc::new(cloud), n, values)
    }
}
