//! Radial weights, blow-up samples, moment measures, and the extension
//! operator assembled from them.

use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use rand::seq::index::sample as draw;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::lp::{min_l1_combination, LpError, LpStatus};
use crate::multiindex::{self, MultiIndex};
use crate::sets::PointCloud;
use crate::whitney::{Extension, LocalPoly, PiecewiseExtension, WhitneyDecomposition};

/// Far atoms stop once `r^N / rho(r)` drops below this.
pub const FAR_DECAY: f64 = 1e-12;
pub const FAR_SHELLS: usize = 12;
/// Thinning grid cells across the core radius; later entries are retried
/// when the simplex meets a numerically singular basis or leaves a residual
/// above `RESIDUAL_RETRY`.
pub const THIN_CELLS: [f64; 4] = [16.0, 12.0, 20.0, 10.0];
pub const RESIDUAL_RETRY: f64 = 1e-9;
const PATTERN_LIMIT: usize = 12;

#[derive(Clone, Debug, Serialize)]
pub struct WeightConfig {
    pub eps0: f64,
    pub delta: f64,
    pub k_max: u32,
    /// Relative width of the geometric blend after each breakpoint.
    pub blend: f64,
    /// Beyond the last radius `R`: `rho(r) = rho(R) exp(tail_rate (r - R) / R)`.
    pub tail_rate: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig { eps0: 1.0, delta: 0.5, k_max: 1, blend: 0.1, tail_rate: 5.0 }
    }
}

/// Continuous radial weight: `eps0/2` up to `R_0 = 1`, then `r^(k-1)` on
/// `(R_{k-1}, R_k]`, blended geometrically over `[R_k, (1 + blend) R_k]`,
/// with an exponential tail past `R_{k_max}`.
#[derive(Clone, Debug, Serialize)]
pub struct RadialWeight {
    dim: usize,
    eps0: f64,
    delta: f64,
    /// `R_0, ..., R_{k_max}`.
    radii: Vec<f64>,
    /// `C_1, ..., C_{k_max}`.
    constants: Vec<f64>,
    blend: f64,
    tail_rate: f64,
}

pub fn default_eps_alpha(alpha: &MultiIndex) -> f64 {
    1.0 / (alpha.factorial() * 2f64.powi(alpha.order() as i32))
}

/// Runs the radius recursion: `R_k` is the smallest power of two above
/// `R_{k-1}` with `C_k / R_k < min eps_alpha` over `|alpha| = k` and
/// `C_k / R_k < delta eps0 / (2 R_{k-1}^k)`.
pub fn build_weight<F>(dim: usize, constants: &[f64], cfg: &WeightConfig, eps_alpha: F) -> Result<RadialWeight>
where
    F: Fn(&MultiIndex) -> f64,
{
    let km = cfg.k_max as usize;
    if km == 0 {
        return Err(Error::InvalidInput("k_max must be at least 1".into()));
    }
    if constants.len() < km {
        return Err(Error::DimensionMismatch { expected: km, found: constants.len() });
    }
    if constants[..km].iter().any(|c| !(c.is_finite() && *c > 0.0)) {
        return Err(Error::InvalidInput("Markov constants must be positive and finite".into()));
    }
    if !(cfg.eps0 > 0.0 && cfg.eps0 <= 2.0) {
        return Err(Error::InvalidInput(format!("eps0 = {} outside (0, 2]", cfg.eps0)));
    }
    if !(cfg.delta > 0.0 && cfg.blend > 0.0 && cfg.blend < 1.0 && cfg.tail_rate > 0.0) {
        return Err(Error::InvalidInput("delta, blend and tail rate must be positive, blend below 1".into()));
    }
    let mut radii = vec![1.0f64];
    for k in 1..=km {
        let prev = radii[k - 1];
        let min_eps = multiindex::of_order(dim, k as u32)
            .iter()
            .map(&eps_alpha)
            .fold(f64::INFINITY, f64::min);
        let bound = min_eps.min(cfg.delta * cfg.eps0 / (2.0 * prev.powi(k as i32)));
        let c = constants[k - 1];
        let mut r = 2.0 * prev;
        while c / r >= bound {
            r *= 2.0;
            if !r.is_finite() {
                return Err(Error::InvalidInput(format!("radius R_{k} overflows")));
            }
        }
        radii.push(r);
    }
    Ok(RadialWeight {
        dim,
        eps0: cfg.eps0,
        delta: cfg.delta,
        radii,
        constants: constants[..km].to_vec(),
        blend: cfg.blend,
        tail_rate: cfg.tail_rate,
    })
}

impl RadialWeight {
    /// The weight with every `C_k = 1`.
    pub fn unit(dim: usize, cfg: &WeightConfig) -> Result<Self> {
        build_weight(dim, &vec![1.0; cfg.k_max as usize], cfg, default_eps_alpha)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn k_max(&self) -> usize {
        self.radii.len() - 1
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    fn piece(&self, k: usize, r: f64) -> f64 {
        if k == 0 {
            self.eps0 / 2.0
        } else {
            r.powi(k as i32 - 1)
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let km = self.k_max();
        let last = self.radii[km];
        if r > last {
            return self.piece(km, last) * (self.tail_rate * (r - last) / last).exp();
        }
        if r <= self.radii[0] {
            return self.eps0 / 2.0;
        }
        let k = (1..=km).find(|&k| r <= self.radii[k]).unwrap_or(km);
        let lo = self.radii[k - 1];
        if r < lo * (1.0 + self.blend) {
            let t = (r / lo).ln() / (1.0 + self.blend).ln();
            ((1.0 - t) * self.piece(k - 1, r).ln() + t * self.piece(k, r).ln()).exp()
        } else {
            self.piece(k, r)
        }
    }

    pub fn at(&self, y: &[f64]) -> f64 {
        self.eval(norm(y))
    }

    /// Smallest radius past `R_{k_max}` (up to bisection) with
    /// `r^n / rho(r) < FAR_DECAY`.
    pub fn cutoff(&self, n: u32) -> f64 {
        let f = |r: f64| r.powi(n as i32) / self.eval(r);
        let mut lo = self.radii[self.k_max()];
        if f(lo) < FAR_DECAY {
            return lo;
        }
        let mut hi = 2.0 * lo;
        while f(hi) >= FAR_DECAY {
            lo = hi;
            hi *= 2.0;
        }
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < FAR_DECAY {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn directions(d: usize, count: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci sphere in the first three coordinates
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let s = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    let mut v = vec![0.0; d];
                    v[0] = s * t.cos();
                    v[1] = s * t.sin();
                    v[2] = z;
                    v
                })
                .collect()
        }
    }
}

fn unit_sphere_area(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => std::f64::consts::TAU,
        3 => 4.0 * std::f64::consts::PI,
        _ => 1.0,
    }
}

/// Sample of `A_{x,eps} = eps^-1 (K - x)` together with radial shells of
/// `{|y| >= eps^-1}` up to the far-field cutoff.
#[derive(Clone, Debug)]
pub struct BlowupSample {
    pub dim: usize,
    pub x: Vec<f64>,
    /// Cloud index of `x`.
    pub origin: usize,
    pub eps: f64,
    /// Rescaled cloud `(p - x) / eps` in cloud order, row-major.
    pub near: Vec<f64>,
    pub far: Vec<f64>,
    /// Shell measure `r^(d-1) dr` per far atom.
    pub far_weights: Vec<f64>,
    pub r_cut: f64,
    /// `eps^-1` beyond the cutoff: no far atoms.
    pub far_empty: bool,
    pub truncation: u32,
}

impl BlowupSample {
    pub fn near_count(&self) -> usize {
        self.near.len() / self.dim
    }

    pub fn far_count(&self) -> usize {
        self.far.len() / self.dim
    }

    pub fn near_atom(&self, j: usize) -> &[f64] {
        &self.near[j * self.dim..(j + 1) * self.dim]
    }

    pub fn far_atom(&self, j: usize) -> &[f64] {
        &self.far[j * self.dim..(j + 1) * self.dim]
    }
}

pub fn blowup_sample(cloud: &PointCloud, x: &[f64], eps: f64, weight: &RadialWeight, n: u32) -> Result<BlowupSample> {
    let d = cloud.dim();
    if x.len() != d || weight.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: x.len() });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("scale {eps} must be positive")));
    }
    let origin = cloud.find(x).ok_or_else(|| Error::NotInCarrier(x.to_vec()))?;
    let mut near = Vec::with_capacity(cloud.coords().len());
    for p in cloud.points() {
        near.extend(p.iter().zip(x).map(|(a, b)| (a - b) / eps));
    }
    for v in &mut near[origin * d..(origin + 1) * d] {
        *v = 0.0;
    }
    let r_cut = weight.cutoff(n);
    let inner = 1.0 / eps;
    let mut far = Vec::new();
    let mut far_weights = Vec::new();
    let far_empty = inner >= r_cut;
    if !far_empty {
        let dirs = directions(d, 64);
        let ratio = r_cut / inner;
        let radii: Vec<f64> = (0..FAR_SHELLS)
            .map(|j| inner * ratio.powf(j as f64 / (FAR_SHELLS - 1) as f64))
            .collect();
        let per_dir = unit_sphere_area(d) / dirs.len() as f64;
        for (j, &r) in radii.iter().enumerate() {
            let lo = if j == 0 { r } else { (r * radii[j - 1]).sqrt() };
            let hi = if j + 1 == radii.len() { r } else { (r * radii[j + 1]).sqrt() };
            let q = r.powi(d as i32 - 1) * (hi - lo) * per_dir;
            for u in &dirs {
                far.extend(u.iter().map(|c| c * r));
                far_weights.push(q);
            }
        }
    }
    Ok(BlowupSample {
        dim: d,
        x: x.to_vec(),
        origin,
        eps,
        near,
        far,
        far_weights,
        r_cut,
        far_empty,
        truncation: n,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct Atom {
    pub y: Vec<f64>,
    pub weight: f64,
    /// Cloud index for near atoms.
    pub near: Option<usize>,
}

/// Signed discrete measure on a blow-up sample.
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteMeasure {
    pub alpha: Vec<u32>,
    pub eps: f64,
    pub truncation: u32,
    pub atoms: Vec<Atom>,
    pub total_variation: f64,
    /// Largest moment violation over `|beta| <= truncation`.
    pub max_residual: f64,
    /// Whether far atoms carry weight (near-only problem infeasible).
    pub uses_far: bool,
}

impl DiscreteMeasure {
    /// `sum_j w_j y_j^beta / rho(y_j)` for every `|beta| <= truncation`.
    pub fn moments(&self, weight: &RadialWeight) -> Vec<f64> {
        let d = self.alpha.len();
        let basis = multiindex::enumerate(d, self.truncation);
        basis
            .iter()
            .map(|b| self.atoms.iter().map(|a| a.weight * b.monomial(&a.y) / weight.at(&a.y)).sum())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.alpha.len();
        let mut header: Vec<String> = (1..=d).map(|j| format!("y_{j}")).collect();
        header.push("weight".into());
        header.push("kind".into());
        writeln!(w, "{}", header.join(","))?;
        for a in &self.atoms {
            let mut row: Vec<String> = a.y.iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", a.weight));
            row.push(if a.near.is_some() { "near" } else { "far" }.into());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Near atoms offered to the LP: the atoms within the core radius
/// `1.5 R_{k_max}` thinned to one per cell of a grid with `cells` cells
/// across their extent, the useful atoms beyond thinned on a grid scaled to
/// the cutoff, the directional extremes of the core and the origin.
fn near_candidates(sample: &BlowupSample, weight: &RadialWeight, cells: f64) -> Vec<usize> {
    let d = sample.dim;
    let core_r = 1.5 * weight.radii()[weight.k_max()];
    let mut core = HashMap::new();
    let mut rest = HashMap::new();
    let mut in_core = Vec::new();
    let thin = |map: &mut HashMap<Vec<i64>, (usize, f64)>, j: usize, y: &[f64], cell: f64| {
        let key: Vec<i64> = y.iter().map(|v| (v / cell).floor() as i64).collect();
        let off: f64 = y.iter().zip(&key).map(|(v, k)| (v / cell - *k as f64 - 0.5).powi(2)).sum();
        let e = map.entry(key).or_insert((j, off));
        if off < e.1 {
            *e = (j, off);
        }
    };
    let reach = (0..sample.near_count())
        .map(|j| norm(sample.near_atom(j)))
        .filter(|&r| r <= core_r)
        .fold(0.0, f64::max);
    let core_cell = reach.max(1e-12) / cells;
    for j in 0..sample.near_count() {
        let y = sample.near_atom(j);
        let r = norm(y);
        if r <= core_r {
            thin(&mut core, j, y, core_cell);
            in_core.push(j);
        } else if r <= sample.r_cut {
            thin(&mut rest, j, y, sample.r_cut / cells);
        }
    }
    let mut out: Vec<usize> = core.values().chain(rest.values()).map(|v| v.0).collect();
    for u in directions(d, 16) {
        let proj = |j: usize| sample.near_atom(j).iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
        if let Some(&best) = in_core.iter().max_by(|&&a, &&b| proj(a).total_cmp(&proj(b))) {
            out.push(best);
        }
    }
    out.push(sample.origin);
    out.sort_unstable();
    out.dedup();
    out
}

/// Total-variation-minimizing measure with `sum_j w_j y_j^beta / rho(y_j) =
/// alpha! [beta = alpha]` for `|beta| <= n`.
///
/// The near atoms are tried alone first; far atoms enter only when that
/// problem is infeasible.
pub fn solve_moment_lp(sample: &BlowupSample, weight: &RadialWeight, alpha: &MultiIndex, n: u32) -> Result<DiscreteMeasure> {
    let d = sample.dim;
    if alpha.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: alpha.dim() });
    }
    if alpha.order() > n {
        return Err(Error::OrderTooHigh { requested: alpha.order(), max: n });
    }
    if alpha.is_zero() {
        // 1 / rho peaks at the origin, so the point mass there is optimal
        let w = weight.eval(0.0);
        return Ok(DiscreteMeasure {
            alpha: alpha.entries().to_vec(),
            eps: sample.eps,
            truncation: n,
            atoms: vec![Atom { y: vec![0.0; d], weight: w, near: Some(sample.origin) }],
            total_variation: w,
            max_residual: 0.0,
            uses_far: false,
        });
    }
    let mut best: Option<DiscreteMeasure> = None;
    for cells in THIN_CELLS {
        match moment_lp_attempt(sample, weight, alpha, n, cells) {
            Ok(m) if m.max_residual <= RESIDUAL_RETRY => return Ok(m),
            Ok(m) => {
                if best.as_ref().map_or(true, |b| m.max_residual < b.max_residual) {
                    best = Some(m);
                }
            }
            Err(Error::Lp(LpError::Singular)) => {}
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::Lp(LpError::Singular))
}

fn moment_lp_attempt(sample: &BlowupSample, weight: &RadialWeight, alpha: &MultiIndex, n: u32, cells: f64) -> Result<DiscreteMeasure> {
    let basis = multiindex::enumerate(sample.dim, n);
    let rows = basis.len();
    let mut target = vec![0.0; rows];
    target[alpha.rank()] = alpha.factorial();
    let near_idx = near_candidates(sample, weight, cells);

    let mut atoms: Vec<(Vec<f64>, Option<usize>)> =
        near_idx.iter().map(|&j| (sample.near_atom(j).to_vec(), Some(j))).collect();
    let column = |y: &[f64]| -> Vec<f64> {
        let rho = weight.at(y);
        basis.iter().map(|b| b.monomial(y) / rho).collect()
    };
    let mut cols: Vec<f64> = atoms.iter().flat_map(|(y, _)| column(y)).collect();
    let mut out = min_l1_combination(rows, &cols, &vec![1.0; atoms.len()], &target)?;
    let mut uses_far = false;
    if out.status == LpStatus::Infeasible && !sample.far_empty {
        for j in 0..sample.far_count() {
            let y = sample.far_atom(j);
            cols.extend(column(y));
            atoms.push((y.to_vec(), None));
        }
        out = min_l1_combination(rows, &cols, &vec![1.0; atoms.len()], &target)?;
        uses_far = true;
    }
    match out.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Infeasible(format!(
                "alpha {:?} at eps {} with {} near and {} far atoms",
                alpha.entries(),
                sample.eps,
                near_idx.len(),
                sample.far_count()
            )))
        }
        LpStatus::Unbounded => return Err(Error::Infeasible("unbounded total variation".into())),
    }
    let kept: Vec<Atom> = atoms
        .into_iter()
        .zip(&out.x)
        .filter(|(_, w)| **w != 0.0)
        .map(|((y, near), &w)| Atom { y, weight: w, near })
        .collect();
    let uses_far = uses_far && kept.iter().any(|a| a.near.is_none());
    Ok(DiscreteMeasure {
        alpha: alpha.entries().to_vec(),
        eps: sample.eps,
        truncation: n,
        total_variation: out.value,
        max_residual: out.max_residual,
        atoms: kept,
        uses_far,
    })
}

/// `nu(f) = sum over near atoms of w_j f(eps y_j + x) / rho(y_j)`, with `f`
/// given by its values on the cloud.
pub fn nu_eval(measure: &DiscreteMeasure, weight: &RadialWeight, f: &[f64]) -> f64 {
    nu_functional(measure, weight).iter().map(|&(i, c)| c * f[i]).sum()
}

/// The near part of the measure as a sparse functional on cloud values.
pub fn nu_functional(measure: &DiscreteMeasure, weight: &RadialWeight) -> Vec<(usize, f64)> {
    measure
        .atoms
        .iter()
        .filter_map(|a| a.near.map(|i| (i, a.weight / weight.at(&a.y))))
        .collect()
}

/// Largest `sum_{alpha in selected} |q_alpha|` over polynomials of the given
/// degree with `|Q| <= 1` at the points `z`; `None` when unbounded.
///
/// Exact through sign patterns up to `PATTERN_LIMIT` selected coefficients,
/// the sum of the individual maxima beyond.
fn max_abs_coeff_sum(dim: usize, degree: u32, z: &[f64], selected: &[usize]) -> Result<Option<(f64, bool)>> {
    let basis = multiindex::enumerate(dim, degree);
    let rows = basis.len();
    let m = z.len() / dim;
    let cols: Vec<f64> = (0..m)
        .flat_map(|j| {
            let p = &z[j * dim..(j + 1) * dim];
            basis.iter().map(move |b| b.monomial(p))
        })
        .collect();
    let cost = vec![1.0; m];
    let solve = |target: &[f64]| -> Result<Option<f64>> {
        let out = min_l1_combination(rows, &cols, &cost, target)?;
        Ok(match out.status {
            LpStatus::Optimal => Some(out.value),
            _ => None,
        })
    };
    let s = selected.len();
    if s == 0 {
        return Ok(Some((0.0, true)));
    }
    if s <= PATTERN_LIMIT {
        let mut best: f64 = 0.0;
        for mask in 0..(1usize << (s - 1)) {
            let mut target = vec![0.0; rows];
            for (t, &r) in selected.iter().enumerate() {
                target[r] = if t > 0 && mask >> (t - 1) & 1 == 1 { -1.0 } else { 1.0 };
            }
            match solve(&target)? {
                Some(v) => best = best.max(v),
                None => return Ok(None),
            }
        }
        Ok(Some((best, true)))
    } else {
        let mut total = 0.0;
        for &r in selected {
            let mut target = vec![0.0; rows];
            target[r] = 1.0;
            match solve(&target)? {
                Some(v) => total += v,
                None => return Ok(None),
            }
        }
        Ok(Some((total, false)))
    }
}

fn annulus_points(dim: usize, inner: f64) -> Vec<f64> {
    let mut z = Vec::new();
    match dim {
        1 => {
            for j in 0..=200 {
                let r = inner + (1.0 - inner) * j as f64 / 200.0;
                z.push(r);
                z.push(-r);
            }
        }
        _ => {
            let dirs = directions(dim, if dim == 2 { 128 } else { 256 });
            for j in 0..9 {
                let r = inner + (1.0 - inner) * j as f64 / 8.0;
                for u in &dirs {
                    z.extend(u.iter().map(|c| c * r));
                }
            }
        }
    }
    z
}

#[derive(Clone, Debug, Serialize)]
pub struct AnnulusConstant {
    pub degree: u32,
    pub dim: usize,
    /// LP value of `sup sum |d^alpha Q(0)| / alpha! outer^|alpha|` over
    /// `|Q| <= 1` on the annulus.
    pub raw: f64,
    /// `raw` with the safety factor 2.
    pub constant: f64,
    /// False when the per-coefficient bound replaced the sign patterns.
    pub exact: bool,
}

/// The annulus LP on `inner <= |y| <= outer`, solved in `z = y / outer`.
pub fn annulus_lp(dim: usize, k: u32, inner: f64, outer: f64) -> Result<AnnulusConstant> {
    if !(inner > 0.0 && outer > inner) {
        return Err(Error::InvalidInput(format!("annulus [{inner}, {outer}]")));
    }
    let z = annulus_points(dim, inner / outer);
    let selected: Vec<usize> = (0..multiindex::count_up_to(dim, k as usize)).collect();
    let (raw, exact) = max_abs_coeff_sum(dim, k, &z, &selected)?
        .ok_or_else(|| Error::Infeasible("annulus sample does not determine the polynomial".into()))?;
    Ok(AnnulusConstant { degree: k, dim, raw, constant: 2.0 * raw, exact })
}

/// Constant of the annulus inequality at `rho = 2`.
pub fn annulus_markov_constant(dim: usize, k: u32) -> Result<AnnulusConstant> {
    annulus_lp(dim, k, 1.0, 2.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct CkConfig {
    pub eps_ladder: Vec<f64>,
    /// Radii in blow-up coordinates.
    pub r_ladder: Vec<f64>,
    pub points: usize,
    pub seed: u64,
}

impl Default for CkConfig {
    fn default() -> Self {
        CkConfig { eps_ladder: vec![0.25, 0.125], r_ladder: vec![1.0, 2.0, 4.0], points: 8, seed: 1 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CkRow {
    pub x: Vec<f64>,
    pub eps: f64,
    pub r: f64,
    /// Infinite when no bound holds.
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CkEstimate {
    pub degree: u32,
    pub raw: f64,
    /// `raw` with the safety factor 2.
    pub constant: f64,
    pub rows: Vec<CkRow>,
}

/// Points of `A_{x,eps}` with `|y| <= r`, divided by `r`.
fn bounded_blowup(cloud: &PointCloud, x: &[f64], eps: f64, r: f64, seed: u64) -> Vec<f64> {
    let d = cloud.dim();
    let ball = cloud.ball_indices(x, eps * r);
    let idx: Vec<usize> = if ball.len() > 2000 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<usize> = draw(&mut rng, ball.len(), 2000).into_iter().map(|k| ball[k]).collect();
        for u in directions(d, 16) {
            let proj = |i: usize| cloud.point(i).iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            if let Some(&best) = ball.iter().max_by(|&&a, &&b| proj(a).total_cmp(&proj(b))) {
                v.push(best);
            }
        }
        v.sort_unstable();
        v.dedup();
        v
    } else {
        ball
    };
    let mut z: Vec<f64> = idx
        .iter()
        .flat_map(|&i| cloud.point(i).iter().zip(x).map(|(p, c)| (p - c) / (eps * r)).collect::<Vec<_>>())
        .collect();
    let inner = 1.0 / (eps * r);
    if inner < 1.0 {
        z.extend(annulus_points(d, inner));
    }
    z
}

/// One row per `(x, eps, r)`: `[sum_{|alpha|=k} |d^alpha P(0)| / alpha!] r^k`
/// over `|P| <= 1` on `A_{x,eps}` within radius `r`.
pub fn ck_sweep(cloud: &PointCloud, k: u32, cfg: &CkConfig) -> Result<Vec<CkRow>> {
    let d = cloud.dim();
    let selected: Vec<usize> = multiindex::of_order(d, k).iter().map(|a| a.rank()).collect();
    let mut rows = Vec::new();
    for &i in &cloud.boundary_sample(cfg.points, cfg.seed) {
        let x = cloud.point(i);
        for &eps in &cfg.eps_ladder {
            for &r in &cfg.r_ladder {
                let z = bounded_blowup(cloud, x, eps, r, cfg.seed);
                let value = match max_abs_coeff_sum(d, k, &z, &selected)? {
                    Some((v, _)) => v,
                    None => f64::INFINITY,
                };
                rows.push(CkRow { x: x.to_vec(), eps, r, value });
            }
        }
    }
    Ok(rows)
}

pub fn estimate_ck(cloud: &PointCloud, k: u32, cfg: &CkConfig) -> Result<CkEstimate> {
    let rows = ck_sweep(cloud, k, cfg)?;
    if let Some(bad) = rows.iter().find(|r| r.value.is_infinite()) {
        return Err(Error::Infeasible(format!(
            "no uniform constant at this resolution (x = {:?}, eps = {}, r = {})",
            bad.x, bad.eps, bad.r
        )));
    }
    let raw = rows.iter().map(|r| r.value).fold(0.0, f64::max);
    Ok(CkEstimate { degree: k, raw, constant: 2.0 * raw, rows })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OperatorStats {
    pub measures: usize,
    pub cache_hits: usize,
    pub max_total_variation: f64,
    pub max_residual: f64,
    pub far_measures: usize,
}

/// The order-free extension operator: per cube the coefficients
/// `mu_{alpha,i}(f) / alpha!` as sparse functionals of the order-0 data.
#[derive(Debug)]
pub struct ExtensionOperator {
    dec: Arc<WhitneyDecomposition>,
    weight: Arc<RadialWeight>,
    n_max: u32,
    functionals: Vec<Vec<Vec<(usize, f64)>>>,
    flagged: Vec<usize>,
    stats: OperatorStats,
}

impl ExtensionOperator {
    pub fn build(dec: Arc<WhitneyDecomposition>, weight: Arc<RadialWeight>, n_max: u32) -> Result<Self> {
        let cloud = dec.cloud().clone();
        let d = cloud.dim();
        if weight.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: weight.dim() });
        }
        let basis = multiindex::enumerate(d, n_max);
        let mut cache: HashMap<(usize, i64), Arc<Vec<Option<Vec<(usize, f64)>>>>> = HashMap::new();
        let mut stats = OperatorStats::default();
        let mut flagged = Vec::new();
        let mut functionals = Vec::with_capacity(dec.cubes().len());
        for (i, c) in dec.cubes().iter().enumerate() {
            let top = (i as u32).min(n_max);
            let key = (c.nearest, (c.gap * 1e12).round() as i64);
            let per_alpha = match cache.get(&key) {
                Some(v) => {
                    stats.cache_hits += 1;
                    v.clone()
                }
                None => {
                    let v = Arc::new(cube_functionals(&cloud, c.nearest, c.gap, &weight, n_max, &basis, &mut stats)?);
                    cache.insert(key, v.clone());
                    v
                }
            };
            let mut row = Vec::with_capacity(basis.len());
            let mut bad = false;
            for (a, alpha) in basis.iter().enumerate() {
                if alpha.order() > top {
                    row.push(Vec::new());
                    continue;
                }
                match &per_alpha[a] {
                    Some(f) => {
                        let s = 1.0 / (c.gap.powi(alpha.order() as i32) * alpha.factorial());
                        row.push(f.iter().map(|&(j, w)| (j, w * s)).collect());
                    }
                    None => {
                        bad = true;
                        row.push(Vec::new());
                    }
                }
            }
            if bad {
                flagged.push(i);
            }
            functionals.push(row);
        }
        Ok(ExtensionOperator { dec, weight, n_max, functionals, flagged, stats })
    }

    pub fn decomposition(&self) -> &Arc<WhitneyDecomposition> {
        &self.dec
    }

    pub fn weight(&self) -> &Arc<RadialWeight> {
        &self.weight
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// Cubes with an infeasible moment problem; their missing coefficients are zero.
    pub fn flagged(&self) -> &[usize] {
        &self.flagged
    }

    pub fn stats(&self) -> &OperatorStats {
        &self.stats
    }

    pub fn apply(&self, jet: Arc<Jet>) -> Result<PiecewiseExtension> {
        let f0 = jet.values0();
        let polys = self
            .dec
            .cubes()
            .iter()
            .zip(&self.functionals)
            .map(|(c, row)| LocalPoly {
                center: self.dec.cloud().point(c.nearest).to_vec(),
                coeffs: row.iter().map(|f| f.iter().map(|&(j, w)| w * f0[j]).sum()).collect(),
            })
            .collect();
        PiecewiseExtension::new(self.dec.clone(), jet, self.n_max, polys)
    }
}

fn cube_functionals(
    cloud: &PointCloud,
    origin: usize,
    gamma: f64,
    weight: &RadialWeight,
    n_max: u32,
    basis: &[MultiIndex],
    stats: &mut OperatorStats,
) -> Result<Vec<Option<Vec<(usize, f64)>>>> {
    let s = blowup_sample(cloud, cloud.point(origin), gamma, weight, n_max)?;
    let mut out = Vec::with_capacity(basis.len());
    for alpha in basis {
        match solve_moment_lp(&s, weight, alpha, n_max) {
            Ok(m) => {
                stats.measures += 1;
                stats.max_total_variation = stats.max_total_variation.max(m.total_variation);
                stats.max_residual = stats.max_residual.max(m.max_residual);
                if m.uses_far {
                    stats.far_measures += 1;
                }
                out.push(Some(nu_functional(&m, weight)));
            }
            Err(Error::Infeasible(_)) => out.push(None),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Convenience wrapper: build the operator and apply it to one jet.
pub fn full_extension(
    jet: Arc<Jet>,
    dec: Arc<WhitneyDecomposition>,
    weight: Arc<RadialWeight>,
    n_max: u32,
) -> Result<PiecewiseExtension> {
    ExtensionOperator::build(dec, weight, n_max)?.apply(jet)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// `sup |nu_alpha(f) - eps^|alpha| f^(alpha)(x)| / eps^n` over `|alpha| <= n`.
    pub sup_low: f64,
    /// `sup |nu_alpha(f)| / eps^n` over `n < |alpha| <= N`.
    pub sup_high: f64,
    pub max_total_variation: f64,
    pub far_measures: usize,
    pub infeasible: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub n: u32,
    pub truncation: u32,
    pub points: usize,
    pub jets: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Both suprema strictly decrease along the ladder.
    pub monotone: bool,
}

/// Decay table of the functionals `nu` against the jets along an `eps` ladder.
pub fn convergence_report(
    jets: &[Jet],
    weight: &RadialWeight,
    n: u32,
    truncation: u32,
    ladder: &[f64],
    points: &[usize],
) -> Result<ConvergenceReport> {
    let first = jets.first().ok_or_else(|| Error::InvalidInput("empty jet corpus".into()))?;
    let cloud = first.carrier().clone();
    if jets.iter().any(|j| !Arc::ptr_eq(j.carrier(), &cloud) || j.order() < n) {
        return Err(Error::InvalidInput("corpus jets must share the cloud and have order >= n".into()));
    }
    let basis = multiindex::enumerate(cloud.dim(), truncation);
    let values: Vec<Vec<f64>> = jets.iter().map(|j| j.values0()).collect();
    let mut rows = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let mut row = ConvergenceRow { eps, sup_low: 0.0, sup_high: 0.0, max_total_variation: 0.0, far_measures: 0, infeasible: 0 };
        let scale = eps.powi(n as i32);
        for &i in points {
            let s = blowup_sample(&cloud, cloud.point(i), eps, weight, truncation)?;
            for alpha in &basis {
                let m = match solve_moment_lp(&s, weight, alpha, truncation) {
                    Ok(m) => m,
                    Err(Error::Infeasible(_)) => {
                        row.infeasible += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                row.max_total_variation = row.max_total_variation.max(m.total_variation);
                if m.uses_far {
                    row.far_measures += 1;
                }
                let fun = nu_functional(&m, weight);
                for (jet, f0) in jets.iter().zip(&values) {
                    let nu: f64 = fun.iter().map(|&(j, c)| c * f0[j]).sum();
                    if alpha.order() <= n {
                        let exact = eps.powi(alpha.order() as i32) * jet.value(i, alpha);
                        row.sup_low = row.sup_low.max((nu - exact).abs() / scale);
                    } else {
                        row.sup_high = row.sup_high.max(nu.abs() / scale);
                    }
                }
            }
        }
        rows.push(row);
    }
    let monotone = rows.windows(2).all(|w| {
        w[1].sup_low < w[0].sup_low && (w[1].sup_high < w[0].sup_high || n >= truncation)
    });
    Ok(ConvergenceReport { n, truncation, points: points.len(), jets: jets.len(), rows, monotone })
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityRow {
    pub jet: usize,
    pub norm: f64,
    pub sup: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub n: u32,
    pub resolution: f64,
    pub grid: usize,
    pub skipped: usize,
    pub rows: Vec<ContinuityRow>,
    pub max_ratio: f64,
    pub flagged_cubes: usize,
}

/// A lattice of `per_axis` points per axis laid over the support of every
/// cube, so each overlap zone is sampled at the same relative positions.
pub fn continuity_grid(dec: &WhitneyDecomposition, per_axis: usize) -> Vec<Vec<f64>> {
    dec.support_lattice(per_axis)
}

/// `sup_grid max_{|beta| <= n} |d^beta E(f)| / ||f||_n` per corpus jet.
pub fn continuity_report(op: &ExtensionOperator, jets: &[Arc<Jet>], n: u32, grid: &[Vec<f64>]) -> Result<ContinuityReport> {
    Ok(continuity_for(op, jets, &[n], grid)?.remove(0))
}

/// [`continuity_report`] for every `n <= n_top`, from one pass of derivative
/// evaluations.
pub fn continuity_reports(op: &ExtensionOperator, jets: &[Arc<Jet>], n_top: u32, grid: &[Vec<f64>]) -> Result<Vec<ContinuityReport>> {
    let orders: Vec<u32> = (0..=n_top).collect();
    continuity_for(op, jets, &orders, grid)
}

fn continuity_for(op: &ExtensionOperator, jets: &[Arc<Jet>], orders: &[u32], grid: &[Vec<f64>]) -> Result<Vec<ContinuityReport>> {
    let d = op.dec.cloud().dim();
    let top = orders.iter().copied().max().unwrap_or(0);
    let counts: Vec<usize> = orders.iter().map(|&n| multiindex::count_up_to(d, n as usize)).collect();
    let mut rows: Vec<Vec<ContinuityRow>> = vec![Vec::with_capacity(jets.len()); orders.len()];
    let mut skipped = 0;
    for (k, jet) in jets.iter().enumerate() {
        let e = op.apply(jet.clone())?;
        let mut sup = vec![0.0f64; orders.len()];
        for x in grid {
            match e.derivatives(x, top) {
                Ok(v) => {
                    for (s, &c) in sup.iter_mut().zip(&counts) {
                        *s = v[..c].iter().fold(*s, |m, t| m.max(t.abs()));
                    }
                }
                Err(Error::NotCovered(_)) => {
                    if k == 0 {
                        skipped += 1;
                    }
                }
                Err(err) => return Err(err),
            }
        }
        for (o, &n) in orders.iter().enumerate() {
            let norm = jet.whitney_norm(n)?;
            let ratio = if norm > 0.0 { sup[o] / norm } else { 0.0 };
            rows[o].push(ContinuityRow { jet: k, norm, sup: sup[o], ratio });
        }
    }
    Ok(orders
        .iter()
        .zip(rows)
        .map(|(&n, rows)| ContinuityReport {
            n,
            resolution: op.dec.cloud().resolution(),
            grid: grid.len(),
            skipped,
            max_ratio: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
            rows,
            flagged_cubes: op.flagged.len(),
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateChain {
    pub n: u32,
    pub truncation: u32,
    pub samples: usize,
    /// Largest `|d^beta((x - x_i)^alpha phi_i)| / gamma_i^(|alpha| - |beta|)`
    /// over `|alpha|, |beta| <= n`.
    pub low: f64,
    /// The same against `3^|alpha| max_gamma alpha!/(alpha-gamma)! gamma_i^(|alpha|-|beta|)`
    /// for `n < |alpha| <= truncation`.
    pub high: f64,
    /// Largest `|x - x_i| / gamma_i` on the sampled supports.
    pub reach: f64,
    /// `max_beta sum_{n < |alpha| <= truncation} max_gamma 3^|alpha| / (alpha - gamma)!`.
    pub summability: f64,
    /// `e^(3d) (n + 1)^d 3^n`.
    pub summability_bound: f64,
}

/// Samples the Leibniz-rule estimates for the terms of the operator on
/// collar points of the decomposition.
pub fn estimate_chain(dec: &WhitneyDecomposition, n: u32, truncation: u32, samples: usize, seed: u64) -> Result<EstimateChain> {
    let d = dec.cloud().dim();
    let betas = multiindex::enumerate(d, n);
    let alphas = multiindex::enumerate(d, truncation.max(n));
    // per (alpha, beta): [(rank gamma, rank beta - gamma, binom(beta, gamma), alpha!/(alpha-gamma)!, alpha - gamma)]
    let plan: Vec<Vec<Vec<(usize, f64, f64, MultiIndex)>>> = alphas
        .iter()
        .map(|a| {
            betas
                .iter()
                .map(|b| {
                    betas
                        .iter()
                        .filter_map(|g| {
                            let rest_b = b.checked_sub(g)?;
                            let rest_a = a.checked_sub(g)?;
                            Some((rest_b.rank(), b.binomial(g), a.factorial() / rest_a.factorial(), rest_a))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let envelope = |a: &MultiIndex, b: &MultiIndex| -> f64 {
        betas
            .iter()
            .filter(|g| b.checked_sub(g).is_some() && a.checked_sub(g).is_some())
            .map(|g| a.factorial() / a.checked_sub(g).map_or(1.0, |r| r.factorial()))
            .fold(0.0, f64::max)
    };
    let (mut low, mut high, mut reach) = (0.0f64, 0.0f64, 0.0f64);
    let points = dec.collar_samples(samples, seed);
    let mut used = 0;
    for x in &points {
        let act = match dec.partition_at(x, n) {
            Ok(a) => a,
            Err(Error::NotCovered(_)) => continue,
            Err(e) => return Err(e),
        };
        used += 1;
        for ac in &act {
            let c = &dec.cubes()[ac.cube];
            let xi = dec.cloud().point(c.nearest);
            let z: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
            reach = reach.max(norm(&z) / c.gap);
            for (ai, a) in alphas.iter().enumerate() {
                for (bi, b) in betas.iter().enumerate() {
                    let v: f64 = plan[ai][bi].iter().map(|(rb, binom, fall, ra)| binom * fall * ra.monomial(&z) * ac.dphi[*rb]).sum();
                    let scale = c.gap.powi(a.order() as i32 - b.order() as i32);
                    if a.order() <= n {
                        low = low.max(v.abs() / scale);
                    } else {
                        high = high.max(v.abs() / (3f64.powi(a.order() as i32) * envelope(a, b) * scale));
                    }
                }
            }
        }
    }
    let summability = betas
        .iter()
        .map(|b| {
            alphas
                .iter()
                .filter(|a| a.order() > n)
                .map(|a| {
                    betas
                        .iter()
                        .filter_map(|g| {
                            b.checked_sub(g)?;
                            let r = a.checked_sub(g)?;
                            Some(3f64.powi(a.order() as i32) / r.factorial())
                        })
                        .fold(0.0, f64::max)
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let summability_bound = (3.0 * d as f64).exp() * ((n + 1) as f64).powi(d as i32) * 3f64.powi(n as i32);
    Ok(EstimateChain { n, truncation, samples: used, low, high, reach, summability, summability_bound })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecayRow {
    pub n: u32,
    pub beta: Vec<u32>,
    pub dist: f64,
    pub points: usize,
    /// `max |d^beta (E - E_n) f(x)| / dist(x, K)^(n - |beta|)` over the
    /// corpus and the points at this distance.
    pub ratio: f64,
}

/// Points at distance within 10% of `dist` from the cloud, found by
/// stepping off sampled boundary points.
pub fn points_at_distance(cloud: &PointCloud, dist: f64, cap: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = cloud.dim();
    let mut out = Vec::new();
    for &i in &cloud.boundary_sample(cap, seed) {
        let p = cloud.point(i);
        for u in directions(d, 16) {
            let x: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + dist * b).collect();
            let (_, r) = cloud.nearest(&x);
            if (r / dist - 1.0).abs() <= 0.1 {
                out.push(x);
            }
        }
    }
    out
}

/// The decay table of `E - E_n` near the set for every `n <= n_top` and
/// `|beta| <= n`.
pub fn closedgraph_proxy(op: &ExtensionOperator, jets: &[Arc<Jet>], n_top: u32, dists: &[f64], cap: usize, seed: u64) -> Result<Vec<DecayRow>> {
    let dec = op.decomposition();
    let cloud = dec.cloud();
    let full: Vec<PiecewiseExtension> = jets.iter().map(|j| op.apply(j.clone())).collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for n in 0..=n_top {
        let classic: Vec<PiecewiseExtension> =
            jets.iter().map(|j| crate::whitney::extend_finite(j.clone(), n, dec.clone())).collect::<Result<_>>()?;
        for &dist in dists {
            let pts = points_at_distance(cloud, dist, cap, seed);
            let mut worst = vec![0.0f64; multiindex::count_up_to(cloud.dim(), n as usize)];
            let mut used = 0;
            for x in &pts {
                let r = cloud.nearest(x).1;
                let mut ok = true;
                for (e, en) in full.iter().zip(&classic) {
                    let (a, b) = match (e.derivatives(x, n), en.derivatives(x, n)) {
                        (Ok(a), Ok(b)) => (a, b),
                        (Err(Error::NotCovered(_)), _) | (_, Err(Error::NotCovered(_))) => {
                            ok = false;
                            break;
                        }
                        (Err(e), _) | (_, Err(e)) => return Err(e),
                    };
                    for (k, beta) in multiindex::enumerate(cloud.dim(), n).iter().enumerate() {
                        let v = (a[k] - b[k]).abs() / r.powi((n - beta.order()) as i32);
                        worst[k] = worst[k].max(v);
                    }
                }
                if ok {
                    used += 1;
                }
            }
            for (k, beta) in multiindex::enumerate(cloud.dim(), n).iter().enumerate() {
                rows.push(DecayRow { n, beta: beta.entries().to_vec(), dist, points: used, ratio: worst[k] });
            }
        }
    }
    Ok(rows)
}
