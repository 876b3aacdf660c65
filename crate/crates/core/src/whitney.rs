//! Whitney cube decomposition of `Omega \ K`, its smooth partition of unity,
//! and extension operators of the form `sum_i phi_i(x) P_i(x)`.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jets::Jet;
use crate::multiindex::{self, MultiIndex};
use crate::sets::{dist, PointCloud};

/// Highest derivative order of the partition of unity.
pub const MAX_DERIVATIVE: u32 = 4;

/// Lattice points per axis on each support when estimating `c_beta`.
pub const C_BETA_LATTICE: usize = 9;

#[derive(Clone, Debug, Serialize)]
pub struct WhitneyCube {
    pub index: usize,
    pub level: u32,
    pub center: Vec<f64>,
    pub side: f64,
    /// Half-side of the dilated cube carrying the bump.
    pub support_radius: f64,
    /// Distance from the undilated cube to the cloud.
    pub dist_cube: f64,
    /// Cloud index of `x_i`, the point nearest to the support.
    pub nearest: usize,
    /// `gamma_i = dist(K, supp phi_i)`.
    pub gap: f64,
}

impl WhitneyCube {
    pub fn diam(&self) -> f64 {
        self.side * (self.center.len() as f64).sqrt()
    }

    pub fn support_diam(&self) -> f64 {
        2.0 * self.support_radius * (self.center.len() as f64).sqrt()
    }

    pub fn in_support(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() < self.support_radius)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DecomposeOptions {
    /// `Omega = [-half_width, half_width]^d`.
    pub half_width: f64,
    /// Support dilation: supports are `(1 + theta) Q`.
    pub theta: f64,
    /// Smallest admissible cube side; defaults to twice the cloud resolution.
    pub min_side: Option<f64>,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { half_width: 0.5, theta: 0.25, min_side: None }
    }
}

#[derive(Debug)]
pub struct WhitneyDecomposition {
    cloud: Arc<PointCloud>,
    half_width: f64,
    theta: f64,
    min_side: f64,
    cubes: Vec<WhitneyCube>,
    lookup: HashMap<(u32, Vec<i64>), usize>,
    levels: (u32, u32),
    collar_width: f64,
    dropped: usize,
    leibniz: [OnceLock<Leibniz>; MAX_DERIVATIVE as usize + 1],
}

/// Dyadic cubes `Q` of `Omega` with `2 diam Q <= dist(Q, K)`, maximal among
/// their ancestors and no smaller than the resolution floor. Parents are
/// rejected, so `dist(Q, K) < 6 diam Q` as well.
pub fn decompose(cloud: Arc<PointCloud>, opts: &DecomposeOptions) -> Result<WhitneyDecomposition> {
    let d = cloud.dim();
    let a = opts.half_width;
    let reach = cloud.coords().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(a > reach) || !(opts.theta > 0.0 && opts.theta < 1.0) {
        return Err(Error::DomainTooSmall);
    }
    let min_side = opts.min_side.unwrap_or(2.0 * cloud.resolution());
    if !(min_side > 0.0) {
        return Err(Error::InvalidInput("minimum cube side must be positive".into()));
    }
    let mut found = Vec::new();
    let mut dropped = 0;
    let mut stack: Vec<(u32, Vec<i64>)> = vec![(0, vec![0; d])];
    while let Some((level, k)) = stack.pop() {
        let side = 2.0 * a / (1u64 << level) as f64;
        let lo: Vec<f64> = k.iter().map(|&c| -a + c as f64 * side).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + side).collect();
        let (_, dq) = cloud.nearest_to_box(&lo, &hi);
        let diam = side * (d as f64).sqrt();
        if dq >= 2.0 * diam {
            found.push((level, k, lo, side, dq));
        } else if side / 2.0 >= min_side * (1.0 - 1e-12) {
            for child in 0..(1usize << d) {
                let kc: Vec<i64> = (0..d).map(|j| 2 * k[j] + ((child >> j) & 1) as i64).collect();
                stack.push((level + 1, kc));
            }
        } else {
            dropped += 1;
        }
    }
    found.sort_by(|x, y| x.0.cmp(&y.0).then_with(|| x.1.cmp(&y.1)));
    let mut cubes = Vec::with_capacity(found.len());
    let mut lookup = HashMap::with_capacity(found.len());
    for (index, (level, k, lo, side, dq)) in found.into_iter().enumerate() {
        let center: Vec<f64> = lo.iter().map(|v| v + side / 2.0).collect();
        let r = (1.0 + opts.theta) * side / 2.0;
        let slo: Vec<f64> = center.iter().map(|c| c - r).collect();
        let shi: Vec<f64> = center.iter().map(|c| c + r).collect();
        let (nearest, gap) = cloud.nearest_to_box(&slo, &shi);
        lookup.insert((level, k), index);
        cubes.push(WhitneyCube { index, level, center, side, support_radius: r, dist_cube: dq, nearest, gap });
    }
    if cubes.is_empty() {
        return Err(Error::DomainTooSmall);
    }
    let levels = (cubes.first().expect("nonempty").level, cubes.last().expect("nonempty").level);
    let finest = 2.0 * a / (1u64 << levels.1.max(1)) as f64;
    let collar_width = if dropped > 0 { 3.0 * finest.min(2.0 * a) * (d as f64).sqrt() } else { 0.0 };
    Ok(WhitneyDecomposition {
        cloud,
        half_width: a,
        theta: opts.theta,
        min_side,
        cubes,
        lookup,
        levels,
        collar_width,
        dropped,
        leibniz: Default::default(),
    })
}

/// Coefficients of `q_k` with `b^(k)(t) = q_k(t) (1 - t^2)^(-2k) b(t)` for
/// `b(t) = exp(-1 / (1 - t^2))`.
fn bump_polys() -> &'static Vec<Vec<f64>> {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mul = |a: &[f64], b: &[f64]| {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        };
        let add = |a: &mut Vec<f64>, b: &[f64]| {
            if a.len() < b.len() {
                a.resize(b.len(), 0.0);
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        };
        let u = [1.0, 0.0, -1.0];
        let u2 = mul(&u, &u);
        let mut out = vec![vec![1.0]];
        for k in 0..MAX_DERIVATIVE as usize {
            let q = &out[k];
            // q_{k+1} = u^2 q' + 4 k t u q - 2 t q
            let dq: Vec<f64> = if q.len() > 1 { q[1..].iter().enumerate().map(|(i, c)| (i + 1) as f64 * c).collect() } else { vec![0.0] };
            let mut next = mul(&u2, &dq);
            add(&mut next, &mul(&mul(&[0.0, 4.0 * k as f64], &u), q));
            add(&mut next, &mul(&[0.0, -2.0], q));
            out.push(next);
        }
        out
    })
}

/// `b^(k)(t)` for `k = 0..=m`; all zero for `|t| >= 1`.
fn bump_derivs(t: f64, m: usize, out: &mut [f64]) {
    let u = 1.0 - t * t;
    if u <= 0.0 {
        out[..=m].iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let b = (-1.0 / u).exp();
    let polys = bump_polys();
    let inv = 1.0 / (u * u);
    let mut scale = b;
    for k in 0..=m {
        let q = polys[k].iter().rev().fold(0.0, |acc, c| acc * t + c);
        out[k] = q * scale;
        scale *= inv;
    }
}

/// Index tables for Leibniz sums over graded-lex bases up to order `m`.
#[derive(Debug)]
struct Leibniz {
    basis: Vec<MultiIndex>,
    // for each beta: (rank gamma, rank beta - gamma, binom(beta, gamma))
    pairs: Vec<Vec<(usize, usize, f64)>>,
}

impl Leibniz {
    fn new(dim: usize, m: u32) -> Self {
        let basis = multiindex::enumerate(dim, m);
        let pairs = basis
            .iter()
            .map(|b| {
                b.lower_set()
                    .into_iter()
                    .map(|g| {
                        let rest = b.checked_sub(&g).expect("lower set");
                        (g.rank(), rest.rank(), b.binomial(&g))
                    })
                    .collect()
            })
            .collect();
        Leibniz { basis, pairs }
    }
}

/// Derivatives of one partition function at a point.
#[derive(Clone, Debug)]
pub struct ActiveCube {
    pub cube: usize,
    /// `d^beta phi_i(x)` for `|beta| <= m`, graded-lex.
    pub dphi: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PartitionReport {
    pub samples: usize,
    pub cubes: usize,
    pub max_sum_error: f64,
    pub overlap: usize,
    /// `max diam(supp phi_i) / dist(supp phi_i, K)`.
    pub support_ratio: f64,
    /// `sup |d^beta phi_i(x)| dist(x, K)^|beta|` per `beta`, graded-lex, over
    /// the support lattice.
    pub c_beta: Vec<(String, f64)>,
    pub lattice_points: usize,
    /// `max |x - x_i| / gamma_i` over sampled support points.
    pub reach_ratio: f64,
    /// `max |dist(x_i, supp phi_i) - gamma_i|`.
    pub gap_realization: f64,
    pub collar_width: f64,
    pub seed: u64,
}

impl WhitneyDecomposition {
    pub fn cloud(&self) -> &Arc<PointCloud> {
        &self.cloud
    }

    pub fn cubes(&self) -> &[WhitneyCube] {
        &self.cubes
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn min_side(&self) -> f64 {
        self.min_side
    }

    /// `per_axis` points per axis over the support of every cube, at the same
    /// relative positions in each cube.
    pub fn support_lattice(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let m = per_axis.max(1);
        let total = m.pow(self.cloud.dim() as u32);
        let mut out = Vec::with_capacity(total * self.cubes.len());
        for c in &self.cubes {
            for k in 0..total {
                let mut rem = k;
                let p = c
                    .center
                    .iter()
                    .map(|&x| {
                        let t = (2 * (rem % m) + 1) as f64 / m as f64 - 1.0;
                        rem /= m;
                        x + t * c.support_radius
                    })
                    .collect();
                out.push(p);
            }
        }
        out
    }

    /// Points closer to `K` than this may be uncovered.
    pub fn collar_width(&self) -> f64 {
        self.collar_width
    }

    /// Cubes discarded at the resolution floor.
    pub fn dropped(&self) -> usize {
        self.dropped
    }

    fn leibniz(&self, m: u32) -> &Leibniz {
        self.leibniz[m as usize].get_or_init(|| Leibniz::new(self.cloud.dim(), m))
    }

    /// Cubes whose open support contains `x`.
    pub fn active(&self, x: &[f64]) -> Vec<usize> {
        let d = self.cloud.dim();
        let a = self.half_width;
        let mut out = Vec::new();
        if x.len() != d || x.iter().any(|v| v.abs() > a) {
            return out;
        }
        let mut key = vec![0i64; d];
        for level in self.levels.0..=self.levels.1 {
            let side = 2.0 * a / (1u64 << level) as f64;
            let base: Vec<i64> = x.iter().map(|v| ((v + a) / side).floor() as i64).collect();
            for off in 0..3usize.pow(d as u32) {
                let mut o = off;
                for j in 0..d {
                    key[j] = base[j] + (o % 3) as i64 - 1;
                    o /= 3;
                }
                if let Some(&i) = self.lookup.get(&(level, key.clone())) {
                    if self.cubes[i].in_support(x) {
                        out.push(i);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// `phi_i` and its derivatives up to order `m` for every active cube.
    pub fn partition_at(&self, x: &[f64], m: u32) -> Result<Vec<ActiveCube>> {
        if m > MAX_DERIVATIVE {
            return Err(Error::OrderTooHigh { requested: m, max: MAX_DERIVATIVE });
        }
        let active = self.active(x);
        if active.is_empty() {
            return Err(Error::NotCovered(x.to_vec()));
        }
        let d = self.cloud.dim();
        let lb = self.leibniz(m);
        let nb = lb.basis.len();
        let mu = m as usize;
        let mut one_d = vec![0.0; (mu + 1) * d];
        let mut psi: Vec<Vec<f64>> = Vec::with_capacity(active.len());
        for &i in &active {
            let c = &self.cubes[i];
            let r = c.support_radius;
            for j in 0..d {
                let t = (x[j] - c.center[j]) / r;
                bump_derivs(t, mu, &mut one_d[j * (mu + 1)..(j + 1) * (mu + 1)]);
                let mut s = 1.0;
                for k in 0..=mu {
                    one_d[j * (mu + 1) + k] *= s;
                    s /= r;
                }
            }
            psi.push(
                lb.basis
                    .iter()
                    .map(|b| b.entries().iter().enumerate().map(|(j, &e)| one_d[j * (mu + 1) + e as usize]).product())
                    .collect(),
            );
        }
        let mut sum = vec![0.0; nb];
        for p in &psi {
            for (s, v) in sum.iter_mut().zip(p) {
                *s += v;
            }
        }
        if !(sum[0] > 0.0) {
            return Err(Error::NotCovered(x.to_vec()));
        }
        let mut out = Vec::with_capacity(active.len());
        for (&i, p) in active.iter().zip(&psi) {
            // phi S = psi, solved for d^beta phi in graded order
            let mut dphi = vec![0.0; nb];
            for b in 0..nb {
                let mut acc = p[b];
                for &(g, rest, binom) in &lb.pairs[b] {
                    if g != b {
                        acc -= binom * dphi[g] * sum[rest];
                    }
                }
                dphi[b] = acc / sum[0];
            }
            out.push(ActiveCube { cube: i, dphi });
        }
        Ok(out)
    }

    /// Uniform samples of `Omega` that some support covers.
    pub fn collar_samples(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let d = self.cloud.dim();
        let a = self.half_width;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let mut tries = 0usize;
        while out.len() < count && tries < 200 * count.max(1) {
            tries += 1;
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-a..a)).collect();
            if !self.active(&x).is_empty() {
                out.push(x);
            }
        }
        out
    }

    /// Measures the partition properties on `samples` collar points.
    pub fn verify_partition(&self, samples: usize, seed: u64) -> Result<PartitionReport> {
        let d = self.cloud.dim();
        let m = 3;
        let lb = self.leibniz(m);
        let pts = self.collar_samples(samples, seed);
        let mut max_sum_error: f64 = 0.0;
        let mut overlap = 0;
        let mut reach_ratio: f64 = 0.0;
        for x in &pts {
            let act = self.partition_at(x, m)?;
            overlap = overlap.max(act.len());
            let s: f64 = act.iter().map(|a| a.dphi[0]).sum();
            max_sum_error = max_sum_error.max((s - 1.0).abs());
            for a in &act {
                let c = &self.cubes[a.cube];
                reach_ratio = reach_ratio.max(dist(x, self.cloud.point(c.nearest)) / c.gap);
            }
        }
        let mut c_beta = vec![0.0f64; lb.basis.len()];
        let lattice = self.support_lattice(C_BETA_LATTICE);
        for x in &lattice {
            let Ok(act) = self.partition_at(x, m) else { continue };
            let dk = self.cloud.nearest(x).1;
            for a in &act {
                for (k, b) in lb.basis.iter().enumerate() {
                    c_beta[k] = c_beta[k].max(a.dphi[k].abs() * dk.powi(b.order() as i32));
                }
            }
        }
        let mut support_ratio: f64 = 0.0;
        let mut gap_realization: f64 = 0.0;
        for c in &self.cubes {
            support_ratio = support_ratio.max(c.support_diam() / c.gap);
            let xi = self.cloud.point(c.nearest);
            let dd: f64 = (0..d)
                .map(|j| ((c.center[j] - c.support_radius) - xi[j]).max(xi[j] - (c.center[j] + c.support_radius)).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt();
            gap_realization = gap_realization.max((dd - c.gap).abs());
        }
        Ok(PartitionReport {
            samples: pts.len(),
            cubes: self.cubes.len(),
            max_sum_error,
            overlap,
            support_ratio,
            c_beta: lb.basis.iter().map(|b| b.to_string()).zip(c_beta).collect(),
            lattice_points: lattice.len(),
            reach_ratio,
            gap_realization,
            collar_width: self.collar_width,
            seed,
        })
    }

    /// CSV of `(i, center, side, x_i, gamma_i)`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.cloud.dim();
        let names = ["x", "y", "z"];
        let mut header = vec!["i".to_string()];
        header.extend((0..d).map(|j| format!("center_{}", names[j])));
        header.push("side".into());
        header.extend((0..d).map(|j| format!("nearest_{}", names[j])));
        header.push("gap".into());
        writeln!(w, "{}", header.join(","))?;
        for c in &self.cubes {
            let mut row = vec![c.index.to_string()];
            row.extend(c.center.iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", c.side));
            row.extend(self.cloud.point(c.nearest).iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", c.gap));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Polynomial `sum_alpha c_alpha (x - center)^alpha` in graded-lex order.
#[derive(Clone, Debug)]
pub struct LocalPoly {
    pub center: Vec<f64>,
    pub coeffs: Vec<f64>,
}

/// `x -> sum_i phi_i(x) P_i(x)` off `K` and the jet on `K`.
#[derive(Debug)]
pub struct PiecewiseExtension {
    dec: Arc<WhitneyDecomposition>,
    jet: Arc<Jet>,
    degree: u32,
    polys: Vec<LocalPoly>,
}

/// Value and derivatives `d^beta E(x)`, `|beta| <= order`, graded-lex.
pub trait Extension {
    fn derivatives(&self, x: &[f64], order: u32) -> Result<Vec<f64>>;

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.derivatives(x, 0)?[0])
    }
}

impl PiecewiseExtension {
    pub fn new(dec: Arc<WhitneyDecomposition>, jet: Arc<Jet>, degree: u32, polys: Vec<LocalPoly>) -> Result<Self> {
        if polys.len() != dec.cubes().len() {
            return Err(Error::DimensionMismatch { expected: dec.cubes().len(), found: polys.len() });
        }
        if !Arc::ptr_eq(jet.carrier(), dec.cloud()) {
            return Err(Error::InvalidInput("jet and decomposition use different clouds".into()));
        }
        let nb = multiindex::count_up_to(dec.cloud().dim(), degree as usize);
        if polys.iter().any(|p| p.coeffs.len() != nb) {
            return Err(Error::InvalidInput("local polynomial of the wrong size".into()));
        }
        Ok(PiecewiseExtension { dec, jet, degree, polys })
    }

    pub fn decomposition(&self) -> &Arc<WhitneyDecomposition> {
        &self.dec
    }

    pub fn polys(&self) -> &[LocalPoly] {
        &self.polys
    }
}

impl Extension for PiecewiseExtension {
    fn derivatives(&self, x: &[f64], order: u32) -> Result<Vec<f64>> {
        let d = self.dec.cloud().dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: x.len() });
        }
        let nb = multiindex::count_up_to(d, order as usize);
        if let Some(i) = self.jet.carrier().find(x) {
            let v = self.jet.at(i);
            return Ok((0..nb).map(|k| v.get(k).copied().unwrap_or(f64::NAN)).collect());
        }
        let act = self.dec.partition_at(x, order)?;
        let lb = self.dec.leibniz(order);
        let plan = derivative_plan(d, self.degree, order);
        let mut out = vec![0.0; nb];
        let mut dp = vec![0.0; nb];
        let mut mono = Vec::new();
        for a in &act {
            let p = &self.polys[a.cube];
            local_derivatives(p, x, &plan, &mut mono, &mut dp);
            for (b, o) in out.iter_mut().enumerate() {
                for &(g, rest, binom) in &lb.pairs[b] {
                    *o += binom * a.dphi[g] * dp[rest];
                }
            }
        }
        Ok(out)
    }
}

struct DerivativePlan {
    basis: Vec<MultiIndex>,
    // for each beta: (rank alpha, rank alpha - beta, alpha! / (alpha - beta)!)
    terms: Vec<Vec<(usize, usize, f64)>>,
}

fn derivative_plan(dim: usize, degree: u32, order: u32) -> Arc<DerivativePlan> {
    use std::sync::Mutex;
    static CACHE: OnceLock<Mutex<HashMap<(usize, u32, u32), Arc<DerivativePlan>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("plan cache");
    guard
        .entry((dim, degree, order))
        .or_insert_with(|| {
            let basis = multiindex::enumerate(dim, degree);
            let terms = multiindex::enumerate(dim, order)
                .iter()
                .map(|b| {
                    basis
                        .iter()
                        .filter_map(|a| a.checked_sub(b).map(|rest| (a.rank(), rest.rank(), a.factorial() / rest.factorial())))
                        .collect()
                })
                .collect();
            Arc::new(DerivativePlan { basis, terms })
        })
        .clone()
}

fn local_derivatives(p: &LocalPoly, x: &[f64], plan: &DerivativePlan, mono: &mut Vec<f64>, out: &mut [f64]) {
    let z: Vec<f64> = x.iter().zip(&p.center).map(|(a, c)| a - c).collect();
    mono.clear();
    mono.extend(plan.basis.iter().map(|a| a.monomial(&z)));
    for (b, o) in out.iter_mut().enumerate() {
        *o = plan.terms[b].iter().map(|&(a, rest, f)| p.coeffs[a] * f * mono[rest]).sum();
    }
}

/// The classical operator `E_n`: on each cube the order-`n` Taylor polynomial
/// of the jet at `x_i`.
pub fn extend_finite(jet: Arc<Jet>, n: u32, dec: Arc<WhitneyDecomposition>) -> Result<PiecewiseExtension> {
    if n > jet.order() {
        return Err(Error::OrderTooHigh { requested: n, max: jet.order() });
    }
    let nb = multiindex::count_up_to(dec.cloud().dim(), n as usize);
    let basis = multiindex::enumerate(dec.cloud().dim(), n);
    let polys = dec
        .cubes()
        .iter()
        .map(|c| {
            let v = jet.at(c.nearest);
            LocalPoly {
                center: dec.cloud().point(c.nearest).to_vec(),
                coeffs: (0..nb).map(|k| v[k] / basis[k].factorial()).collect(),
            }
        })
        .collect();
    PiecewiseExtension::new(dec, jet, n, polys)
}
