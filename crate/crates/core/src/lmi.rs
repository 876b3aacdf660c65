//! Checks of the local Markov inequality LMI(1): the affine-hull spanning
//! constant, the band criterion, polynomial Markov factors by linear
//! programming, and the sweep that turns them into a verdict.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{min_l1_combination, LpStatus};
use crate::multiindex::{self, MultiIndex};
use crate::sets::{dist, dist_to_affine_hull, Discretization, PointCloud};
use crate::stats::{fit_log_log, LineFit};

/// Balls with more points are subsampled before building Markov LPs.
pub const LP_POINT_CAP: usize = 4000;
/// Largest ball handled by the exhaustive spanning search.
pub const EXHAUSTIVE_LIMIT: usize = 60;
const BAND_SAMPLES: usize = 3600;
const EXACT_BAND_HULL: usize = 400;

#[derive(Clone, Debug, Serialize)]
pub struct SpanningResult {
    pub x0: Vec<f64>,
    pub eps: f64,
    /// Lower bound on the best spanning constant at `(x0, eps)`.
    pub rho_span: f64,
    pub witnesses: Vec<Vec<f64>>,
    pub step_distances: Vec<f64>,
    /// Fewer than `d + 1` points in the ball.
    pub degenerate: bool,
    pub ball_size: usize,
}

fn ball_points(cloud: &PointCloud, x0: &[f64], eps: f64) -> Vec<usize> {
    cloud.ball_indices(x0, eps).into_iter().filter(|&i| dist(cloud.point(i), x0) > 0.0).collect()
}

fn degenerate(x0: &[f64], eps: f64, ball_size: usize) -> SpanningResult {
    SpanningResult {
        x0: x0.to_vec(),
        eps,
        rho_span: 0.0,
        witnesses: Vec::new(),
        step_distances: Vec::new(),
        degenerate: true,
        ball_size,
    }
}

fn finish(cloud: &PointCloud, x0: &[f64], eps: f64, ball_size: usize, picks: &[usize], steps: Vec<f64>) -> SpanningResult {
    let m = steps.iter().copied().fold(f64::INFINITY, f64::min);
    SpanningResult {
        x0: x0.to_vec(),
        eps,
        rho_span: (m / eps).min(1.0),
        witnesses: picks.iter().map(|&i| cloud.point(i).to_vec()).collect(),
        step_distances: steps,
        degenerate: false,
        ball_size,
    }
}

/// Witnesses for the spanning constant. In the plane the maximin is exact: the
/// second step is the largest distance to the line through `x0` and the first
/// witness, which a hull vertex attains, so every first witness is tried. In
/// other dimensions greedy farthest-from-hull runs restart from several first
/// picks and the best run wins.
pub fn spanning_rho(cloud: &PointCloud, x0: &[f64], eps: f64) -> SpanningResult {
    let d = cloud.dim();
    let ball = ball_points(cloud, x0, eps);
    if ball.len() < d {
        return degenerate(x0, eps, ball.len() + 1);
    }
    if d == 2 {
        return planar_spanning(cloud, x0, eps, &ball);
    }
    let starts = first_picks(cloud, x0, &ball);
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for s in starts {
        let mut picks = vec![s];
        let mut steps = vec![dist(cloud.point(s), x0)];
        while picks.len() < d {
            let anchors: Vec<&[f64]> =
                std::iter::once(x0).chain(picks.iter().map(|&i| cloud.point(i))).collect();
            let (mut bi, mut bd) = (usize::MAX, -1.0);
            for &i in &ball {
                let v = dist_to_affine_hull(cloud.point(i), &anchors);
                if v > bd {
                    bi = i;
                    bd = v;
                }
            }
            picks.push(bi);
            steps.push(bd);
        }
        let m = steps.iter().copied().fold(f64::INFINITY, f64::min);
        if best.as_ref().map_or(true, |b| m > b.0) {
            best = Some((m, picks, steps));
        }
    }
    let (_, picks, steps) = best.expect("at least one start");
    finish(cloud, x0, eps, ball.len() + 1, &picks, steps)
}

fn planar_spanning(cloud: &PointCloud, x0: &[f64], eps: f64, ball: &[usize]) -> SpanningResult {
    let rel = |i: usize| {
        let p = cloud.point(i);
        [p[0] - x0[0], p[1] - x0[1]]
    };
    let pts: Vec<Vec<f64>> = ball.iter().map(|&i| rel(i).to_vec()).collect();
    let hull = convex_hull(&pts);
    let off_line = |u: [f64; 2], v: [f64; 2]| (u[0] * v[1] - u[1] * v[0]).abs();
    let (mut best, mut first) = (-1.0, ball[0]);
    for &i in ball {
        let u = rel(i);
        let r = u[0].hypot(u[1]);
        if r <= best {
            continue;
        }
        let unit = [u[0] / r, u[1] / r];
        let second = hull.iter().map(|&v| off_line(unit, v)).fold(0.0, f64::max);
        if r.min(second) > best {
            best = r.min(second);
            first = i;
        }
    }
    let u = rel(first);
    let r = u[0].hypot(u[1]);
    let unit = [u[0] / r, u[1] / r];
    let second = *ball
        .iter()
        .max_by(|&&a, &&b| off_line(unit, rel(a)).total_cmp(&off_line(unit, rel(b))))
        .expect("nonempty ball");
    let step = off_line(unit, rel(second));
    finish(cloud, x0, eps, ball.len() + 1, &[first, second], vec![r, step])
}

fn first_picks(cloud: &PointCloud, x0: &[f64], ball: &[usize]) -> Vec<usize> {
    let far = |i: usize| dist(cloud.point(i), x0);
    let global = *ball.iter().max_by(|&&a, &&b| far(a).total_cmp(&far(b))).expect("nonempty ball");
    match cloud.dim() {
        1 => vec![global],
        _ => {
            let mut sorted = ball.to_vec();
            sorted.sort_by(|&a, &b| far(b).total_cmp(&far(a)));
            sorted.truncate(16);
            sorted
        }
    }
}

/// Exact maximin over all ordered witness tuples; for balls of at most
/// [`EXHAUSTIVE_LIMIT`] points.
pub fn spanning_rho_exhaustive(cloud: &PointCloud, x0: &[f64], eps: f64) -> Result<SpanningResult> {
    let d = cloud.dim();
    let ball = ball_points(cloud, x0, eps);
    if ball.len() + 1 > EXHAUSTIVE_LIMIT {
        return Err(Error::InvalidInput(format!(
            "exhaustive search limited to {EXHAUSTIVE_LIMIT} points, ball has {}",
            ball.len() + 1
        )));
    }
    if ball.len() < d {
        return Ok(degenerate(x0, eps, ball.len() + 1));
    }
    struct Search<'a> {
        cloud: &'a PointCloud,
        x0: &'a [f64],
        ball: &'a [usize],
        d: usize,
        best: f64,
        best_picks: Vec<usize>,
        best_steps: Vec<f64>,
    }
    fn rec(s: &mut Search, picks: &mut Vec<usize>, steps: &mut Vec<f64>, cur: f64) {
        if picks.len() == s.d {
            if cur > s.best {
                s.best = cur;
                s.best_picks = picks.clone();
                s.best_steps = steps.clone();
            }
            return;
        }
        for &i in s.ball {
            if picks.contains(&i) {
                continue;
            }
            let anchors: Vec<&[f64]> =
                std::iter::once(s.x0).chain(picks.iter().map(|&j| s.cloud.point(j))).collect();
            let v = dist_to_affine_hull(s.cloud.point(i), &anchors);
            let next = cur.min(v);
            if next <= s.best {
                continue;
            }
            picks.push(i);
            steps.push(v);
            rec(s, picks, steps, next);
            picks.pop();
            steps.pop();
        }
    }
    let mut s = Search { cloud, x0, ball: &ball, d, best: -1.0, best_picks: Vec::new(), best_steps: Vec::new() };
    rec(&mut s, &mut Vec::new(), &mut Vec::new(), f64::INFINITY);
    let (picks, steps) = (s.best_picks.clone(), s.best_steps.clone());
    Ok(finish(cloud, x0, eps, ball.len() + 1, &picks, steps))
}

/// Half-width of the thinnest slab through `x0` containing `K ∩ B(x0, eps)`.
pub fn band_width(cloud: &PointCloud, x0: &[f64], eps: f64) -> f64 {
    let ball = ball_points(cloud, x0, eps);
    if ball.is_empty() {
        return 0.0;
    }
    let rel: Vec<Vec<f64>> =
        ball.iter().map(|&i| cloud.point(i).iter().zip(x0).map(|(a, b)| a - b).collect()).collect();
    match cloud.dim() {
        1 => rel.iter().map(|v| v[0].abs()).fold(0.0, f64::max),
        2 => {
            let hull = convex_hull(&rel);
            let width = |t: f64| {
                let (s, c) = t.sin_cos();
                hull.iter().map(|v| (c * v[0] + s * v[1]).abs()).fold(0.0, f64::max)
            };
            if hull.len() <= EXACT_BAND_HULL {
                // the envelope minimum sits where b is normal to v, u - v or u + v
                let width_normal_to = |n: [f64; 2]| {
                    let r = n[0].hypot(n[1]);
                    if r == 0.0 {
                        return f64::INFINITY;
                    }
                    hull.iter().map(|v| (-n[1] * v[0] + n[0] * v[1]).abs() / r).fold(0.0, f64::max)
                };
                let mut best = f64::INFINITY;
                for (a, u) in hull.iter().enumerate() {
                    best = best.min(width_normal_to(*u));
                    for v in &hull[a + 1..] {
                        best = best.min(width_normal_to([u[0] - v[0], u[1] - v[1]]));
                        best = best.min(width_normal_to([u[0] + v[0], u[1] + v[1]]));
                    }
                }
                return best;
            }
            let step = std::f64::consts::PI / BAND_SAMPLES as f64;
            let (mut bt, mut bw) = (0.0, f64::INFINITY);
            for k in 0..BAND_SAMPLES {
                let t = k as f64 * step;
                let w = width(t);
                if w < bw {
                    bt = t;
                    bw = w;
                }
            }
            golden_min(width, bt - step, bt + step, 1e-13).1.min(bw)
        }
        _ => {
            // directions on a latitude-longitude grid
            let mut best = f64::INFINITY;
            let n = 180;
            for a in 0..n {
                let th = a as f64 * std::f64::consts::PI / n as f64;
                for b in 0..2 * n {
                    let ph = b as f64 * std::f64::consts::PI / n as f64;
                    let dir = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                    let w = rel.iter().map(|v| (dir[0] * v[0] + dir[1] * v[1] + dir[2] * v[2]).abs()).fold(0.0, f64::max);
                    best = best.min(w);
                }
            }
            best
        }
    }
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

fn convex_hull(pts: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let mut p: Vec<[f64; 2]> = pts.iter().map(|v| [v[0], v[1]]).collect();
    p.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovResult {
    pub x0: Vec<f64>,
    pub eps: f64,
    pub degree: u32,
    /// `max_j sup |d_j P(x0)|` over `|P| <= 1` on the sampled ball; infinite
    /// when unbounded.
    pub factor: f64,
    pub direction: usize,
    pub unbounded: bool,
    /// Extremal coefficients in the local variable `z = (y - x0) / eps`,
    /// graded-lex.
    pub extremal: Vec<f64>,
    /// The Euclidean gradient supremum is at most this factor times `factor`.
    pub sqrt_d: f64,
    pub constraint_points: usize,
    pub sampled: bool,
}

struct Constraints {
    pts: Vec<usize>,
    sampled: bool,
}

fn constraint_points(cloud: &PointCloud, x0: &[f64], eps: f64, seed: u64) -> Constraints {
    let ball = cloud.ball_indices(x0, eps);
    if ball.len() <= LP_POINT_CAP {
        return Constraints { pts: ball, sampled: false };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<usize> = sample(&mut rng, ball.len(), LP_POINT_CAP).into_iter().map(|k| ball[k]).collect();
    for dir in extreme_directions(cloud.dim()) {
        let proj = |i: usize| cloud.point(i).iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>();
        let best = *ball.iter().max_by(|&&a, &&b| proj(a).total_cmp(&proj(b))).expect("nonempty");
        pts.push(best);
    }
    if let Some(i) = cloud.find(x0) {
        pts.push(i);
    }
    pts.sort_unstable();
    pts.dedup();
    Constraints { pts, sampled: true }
}

fn extreme_directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 16.0;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::new();
            for j in 0..d {
                for s in [-1.0, 1.0] {
                    let mut e = vec![0.0; d];
                    e[j] = s;
                    out.push(e);
                }
            }
            for mask in 0..(1 << d) {
                out.push((0..d).map(|j| if mask >> j & 1 == 1 { 1.0 } else { -1.0 } / (d as f64).sqrt()).collect());
            }
            out
        }
    }
}

const SUBSAMPLE_SEED: u64 = 0x1b_0001;

/// One LP: `sup |d^alpha P(x0)|` over degree-`k` polynomials with `|P| <= 1`
/// at the constraint points, solved in its dual moment form
/// `min sum |w_i|` subject to `sum w_i z_i^beta = [beta = alpha]`.
struct FunctionalLp {
    value: f64,
    unbounded: bool,
    extremal: Vec<f64>,
}

fn functional_lp(cloud: &PointCloud, x0: &[f64], eps: f64, k: u32, alpha: &MultiIndex, cons: &Constraints) -> Result<FunctionalLp> {
    let basis = multiindex::enumerate(cloud.dim(), k);
    let rows = basis.len();
    let mut cols = Vec::with_capacity(rows * cons.pts.len());
    let mut z = vec![0.0; cloud.dim()];
    for &i in &cons.pts {
        for (zj, (p, c)) in z.iter_mut().zip(cloud.point(i).iter().zip(x0)) {
            *zj = (p - c) / eps;
        }
        cols.extend(basis.iter().map(|b| b.monomial(&z)));
    }
    let mut target = vec![0.0; rows];
    target[alpha.rank()] = 1.0;
    let out = min_l1_combination(rows, &cols, &vec![1.0; cons.pts.len()], &target)?;
    match out.status {
        LpStatus::Optimal => {
            let scale = alpha.factorial() / eps.powi(alpha.order() as i32);
            Ok(FunctionalLp { value: out.value * scale, unbounded: false, extremal: out.duals })
        }
        _ => Ok(FunctionalLp { value: f64::INFINITY, unbounded: true, extremal: Vec::new() }),
    }
}

fn check_ball(cloud: &PointCloud, x0: &[f64], eps: f64) -> Result<()> {
    if x0.len() != cloud.dim() {
        return Err(Error::DimensionMismatch { expected: cloud.dim(), found: x0.len() });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("radius {eps} must be positive")));
    }
    Ok(())
}

/// Markov factor of degree `k` at `(x0, eps)`: the largest coordinate-wise
/// LP bound on the gradient at `x0`.
pub fn markov_factor(cloud: &PointCloud, x0: &[f64], eps: f64, k: u32) -> Result<MarkovResult> {
    check_ball(cloud, x0, eps)?;
    let d = cloud.dim();
    let cons = constraint_points(cloud, x0, eps, SUBSAMPLE_SEED);
    let mut res = MarkovResult {
        x0: x0.to_vec(),
        eps,
        degree: k,
        factor: 0.0,
        direction: 0,
        unbounded: false,
        extremal: vec![0.0; multiindex::count_up_to(d, k as usize)],
        sqrt_d: (d as f64).sqrt(),
        constraint_points: cons.pts.len(),
        sampled: cons.sampled,
    };
    if k == 0 {
        res.extremal[0] = 1.0;
        return Ok(res);
    }
    if cons.pts.is_empty() {
        return Err(Error::InvalidInput("empty ball".into()));
    }
    for j in 0..d {
        let lp = functional_lp(cloud, x0, eps, k, &MultiIndex::unit(d, j), &cons)?;
        if lp.unbounded {
            res.factor = f64::INFINITY;
            res.direction = j;
            res.unbounded = true;
            res.extremal.clear();
            return Ok(res);
        }
        if lp.value > res.factor {
            res.factor = lp.value;
            res.direction = j;
            res.extremal = lp.extremal;
        }
    }
    Ok(res)
}

/// `sup |d^alpha P(x0)|` over degree-`k` polynomials bounded by 1 on the
/// sampled ball; infinite when the LP is unbounded.
pub fn higher_order_markov_factor(cloud: &PointCloud, x0: &[f64], eps: f64, k: u32, alpha: &MultiIndex) -> Result<f64> {
    check_ball(cloud, x0, eps)?;
    if alpha.dim() != cloud.dim() {
        return Err(Error::DimensionMismatch { expected: cloud.dim(), found: alpha.dim() });
    }
    if alpha.order() > k {
        return Err(Error::OrderTooHigh { requested: alpha.order(), max: k });
    }
    let cons = constraint_points(cloud, x0, eps, SUBSAMPLE_SEED);
    if cons.pts.is_empty() {
        return Err(Error::InvalidInput("empty ball".into()));
    }
    Ok(functional_lp(cloud, x0, eps, k, alpha, &cons)?.value)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentFit {
    pub eps: Vec<f64>,
    /// Worst-case factor over the probed points, per ladder value.
    pub factors: Vec<f64>,
    /// Slope of `log M` against `log(1/eps)`; `None` when inconclusive.
    pub fit: Option<LineFit>,
    pub inconclusive: bool,
    pub points: usize,
}

/// Fits `log M(eps)` against `log(1/eps)` with `M` the worst Markov factor over
/// the given points.
pub fn markov_exponent(cloud: &PointCloud, k: u32, ladder: &[f64], points: &[usize]) -> Result<ExponentFit> {
    if ladder.len() < 2 {
        return Err(Error::UnderdeterminedFit(ladder.len()));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no probe points".into()));
    }
    let mut factors = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let mut worst: f64 = 0.0;
        for &i in points {
            worst = worst.max(markov_factor(cloud, cloud.point(i), eps, k)?.factor);
        }
        factors.push(worst);
    }
    let inconclusive = factors.iter().any(|f| !f.is_finite() || *f <= 0.0);
    let fit = if inconclusive {
        None
    } else {
        let inv: Vec<f64> = ladder.iter().map(|e| 1.0 / e).collect();
        Some(fit_log_log(&inv, &factors)?)
    };
    Ok(ExponentFit { eps: ladder.to_vec(), factors, fit, inconclusive, points: points.len() })
}

#[derive(Clone, Debug, Serialize)]
pub struct LmiConfig {
    pub eps_ladder: Vec<f64>,
    /// Lattice sets keep `eps >= lattice_clip * h`.
    pub lattice_clip: f64,
    /// Fractal iterates keep `eps >= fractal_clip * (finest generation scale)`.
    pub fractal_clip: f64,
    pub pass_floor: f64,
    pub decay_slope: f64,
    pub max_points: usize,
    pub seed: u64,
    pub markov_degree: u32,
    /// Probe points for the Markov cross-check besides the landmarks; the
    /// check is skipped when `None`.
    pub markov_points: Option<usize>,
}

impl Default for LmiConfig {
    fn default() -> Self {
        LmiConfig {
            eps_ladder: dyadic_ladder(3, 9),
            lattice_clip: 8.0,
            fractal_clip: 3.0,
            pass_floor: 0.05,
            decay_slope: 0.5,
            max_points: 256,
            seed: 1,
            markov_degree: 2,
            markov_points: Some(8),
        }
    }
}

/// `2^-from, ..., 2^-to`.
pub fn dyadic_ladder(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

impl LmiConfig {
    /// The ladder restricted to the scales the cloud resolves.
    pub fn valid_ladder(&self, cloud: &PointCloud) -> Vec<f64> {
        let factor = match cloud.discretization() {
            Discretization::Iterate { .. } => self.fractal_clip,
            _ => self.lattice_clip,
        };
        let floor = factor * cloud.resolution() * (1.0 - 1e-12);
        self.eps_ladder.iter().copied().filter(|&e| e >= floor).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LadderEntry {
    pub eps: f64,
    pub worst_rho: f64,
    pub worst_point: Vec<f64>,
    pub degenerate_points: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LmiVerdict {
    pub label: String,
    pub h: f64,
    pub ladder: Vec<LadderEntry>,
    pub points: usize,
    pub min_rho: f64,
    /// Slope of `log(worst rho)` against `log eps`; absent when some worst
    /// case is zero.
    pub decay: Option<LineFit>,
    pub verdict: Verdict,
    pub markov: Option<ExponentFit>,
}

/// Sweeps the sampled boundary points over the valid ladder. A zero worst case
/// or a decay slope at or above `decay_slope` fails; otherwise a worst case at
/// or above `pass_floor` everywhere passes.
pub fn lmi1_verdict(cloud: &PointCloud, cfg: &LmiConfig) -> Result<LmiVerdict> {
    let ladder = cfg.valid_ladder(cloud);
    if ladder.is_empty() {
        return Err(Error::InvalidInput(format!(
            "no ladder value is resolved by '{}' at resolution {}",
            cloud.label(),
            cloud.resolution()
        )));
    }
    let pts = cloud.boundary_sample(cfg.max_points, cfg.seed);
    let mut entries = Vec::with_capacity(ladder.len());
    for &eps in &ladder {
        let mut worst = (f64::INFINITY, usize::MAX);
        let mut degenerate_points = 0;
        for &i in &pts {
            let r = spanning_rho(cloud, cloud.point(i), eps);
            degenerate_points += r.degenerate as usize;
            if r.rho_span < worst.0 {
                worst = (r.rho_span, i);
            }
        }
        entries.push(LadderEntry {
            eps,
            worst_rho: worst.0,
            worst_point: cloud.point(worst.1).to_vec(),
            degenerate_points,
        });
    }
    let min_rho = entries.iter().map(|e| e.worst_rho).fold(f64::INFINITY, f64::min);
    let decay = if min_rho > 0.0 && entries.len() >= 2 {
        let e: Vec<f64> = entries.iter().map(|e| e.eps).collect();
        let r: Vec<f64> = entries.iter().map(|e| e.worst_rho).collect();
        Some(fit_log_log(&e, &r)?)
    } else {
        None
    };
    let verdict = if min_rho <= 0.0 || decay.is_some_and(|f| f.slope >= cfg.decay_slope) {
        Verdict::Fail
    } else if min_rho >= cfg.pass_floor {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    let markov = match cfg.markov_points {
        Some(n) if ladder.len() >= 2 => {
            let probes = cloud.boundary_sample(n, cfg.seed);
            Some(markov_exponent(cloud, cfg.markov_degree, &ladder, &probes)?)
        }
        _ => None,
    };
    Ok(LmiVerdict {
        label: cloud.label().to_string(),
        h: cloud.resolution(),
        ladder: entries,
        points: pts.len(),
        min_rho,
        decay,
        verdict,
        markov,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LmiRow {
    pub x0: Vec<f64>,
    pub eps: f64,
    pub rho_span: f64,
    pub band_width: f64,
    pub markov: f64,
}

/// Per-(point, eps) geometry and Markov factor for the probe points.
pub fn lmi_table(cloud: &PointCloud, cfg: &LmiConfig) -> Result<Vec<LmiRow>> {
    let probes = cloud.boundary_sample(cfg.markov_points.unwrap_or(8), cfg.seed);
    let mut rows = Vec::new();
    for &eps in &cfg.valid_ladder(cloud) {
        for &i in &probes {
            let x0 = cloud.point(i);
            rows.push(LmiRow {
                x0: x0.to_vec(),
                eps,
                rho_span: spanning_rho(cloud, x0, eps).rho_span,
                band_width: band_width(cloud, x0, eps),
                markov: markov_factor(cloud, x0, eps, cfg.markov_degree)?.factor,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::{generate, SetSpec};

    #[test]
    fn square_corner_spans_fully() {
        let c = generate(&SetSpec::square(2f64.powi(-9))).unwrap();
        let r = spanning_rho(&c, &[-0.125, -0.125], 0.125);
        assert!(r.rho_span >= 0.99, "{}", r.rho_span);
        assert!(!r.degenerate);
    }

    #[test]
    fn segment_never_spans() {
        let c = generate(&SetSpec::segment(1.0 / 64.0)).unwrap();
        for &x in &[-0.25, 0.0, 0.125] {
            for eps in [0.01, 0.1, 0.5] {
                assert_eq!(spanning_rho(&c, &[x, 0.0], eps).rho_span, 0.0);
                assert_eq!(band_width(&c, &[x, 0.0], eps), 0.0);
            }
        }
    }

    #[test]
    fn cantor_spanning_bound() {
        let c = generate(&SetSpec::cantor(8)).unwrap();
        let pts = c.boundary_sample(64, 5);
        let mut eps = 1.0;
        while eps >= 3f64.powi(-6) {
            for &i in &pts {
                let r = spanning_rho(&c, c.point(i), eps);
                assert!(r.rho_span >= 1.0 / 6.0 - 0.02, "eps {eps}: {}", r.rho_span);
            }
            eps /= 1.7;
        }
    }

    #[test]
    fn greedy_matches_exhaustive_on_small_balls() {
        for spec in [SetSpec::square(1.0 / 32.0), SetSpec::disk(1.0 / 32.0), SetSpec::sierpinski(5)] {
            let c = generate(&spec).unwrap();
            for &i in c.boundary_sample(20, 3).iter() {
                let x0 = c.point(i);
                let eps = 3.0 * c.resolution();
                let g = spanning_rho(&c, x0, eps);
                let e = spanning_rho_exhaustive(&c, x0, eps).unwrap();
                assert!(g.rho_span <= e.rho_span + 1e-12);
                assert!(g.rho_span >= 0.9 * e.rho_span, "{}: {} vs {}", c.label(), g.rho_span, e.rho_span);
            }
        }
    }

    #[test]
    fn degenerate_ball() {
        let c = generate(&SetSpec::square(1.0 / 16.0)).unwrap();
        let r = spanning_rho(&c, &[0.0, 0.0], 0.01);
        assert!(r.degenerate);
        assert_eq!(r.rho_span, 0.0);
    }

    #[test]
    fn band_width_examples() {
        let c = generate(&SetSpec::disk(1.0 / 128.0)).unwrap();
        let w = band_width(&c, &[0.0, 0.0], 0.2);
        assert!((w - 0.2).abs() <= 1.0 / 128.0, "{w}");
        let cusp = generate(&SetSpec::cusp_out(2.0, 1.0 / 256.0)).unwrap();
        for eps in [0.25, 0.125, 0.0625] {
            assert!(band_width(&cusp, &[0.0, 0.0], eps) <= eps * eps + 1e-15);
        }
    }

    #[test]
    fn band_and_spanning_are_consistent() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let m = 200;
            let coords: Vec<f64> = (0..2 * m).map(|_| rng.gen_range(-0.25..0.25)).collect();
            let c = PointCloud::new(2, coords, vec![true; m], 0.01, "random").unwrap();
            let x0 = c.point(rng.gen_range(0..m)).to_vec();
            let eps = rng.gen_range(0.05..0.3);
            let r = spanning_rho(&c, &x0, eps);
            let w = band_width(&c, &x0, eps);
            assert!(r.rho_span * eps >= w - 1e-9);
            assert!(w >= r.rho_span * r.rho_span * eps / 4.0 - 1e-12);
        }
    }

    #[test]
    fn rigid_motion_invariance() {
        let c = generate(&SetSpec::square(1.0 / 128.0).with_size(0.3)).unwrap();
        let moved = c.rigid_motion(std::f64::consts::PI / 6.0, &[0.01, -0.02]).unwrap();
        for &i in c.boundary_sample(10, 1).iter() {
            for eps in [0.05, 0.1, 0.2] {
                let a = spanning_rho(&c, c.point(i), eps);
                let b = spanning_rho(&moved, moved.point(i), eps);
                assert!((a.rho_span - b.rho_span).abs() <= 2.0 * c.resolution() / eps);
                let wa = band_width(&c, c.point(i), eps);
                let wb = band_width(&moved, moved.point(i), eps);
                assert!((wa - wb).abs() <= 1e-9, "{wa} {wb}");
            }
        }
    }

    #[test]
    fn markov_trivial_cases() {
        let c = generate(&SetSpec::square(1.0 / 32.0)).unwrap();
        assert_eq!(markov_factor(&c, &[0.0, 0.0], 0.1, 0).unwrap().factor, 0.0);
        let alone = generate(&SetSpec::cantor(2)).unwrap();
        let r = markov_factor(&alone, &[0.0], 0.01, 1).unwrap();
        assert!(r.unbounded && r.factor.is_infinite());
        let z = higher_order_markov_factor(&c, &[0.0, 0.0], 0.1, 2, &MultiIndex::zero(2)).unwrap();
        assert!((z - 1.0).abs() < 1e-10);
        let m = markov_factor(&c, &[0.0, 0.0], 0.1, 2).unwrap();
        let d = higher_order_markov_factor(&c, &[0.0, 0.0], 0.1, 2, &MultiIndex::unit(2, m.direction)).unwrap();
        assert!((d - m.factor).abs() <= 1e-8 * m.factor);
    }

    #[test]
    fn extremal_polynomial_certifies_factor() {
        let c = generate(&SetSpec::disk(1.0 / 64.0)).unwrap();
        let x0 = [0.25, 0.0];
        let eps = 0.125;
        let r = markov_factor(&c, &x0, eps, 3).unwrap();
        let basis = multiindex::enumerate(2, 3);
        for i in c.ball_indices(&x0, eps) {
            let z: Vec<f64> = c.point(i).iter().zip(&x0).map(|(a, b)| (a - b) / eps).collect();
            let v: f64 = basis.iter().zip(&r.extremal).map(|(a, p)| p * a.monomial(&z)).sum();
            assert!(v.abs() <= 1.0 + 1e-8);
        }
        let e = MultiIndex::unit(2, r.direction);
        let g = r.extremal[e.rank()] / eps;
        assert!((g.abs() - r.factor).abs() <= 1e-8 * r.factor);
    }

    #[test]
    fn chebyshev_on_the_interval() {
        let c = generate(&SetSpec::interval(2f64.powi(-12)).with_size(0.5)).unwrap();
        assert!(c.len() >= 2001);
        for k in 1..=5u32 {
            let m = markov_factor(&c, &[0.25], 0.5, k).unwrap();
            let canonical = m.factor * 0.25;
            let k2 = (k * k) as f64;
            assert!(canonical >= k2 * (1.0 - 1e-9) && canonical <= 1.05 * k2, "k={k}: {canonical}");
        }
    }

    #[test]
    fn second_derivative_matches_random_search() {
        use rand::Rng;
        let c = generate(&SetSpec::interval(2f64.powi(-10)).with_size(0.5)).unwrap();
        let lp = higher_order_markov_factor(&c, &[0.25], 0.5, 2, &MultiIndex::new(vec![2])).unwrap();
        // canonical [-1, 1]: sup |P''| over |P| <= 1 is |T_2''| = 4
        assert!((lp * 0.0625 - 4.0).abs() < 0.05, "{}", lp * 0.0625);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let grid: Vec<f64> = c.points().map(|p| (p[0] - 0.25) / 0.5).collect();
        let mut best: f64 = 0.0;
        for _ in 0..100_000 {
            let a: [f64; 3] = [rng.gen_range(-3.0..3.0), rng.gen_range(-8.0..8.0), rng.gen_range(-8.0..8.0)];
            let sup = grid.iter().map(|z| (a[0] + a[1] * z + a[2] * z * z).abs()).fold(0.0, f64::max);
            best = best.max(2.0 * a[2].abs() / sup);
        }
        let lp_z = lp * 0.25;
        assert!(best <= lp_z * (1.0 + 1e-9));
        assert!(best >= 0.9 * lp_z, "{best} vs {lp_z}");
    }

    #[test]
    fn markov_monotone_in_radius() {
        let c = generate(&SetSpec::disk(1.0 / 64.0)).unwrap();
        let x0 = [0.25, 0.0];
        let mut last = f64::INFINITY;
        for eps in [0.04, 0.06, 0.09, 0.13, 0.2] {
            let m = markov_factor(&c, &x0, eps, 2).unwrap().factor;
            assert!(m <= last * (1.0 + 1e-8));
            last = m;
        }
    }

    #[test]
    fn degree_one_factor_against_band() {
        let c = generate(&SetSpec::disk(1.0 / 64.0)).unwrap();
        let sq = generate(&SetSpec::square(1.0 / 64.0)).unwrap();
        for cloud in [&c, &sq] {
            let eps = 0.125;
            let m = markov_factor(cloud, &[0.0, 0.0], eps, 1).unwrap().factor;
            let w = band_width(cloud, &[0.0, 0.0], eps);
            let ratio = m * w;
            assert!(ratio >= 1.0 / (2f64.sqrt() * 1.15) && ratio <= 2f64.sqrt() * 1.15, "{ratio}");
        }
    }

    #[test]
    fn exponent_errors_and_fit() {
        let c = generate(&SetSpec::square(1.0 / 256.0)).unwrap();
        let corners = c.landmarks().to_vec();
        assert!(matches!(markov_exponent(&c, 2, &[0.1], &corners), Err(Error::UnderdeterminedFit(1))));
        let fit = markov_exponent(&c, 2, &dyadic_ladder(3, 5), &corners).unwrap();
        let slope = fit.fit.unwrap().slope;
        assert!((slope - 1.0).abs() < 0.15, "{slope}");
    }

    #[test]
    fn verdicts_on_small_examples() {
        let cfg = LmiConfig { markov_points: None, max_points: 64, ..LmiConfig::default() };
        let sq = generate(&SetSpec::square(1.0 / 128.0)).unwrap();
        assert_eq!(lmi1_verdict(&sq, &cfg).unwrap().verdict, Verdict::Pass);
        let seg = generate(&SetSpec::segment(1.0 / 128.0)).unwrap();
        let v = lmi1_verdict(&seg, &cfg).unwrap();
        assert_eq!(v.verdict, Verdict::Fail);
        assert_eq!(v.min_rho, 0.0);
        let coarse = LmiConfig { eps_ladder: vec![1e-6], ..cfg };
        assert!(lmi1_verdict(&sq, &coarse).is_err());
    }
}
