//! Deterministic dense revised simplex.
//!
//! Problems are brought to standard form `min c'x, Ax = b, x >= 0` (slacks for
//! `<=` rows, shifted lower bounds, split free variables, upper bounds as extra
//! rows), equilibrated by row and column max-norm scaling, and solved with a
//! two-phase method on an explicit basis inverse with a Harris ratio test.
//! Stalls of `10 m + 100` iterations without objective progress first trigger
//! small perturbations of the basic values, then Bland's rule. Numerically
//! singular bases are repaired with row artificials.

use thiserror::Error;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-8;
const OPT_TOL: f64 = 1e-9;
/// Reduced costs above `-NOISE_TOL` end a stalled degenerate run.
const NOISE_TOL: f64 = 1e-6;
const REFACTOR_EVERY: usize = 10;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite input in {0}")]
    NonFinite(&'static str),
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis matrix became singular")]
    Singular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Objective value (minimization); meaningful only when optimal.
    pub value: f64,
    pub x: Vec<f64>,
    /// Multipliers for the equality rows followed by the `<=` rows, in the
    /// sign convention `c - A'y >= 0` on the reduced costs of a minimization.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Largest absolute constraint violation of `x` in the original problem.
    pub max_residual: f64,
}

/// `min objective'x` subject to equality rows, `<=` rows and per-variable
/// bounds (lower default 0, `f64::NEG_INFINITY` for free; optional upper).
#[derive(Clone, Debug, Default)]
pub struct LinearProgram {
    objective: Vec<f64>,
    eq_rows: Vec<Vec<f64>>,
    eq_rhs: Vec<f64>,
    le_rows: Vec<Vec<f64>>,
    le_rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<Option<f64>>,
}

impl LinearProgram {
    pub fn minimize(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LinearProgram {
            objective,
            lower: vec![0.0; n],
            upper: vec![None; n],
            ..Default::default()
        }
    }

    pub fn maximize(objective: Vec<f64>) -> Self {
        Self::minimize(objective.into_iter().map(|c| -c).collect())
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn eq(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        self
    }

    pub fn le(mut self, row: Vec<f64>, rhs: f64) -> Self {
        self.le_rows.push(row);
        self.le_rhs.push(rhs);
        self
    }

    pub fn ge(self, row: Vec<f64>, rhs: f64) -> Self {
        self.le(row.into_iter().map(|a| -a).collect(), -rhs)
    }

    pub fn bounds(mut self, var: usize, lower: f64, upper: Option<f64>) -> Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn free(self, var: usize) -> Self {
        self.bounds(var, f64::NEG_INFINITY, None)
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        for (k, r) in self.eq_rows.iter().chain(&self.le_rows).enumerate() {
            if r.len() != n {
                return Err(LpError::DimensionMismatch(format!(
                    "constraint row {k} has {} entries, expected {n}",
                    r.len()
                )));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) {
            return Err(LpError::NonFinite("objective"));
        }
        if !self.eq_rows.iter().chain(&self.le_rows).all(|r| finite(r)) {
            return Err(LpError::NonFinite("constraint matrix"));
        }
        if !finite(&self.eq_rhs) || !finite(&self.le_rhs) {
            return Err(LpError::NonFinite("right-hand side"));
        }
        for i in 0..n {
            if self.lower[i].is_nan() || self.lower[i] == f64::INFINITY {
                return Err(LpError::NonFinite("lower bound"));
            }
            if let Some(u) = self.upper[i] {
                if !u.is_finite() {
                    return Err(LpError::NonFinite("upper bound"));
                }
            }
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        self.validate()?;
        let n = self.objective.len();
        // standard-form columns: for each original variable one or two columns
        let mut var_cols: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
        let mut ncols = 0;
        for i in 0..n {
            if self.lower[i] == f64::NEG_INFINITY {
                var_cols.push((ncols, Some(ncols + 1)));
                ncols += 2;
            } else {
                var_cols.push((ncols, None));
                ncols += 1;
            }
        }
        let n_struct = ncols;
        let upper_rows: Vec<usize> = (0..n).filter(|&i| self.upper[i].is_some()).collect();
        let m_eq = self.eq_rows.len();
        let m_le = self.le_rows.len() + upper_rows.len();
        let m = m_eq + m_le;
        let n_std = n_struct + m_le;

        let mut cols = vec![0.0; n_std * m];
        let mut cost = vec![0.0; n_std];
        let mut rhs = vec![0.0; m];

        let put = |cols: &mut [f64], row: usize, i: usize, a: f64| {
            let (p, q) = var_cols[i];
            cols[p * m + row] += a;
            if let Some(q) = q {
                cols[q * m + row] -= a;
            }
        };
        let shift = |i: usize| if self.lower[i] == f64::NEG_INFINITY { 0.0 } else { self.lower[i] };

        for (r, row) in self.eq_rows.iter().enumerate() {
            let mut b = self.eq_rhs[r];
            for (i, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    put(&mut cols, r, i, a);
                    b -= a * shift(i);
                }
            }
            rhs[r] = b;
        }
        for (k, row) in self.le_rows.iter().enumerate() {
            let r = m_eq + k;
            let mut b = self.le_rhs[k];
            for (i, &a) in row.iter().enumerate() {
                if a != 0.0 {
                    put(&mut cols, r, i, a);
                    b -= a * shift(i);
                }
            }
            rhs[r] = b;
        }
        for (k, &i) in upper_rows.iter().enumerate() {
            let r = m_eq + self.le_rows.len() + k;
            put(&mut cols, r, i, 1.0);
            rhs[r] = self.upper[i].unwrap() - shift(i);
        }
        for k in 0..m_le {
            cols[(n_struct + k) * m + m_eq + k] = 1.0;
        }
        for i in 0..n {
            let (p, q) = var_cols[i];
            cost[p] = self.objective[i];
            if let Some(q) = q {
                cost[q] = -self.objective[i];
            }
        }

        let mut core = StandardForm::new(m, n_std, cols, cost, rhs);
        let raw = core.solve()?;

        let mut x = vec![0.0; n];
        for i in 0..n {
            let (p, q) = var_cols[i];
            x[i] = shift(i) + raw.x[p] - q.map_or(0.0, |q| raw.x[q]);
        }
        let mut duals = raw.duals;
        duals.truncate(m_eq + self.le_rows.len());
        let value = self.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let max_residual = self.residual(&x);
        Ok(LpOutcome {
            status: raw.status,
            value,
            x,
            duals,
            iterations: raw.iterations,
            max_residual,
        })
    }

    /// Largest constraint violation of `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let dotp = |r: &[f64]| r.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let mut worst: f64 = 0.0;
        for (r, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            worst = worst.max((dotp(r) - b).abs());
        }
        for (r, b) in self.le_rows.iter().zip(&self.le_rhs) {
            worst = worst.max(dotp(r) - b);
        }
        for i in 0..x.len() {
            if self.lower[i] != f64::NEG_INFINITY {
                worst = worst.max(self.lower[i] - x[i]);
            }
            if let Some(u) = self.upper[i] {
                worst = worst.max(x[i] - u);
            }
        }
        worst
    }
}

struct RawOutcome {
    status: LpStatus,
    x: Vec<f64>,
    duals: Vec<f64>,
    iterations: usize,
}

/// `min c'x, Ax = b, x >= 0` with `A` stored column-major (`m` entries per column).
struct StandardForm {
    m: usize,
    n: usize,
    cols: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    /// Columns `j` and `j + half` are negatives of each other for `j < half`.
    twin_half: Option<usize>,
}

impl StandardForm {
    fn new(m: usize, n: usize, mut cols: Vec<f64>, mut cost: Vec<f64>, mut rhs: Vec<f64>) -> Self {
        // rhs >= 0; the sign flip is carried in row_scale so duals map back
        let mut row_scale = vec![1.0; m];
        let mut col_scale = vec![1.0; n];
        for r in 0..m {
            if rhs[r] < 0.0 {
                rhs[r] = -rhs[r];
                row_scale[r] = -1.0;
                for j in 0..n {
                    cols[j * m + r] = -cols[j * m + r];
                }
            }
        }
        if m > 0 {
            for _ in 0..2 {
                let mut rmax = vec![0.0f64; m];
                for j in 0..n {
                    for r in 0..m {
                        rmax[r] = rmax[r].max(cols[j * m + r].abs());
                    }
                }
                for r in 0..m {
                    if rmax[r] > 0.0 {
                        let s = 1.0 / rmax[r];
                        row_scale[r] *= s;
                        rhs[r] *= s;
                        for j in 0..n {
                            cols[j * m + r] *= s;
                        }
                    }
                }
                for j in 0..n {
                    let c = &mut cols[j * m..(j + 1) * m];
                    let cmax = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                    if cmax > 0.0 {
                        let s = 1.0 / cmax;
                        col_scale[j] *= s;
                        cost[j] *= s;
                        c.iter_mut().for_each(|v| *v *= s);
                    }
                }
            }
        }
        StandardForm { m, n, cols, cost, rhs, row_scale, col_scale, twin_half: None }
    }

    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.m..(j + 1) * self.m]
    }

    fn solve(&mut self) -> Result<RawOutcome, LpError> {
        let m = self.m;
        let n = self.n;
        if m == 0 {
            // no constraints: optimal at 0 unless some cost is negative
            let unbounded = self.cost.iter().any(|&c| c < -OPT_TOL);
            return Ok(RawOutcome {
                status: if unbounded { LpStatus::Unbounded } else { LpStatus::Optimal },
                x: vec![0.0; n],
                duals: vec![],
                iterations: 0,
            });
        }
        // initial basis: unit columns where available, artificials elsewhere
        let mut basis = vec![usize::MAX; m];
        for j in 0..n {
            let c = self.col(j);
            let mut nz = None;
            let mut count = 0;
            for (r, &v) in c.iter().enumerate() {
                if v != 0.0 {
                    count += 1;
                    nz = Some((r, v));
                }
            }
            if count == 1 {
                let (r, v) = nz.unwrap();
                if v > 0.0 && basis[r] == usize::MAX {
                    basis[r] = j;
                }
            }
        }
        // one artificial per row (column n + r); the spare ones back up basis repair
        for r in 0..m {
            let mut c = vec![0.0; m];
            c[r] = 1.0;
            self.cols.extend_from_slice(&c);
            if basis[r] == usize::MAX {
                basis[r] = n + r;
            }
        }
        let n_total = n + m;
        let mut st = Tableau::new(self, basis, n_total)?;
        let phase1: Vec<f64> = (0..n_total).map(|j| if j >= n { 1.0 } else { 0.0 }).collect();
        let mut cost2 = self.cost.clone();
        cost2.resize(n_total, 0.0);
        let scale = self.rhs.iter().fold(1.0f64, |a, v| a.max(v.abs()));

        let mut iterations = 0;
        let mut status = LpStatus::Optimal;
        let mut settled = false;
        for _ in 0..4 {
            if st.basis.iter().any(|&j| j >= n) {
                st.run(self, &phase1, n_total, &mut iterations)?;
                if st.artificial_mass(n) > FEAS_TOL * scale {
                    return Ok(RawOutcome {
                        status: LpStatus::Infeasible,
                        x: vec![0.0; n],
                        duals: vec![0.0; m],
                        iterations,
                    });
                }
                st.drive_out_artificials(self, n)?;
            }
            status = st.run(self, &cost2, n, &mut iterations)?;
            st.pert.iter_mut().for_each(|e| *e = 0.0);
            st.refactor(self)?;
            // a repair during phase 2 may leave an artificial carrying weight
            if st.artificial_mass(n) <= FEAS_TOL * scale {
                settled = true;
                break;
            }
        }
        if !settled {
            return Err(LpError::Singular);
        }

        let mut x = vec![0.0; n];
        for (r, &j) in st.basis.iter().enumerate() {
            if j < n {
                x[j] = st.xb[r].max(0.0) * self.col_scale[j];
            }
        }
        let y = st.duals(&cost2);
        let duals = (0..m).map(|r| y[r] * self.row_scale[r]).collect();
        Ok(RawOutcome { status, x, duals, iterations })
    }
}

struct Tableau {
    m: usize,
    basis: Vec<usize>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    n_total: usize,
    repairs: usize,
    /// Right-hand-side shift from anti-degeneracy perturbation.
    pert: Vec<f64>,
}

impl Tableau {
    fn new(sf: &StandardForm, basis: Vec<usize>, n_total: usize) -> Result<Self, LpError> {
        let m = sf.m;
        let mut t = Tableau { m, basis, binv: vec![0.0; m * m], xb: vec![0.0; m], n_total, repairs: 0, pert: vec![0.0; m] };
        t.refactor(sf)?;
        Ok(t)
    }

    fn column(&self, sf: &StandardForm, j: usize) -> Vec<f64> {
        let m = self.m;
        let a = &sf.cols[j * m..(j + 1) * m];
        let mut u = vec![0.0; m];
        for (r, ur) in u.iter_mut().enumerate() {
            let row = &self.binv[r * m..(r + 1) * m];
            *ur = row.iter().zip(a).map(|(p, q)| p * q).sum();
        }
        u
    }

    /// Gauss-Jordan inverse of the basis matrix with partial pivoting. A
    /// basis column without an acceptable pivot is replaced by the artificial
    /// of a row not yet pivoted on.
    fn refactor(&mut self, sf: &StandardForm) -> Result<(), LpError> {
        let m = self.m;
        let n_art = self.n_total - m;
        let mut a = vec![0.0; m * m];
        for (k, &j) in self.basis.iter().enumerate() {
            for r in 0..m {
                a[r * m + k] = sf.cols[j * m + r];
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        // perm[pos] = original row now stored at position pos
        let mut perm: Vec<usize> = (0..m).collect();
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold((c, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if best < 1e-11 {
                // the eliminated image of e_row is the unit vector at position c
                let row = perm[c];
                self.basis[c] = n_art + row;
                for r in 0..m {
                    a[r * m + c] = if r == c { 1.0 } else { 0.0 };
                }
                self.repairs += 1;
            } else if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
                perm.swap(p, c);
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.xb[r] = row.iter().zip(sf.rhs.iter().zip(&self.pert)).map(|(p, (q, e))| p * (q + e)).sum();
        }
        Ok(())
    }

    /// Raises every basic value by a small distinct amount, folding the
    /// change into the right-hand-side shift.
    fn perturb(&mut self, sf: &StandardForm) {
        let m = self.m;
        let golden = 0.618_033_988_749_895;
        for (k, &j) in self.basis.iter().enumerate() {
            let delta = 1e-7 * (1.0 + (k as f64 * golden).fract());
            self.xb[k] += delta;
            for r in 0..m {
                self.pert[r] += delta * sf.cols[j * m + r];
            }
        }
    }

    fn min_reduced_cost(&self, sf: &StandardForm, cost: &[f64], allowed: usize, in_basis: &[bool]) -> f64 {
        let m = self.m;
        let y = self.duals(cost);
        (0..allowed)
            .filter(|&j| !in_basis[j])
            .map(|j| {
                let a = &sf.cols[j * m..(j + 1) * m];
                (cost[j] - y.iter().zip(a).map(|(p, q)| p * q).sum::<f64>()) / (1.0 + cost[j].abs())
            })
            .fold(f64::INFINITY, f64::min)
    }

    fn artificial_mass(&self, n: usize) -> f64 {
        self.basis.iter().zip(&self.xb).filter(|(&j, _)| j >= n).map(|(_, v)| v.abs()).sum()
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (k, &j) in self.basis.iter().enumerate() {
            let cb = cost[j];
            if cb != 0.0 {
                for r in 0..m {
                    y[r] += cb * self.binv[k * m + r];
                }
            }
        }
        y
    }

    fn pivot(&mut self, r: usize, j: usize, u: &[f64]) {
        let m = self.m;
        let t = self.xb[r].max(0.0) / u[r];
        for i in 0..m {
            if i != r {
                self.xb[i] -= t * u[i];
            }
        }
        self.xb[r] = t;
        let pr = u[r];
        for k in 0..m {
            self.binv[r * m + k] /= pr;
        }
        for i in 0..m {
            if i != r && u[i] != 0.0 {
                let f = u[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        self.basis[r] = j;
    }

    /// Runs simplex iterations with `cost`; columns `>= allowed` never enter.
    fn run(
        &mut self,
        sf: &StandardForm,
        cost: &[f64],
        allowed: usize,
        iterations: &mut usize,
    ) -> Result<LpStatus, LpError> {
        let m = self.m;
        let limit = 50 * (m + self.n_total) + 10_000;
        let stall_limit = 10 * m + 100;
        let mut bland = false;
        let mut stall = 0;
        let mut best_obj = f64::INFINITY;
        let mut in_basis = vec![false; self.n_total];
        for &j in &self.basis {
            in_basis[j] = true;
        }
        let mut since_refactor = 0;
        let mut perturbations = 0;
        if self.pert.iter().any(|&e| e != 0.0) {
            self.pert.iter_mut().for_each(|e| *e = 0.0);
            self.refactor(sf)?;
        }
        loop {
            if *iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            let y = self.duals(cost);
            // pricing
            let mut enter = None;
            let mut best = -OPT_TOL;
            for j in 0..allowed {
                if in_basis[j] {
                    continue;
                }
                // a column never pays off next to its own negative
                if let Some(h) = sf.twin_half {
                    let t = if j < h { j + h } else if j < 2 * h { j - h } else { usize::MAX };
                    if t < self.n_total && in_basis[t] {
                        continue;
                    }
                }
                let a = &sf.cols[j * m..(j + 1) * m];
                // relative to the cost, which column scaling can inflate
                let d = (cost[j] - y.iter().zip(a).map(|(p, q)| p * q).sum::<f64>()) / (1.0 + cost[j].abs());
                if bland {
                    if d < -OPT_TOL {
                        enter = Some(j);
                        break;
                    }
                } else if d < best {
                    best = d;
                    enter = Some(j);
                }
            }
            let Some(j) = enter else {
                return Ok(LpStatus::Optimal);
            };
            let u = self.column(sf, j);
            // Harris two-pass ratio test: bound the step with a small
            // feasibility slack, then take the largest pivot under that bound
            // (plain minimum ratio under Bland's rule, which needs it to terminate)
            let slack = if bland { 0.0 } else { FEAS_TOL };
            let mut theta = f64::INFINITY;
            for i in 0..m {
                if u[i] > PIVOT_TOL {
                    theta = theta.min((self.xb[i].max(0.0) + slack) / u[i]);
                }
            }
            if bland {
                theta *= 1.0 + 1e-12;
            }
            let mut leave: Option<(usize, f64)> = None;
            if theta.is_finite() {
                for i in 0..m {
                    if u[i] > PIVOT_TOL {
                        let t = self.xb[i].max(0.0) / u[i];
                        if t <= theta {
                            let better = match leave {
                                None => true,
                                Some((k, _)) => {
                                    if bland {
                                        self.basis[i] < self.basis[k]
                                    } else {
                                        u[i] > u[k]
                                    }
                                }
                            };
                            if better {
                                leave = Some((i, t));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(LpStatus::Unbounded);
            };
            in_basis[self.basis[r]] = false;
            in_basis[j] = true;
            self.pivot(r, j, &u);
            *iterations += 1;
            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                let before = self.repairs;
                self.refactor(sf)?;
                since_refactor = 0;
                if self.repairs != before {
                    in_basis.iter_mut().for_each(|b| *b = false);
                    for &k in &self.basis {
                        in_basis[k] = true;
                    }
                }
            }
            let obj: f64 = self.basis.iter().zip(&self.xb).map(|(&k, v)| cost[k] * v).sum();
            if obj < best_obj - 1e-12 * (1.0 + obj.abs()) {
                best_obj = obj;
                stall = 0;
            } else {
                stall += 1;
                if stall > stall_limit && !bland {
                    if perturbations < 3 {
                        self.perturb(sf);
                        perturbations += 1;
                        stall = 0;
                        best_obj = f64::INFINITY;
                    } else {
                        bland = true;
                    }
                }
                // degenerate vertex whose remaining reduced costs are rounding noise
                if bland && stall > 2 * stall_limit && self.min_reduced_cost(sf, cost, allowed, &in_basis) > -NOISE_TOL {
                    return Ok(LpStatus::Optimal);
                }
            }
        }
    }

    fn drive_out_artificials(&mut self, sf: &StandardForm, n: usize) -> Result<(), LpError> {
        let m = self.m;
        for r in 0..m {
            if self.basis[r] < n {
                continue;
            }
            let mut in_basis = vec![false; self.n_total];
            for &j in &self.basis {
                in_basis[j] = true;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if in_basis[j] {
                    continue;
                }
                let a = &sf.cols[j * m..(j + 1) * m];
                let v: f64 = row.iter().zip(a).map(|(p, q)| p * q).sum();
                if v.abs() > 1e-7 && best.map_or(true, |(_, b)| v.abs() > b) {
                    best = Some((j, v.abs()));
                }
            }
            if let Some((j, _)) = best {
                let u = self.column(sf, j);
                self.pivot(r, j, &u);
            }
        }
        self.refactor(sf)
    }
}

/// Minimum weighted-l1 solution of `sum_j w_j a_j = target`:
/// `min sum_j cost_j |w_j|` with the columns `a_j` given column-major.
///
/// Returns the outcome with `x` holding the signed weights `w` and `duals`
/// the row multipliers `y` with `|a_j'y| <= cost_j` at optimality.
pub fn min_l1_combination(
    rows: usize,
    columns: &[f64],
    cost: &[f64],
    target: &[f64],
) -> Result<LpOutcome, LpError> {
    let ncols = cost.len();
    if columns.len() != rows * ncols || target.len() != rows {
        return Err(LpError::DimensionMismatch(format!(
            "{} column entries for {rows} rows x {ncols} columns, target {}",
            columns.len(),
            target.len()
        )));
    }
    if !columns.iter().chain(cost).chain(target).all(|v| v.is_finite()) {
        return Err(LpError::NonFinite("l1 combination data"));
    }
    // standard form directly: u_j, v_j >= 0, A(u - v) = target
    let n = 2 * ncols;
    let mut cols = Vec::with_capacity(n * rows);
    let mut c = Vec::with_capacity(n);
    for j in 0..ncols {
        cols.extend_from_slice(&columns[j * rows..(j + 1) * rows]);
        c.push(cost[j]);
    }
    for j in 0..ncols {
        cols.extend(columns[j * rows..(j + 1) * rows].iter().map(|v| -v));
        c.push(cost[j]);
    }
    let mut sf = StandardForm::new(rows, n, cols, c, target.to_vec());
    sf.twin_half = Some(ncols);
    let raw = sf.solve()?;
    let mut w: Vec<f64> = (0..ncols).map(|j| raw.x[j] - raw.x[ncols + j]).collect();
    let residual = |w: &[f64]| -> Vec<f64> {
        (0..rows).map(|r| target[r] - (0..ncols).map(|j| columns[j * rows + r] * w[j]).sum::<f64>()).collect()
    };
    let worst = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut res = residual(&w);
    let mut max_residual = worst(&res);
    if raw.status == LpStatus::Optimal && max_residual > 0.0 {
        // iterative refinement on the support of the optimal combination
        let support: Vec<usize> = (0..ncols).filter(|&j| w[j] != 0.0).collect();
        let sub: Vec<f64> = support.iter().flat_map(|&j| columns[j * rows..(j + 1) * rows].iter().copied()).collect();
        for _ in 0..3 {
            let Some(delta) = least_squares(rows, support.len(), &sub, &res) else { break };
            let mut next = w.clone();
            for (&j, dv) in support.iter().zip(&delta) {
                next[j] += dv;
            }
            let r = residual(&next);
            let m = worst(&r);
            if !(m < max_residual) {
                break;
            }
            w = next;
            res = r;
            max_residual = m;
        }
    }
    let value = w.iter().zip(cost).map(|(a, b)| a.abs() * b).sum();
    Ok(LpOutcome {
        status: raw.status,
        value,
        x: w,
        duals: raw.duals,
        iterations: raw.iterations,
        max_residual,
    })
}

/// Least-squares solution of `A x ~ b` for a column-major `rows x k` matrix
/// by Householder QR; `None` when `A` is rank deficient.
fn least_squares(rows: usize, k: usize, a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    if k == 0 || k > rows {
        return None;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for c in 0..k {
        let col = c * rows;
        let norm = a[col + c..col + rows].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-14 * scale {
            return None;
        }
        let alpha = if a[col + c] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[col + c..col + rows].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for j in c..k {
            let cj = j * rows;
            let dot: f64 = v.iter().zip(&a[cj + c..cj + rows]).map(|(x, y)| x * y).sum();
            let f = 2.0 * dot / vv;
            for (t, x) in v.iter().enumerate() {
                a[cj + c + t] -= f * x;
            }
        }
        let dot: f64 = v.iter().zip(&b[c..]).map(|(x, y)| x * y).sum();
        let f = 2.0 * dot / vv;
        for (t, x) in v.iter().enumerate() {
            b[c + t] -= f * x;
        }
    }
    let mut x = vec![0.0; k];
    for c in (0..k).rev() {
        let s: f64 = (c + 1..k).map(|j| a[j * rows + c] * x[j]).sum();
        x[c] = (b[c] - s) / a[c * rows + c];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maximize_single_variable() {
        let lp = LinearProgram::maximize(vec![1.0]).le(vec![1.0], 1.0);
        let out = lp.solve().unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.x[0] - 1.0).abs() < 1e-12);
        assert!((out.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_detected() {
        let lp = LinearProgram::minimize(vec![0.0]).le(vec![1.0], -1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_detected() {
        let lp = LinearProgram::minimize(vec![-1.0, 0.0]).le(vec![1.0, -1.0], 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn three_atom_moment_problem() {
        // w = u - v at atoms {-1, 0, 1}; sum w = 1, sum y w = 0; minimize TV
        let atoms = [-1.0, 0.0, 1.0];
        let mut cost = vec![1.0; 6];
        let mut eq0 = vec![0.0; 6];
        let mut eq1 = vec![0.0; 6];
        for (k, &y) in atoms.iter().enumerate() {
            eq0[k] = 1.0;
            eq0[3 + k] = -1.0;
            eq1[k] = y;
            eq1[3 + k] = -y;
        }
        cost.truncate(6);
        let out = LinearProgram::minimize(cost).eq(eq0, 1.0).eq(eq1, 0.0).solve().unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value - 1.0).abs() < 1e-10);
        assert!((out.x[1] - out.x[4] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bounds_and_free_variables() {
        // min x + y, x free with x >= -2 via row, y in [1, 3]
        let out = LinearProgram::minimize(vec![1.0, 1.0])
            .free(0)
            .bounds(1, 1.0, Some(3.0))
            .ge(vec![1.0, 0.0], -2.0)
            .solve()
            .unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.x[0] + 2.0).abs() < 1e-10 && (out.x[1] - 1.0).abs() < 1e-10);
        let out = LinearProgram::maximize(vec![0.0, 1.0]).bounds(1, 1.0, Some(3.0)).solve().unwrap();
        assert!((out.x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let lp = LinearProgram::minimize(vec![1.0, 2.0]).le(vec![1.0], 1.0);
        assert!(matches!(lp.solve(), Err(LpError::DimensionMismatch(_))));
        let lp = LinearProgram::minimize(vec![f64::NAN]);
        assert!(matches!(lp.solve(), Err(LpError::NonFinite(_))));
    }

    #[test]
    fn l1_combination_duals_bound_columns() {
        let cols = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0];
        let out = min_l1_combination(2, &cols, &[1.0; 4], &[1.0, 1.0]).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value - 1.0).abs() < 1e-12, "{}", out.value);
        for j in 0..4 {
            let ay = cols[2 * j] * out.duals[0] + cols[2 * j + 1] * out.duals[1];
            assert!(ay.abs() <= 1.0 + 1e-9);
        }
        let t = out.duals[0] + out.duals[1];
        assert!((t - out.value).abs() < 1e-10);
    }

    #[test]
    fn beale_cycling_example() {
        let lp = LinearProgram::minimize(vec![-0.75, 150.0, -0.02, 6.0])
            .le(vec![0.25, -60.0, -0.04, 9.0], 0.0)
            .le(vec![0.5, -90.0, -0.02, 3.0], 0.0)
            .le(vec![0.0, 0.0, 1.0, 0.0], 1.0);
        let out = lp.solve().unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.value + 0.05).abs() < 1e-10, "{}", out.value);
        assert!(out.max_residual < 1e-10);
    }

    fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
            if a[p][c].abs() < 1e-10 {
                return None;
            }
            a.swap(c, p);
            b.swap(c, p);
            for r in 0..n {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..n {
                        a[r][k] -= f * a[c][k];
                    }
                    b[r] -= f * b[c];
                }
            }
        }
        Some((0..n).map(|i| b[i] / a[i][i]).collect())
    }

    // min over all basic feasible points of {Ax <= b, 0 <= x <= 10}
    fn vertex_oracle(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
        let n = c.len();
        let mut rows: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            rows.push((e.clone(), 10.0));
            rows.push((e.iter().map(|v| -v).collect(), 0.0));
        }
        let k = rows.len();
        let mut best: Option<f64> = None;
        let mut pick = vec![0usize; n];
        fn rec(
            start: usize, depth: usize, pick: &mut Vec<usize>, rows: &[(Vec<f64>, f64)],
            c: &[f64], best: &mut Option<f64>, k: usize,
        ) {
            if depth == pick.len() {
                let m: Vec<Vec<f64>> = pick.iter().map(|&i| rows[i].0.clone()).collect();
                let r: Vec<f64> = pick.iter().map(|&i| rows[i].1).collect();
                if let Some(x) = solve_square(m, r) {
                    let ok = rows.iter().all(|(row, rhs)| {
                        row.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= rhs + 1e-9
                    });
                    if ok {
                        let v: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                        *best = Some(best.map_or(v, |b: f64| b.min(v)));
                    }
                }
                return;
            }
            for i in start..k {
                pick[depth] = i;
                rec(i + 1, depth + 1, pick, rows, c, best, k);
            }
        }
        rec(0, 0, &mut pick, &rows, c, &mut best, k);
        best
    }

    #[test]
    fn random_programs_match_vertex_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..=3);
            let m = rng.gen_range(1..=4);
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..4.0)).collect();
            let mut lp = LinearProgram::minimize(c.clone());
            for (row, &rhs) in a.iter().zip(&b) {
                lp = lp.le(row.clone(), rhs);
            }
            for j in 0..n {
                lp = lp.bounds(j, 0.0, Some(10.0));
            }
            let out = lp.solve().unwrap();
            match vertex_oracle(&c, &a, &b) {
                Some(v) => {
                    assert_eq!(out.status, LpStatus::Optimal);
                    assert!((out.value - v).abs() < 1e-8, "{} vs {v}", out.value);
                }
                None => assert_eq!(out.status, LpStatus::Infeasible),
            }
        }
    }

    #[test]
    fn duals_certify_optimality() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (n, m) = (6, 4);
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
            let a: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut lp = LinearProgram::minimize(c.clone());
            for (row, &rhs) in a.iter().zip(&b) {
                lp = lp.le(row.clone(), rhs);
            }
            let out = lp.solve().unwrap();
            if out.status != LpStatus::Optimal {
                continue;
            }
            let by: f64 = b.iter().zip(&out.duals).map(|(p, q)| p * q).sum();
            assert!((by - out.value).abs() < 1e-9 * (1.0 + out.value.abs()));
            for j in 0..n {
                assert!(out.duals[j.min(m - 1)] <= 1e-12);
                let reduced = c[j] - (0..m).map(|i| a[i][j] * out.duals[i]).sum::<f64>();
                assert!(reduced >= -1e-9);
            }
        }
    }

    #[test]
    fn least_squares_recovers_consistent_solution() {
        // columns (1,1,1) and (0,1,2); b = 2 c0 - 3 c1
        let a = [1.0, 1.0, 1.0, 0.0, 1.0, 2.0];
        let x = least_squares(3, 2, &a, &[2.0, -1.0, -4.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] + 3.0).abs() < 1e-14);
        assert!(least_squares(3, 2, &[1.0, 1.0, 1.0, 2.0, 2.0, 2.0], &[1.0, 1.0, 1.0]).is_none());
    }
}
