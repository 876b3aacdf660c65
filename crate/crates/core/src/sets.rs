//! Resolved compact sets `K` as point clouds, their generators, and the ball /
//! affine-hull geometry used by the LMI checks.
//!
//! Every cloud lies in the cube `[-1/4, 1/4]^d`. Full-dimensional families are
//! lattice discretizations at spacing `h`; fractal families are exact
//! finite-depth iterates.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::SpatialGrid;

/// Half-width of the normalization cube every cloud must fit in.
pub const NORMALIZATION_RADIUS: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum SetFamily {
    Square,
    Disk,
    /// Horizontal segment in the plane.
    Segment,
    /// One-dimensional closed interval.
    Interval,
    /// `{0 <= x <= L, |y| <= x^p}`.
    CuspOut { p: f64 },
    /// The square minus the thin region `{x > 0, |y| < x^p}`.
    CuspIn { p: f64 },
    Cantor { depth: u32 },
    Sierpinski { depth: u32 },
    PointsFile { path: PathBuf },
}

impl SetFamily {
    /// Parses `name` or `name:param` (e.g. `cusp_out:2`, `cantor:8`).
    pub fn parse(s: &str) -> Result<SetFamily> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let num = |what: &str| -> Result<f64> {
            param
                .ok_or_else(|| Error::InvalidSpec(format!("{name} needs a {what} parameter")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidSpec(format!("{name}: {e}")))
        };
        let depth = || -> Result<u32> {
            let v = num("depth")?;
            if v < 1.0 || v.fract() != 0.0 || v > 16.0 {
                return Err(Error::InvalidSpec(format!("{name}: depth must be an integer in 1..=16")));
            }
            Ok(v as u32)
        };
        let fam = match name {
            "square" => SetFamily::Square,
            "disk" => SetFamily::Disk,
            "segment" => SetFamily::Segment,
            "interval" => SetFamily::Interval,
            "cusp_out" => SetFamily::CuspOut { p: num("exponent")? },
            "cusp_in" => SetFamily::CuspIn { p: num("exponent")? },
            "cantor" => SetFamily::Cantor { depth: depth()? },
            "sierpinski" => SetFamily::Sierpinski { depth: depth()? },
            "points_file" => SetFamily::PointsFile {
                path: PathBuf::from(
                    param.ok_or_else(|| Error::InvalidSpec("points_file needs a path".into()))?,
                ),
            },
            other => return Err(Error::UnknownFamily(other.to_string())),
        };
        if let SetFamily::CuspOut { p } | SetFamily::CuspIn { p } = fam {
            if !(p >= 1.0) || !p.is_finite() {
                return Err(Error::InvalidSpec(format!("cusp exponent must be >= 1, got {p}")));
            }
        }
        Ok(fam)
    }
}

impl fmt::Display for SetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetFamily::Square => write!(f, "square"),
            SetFamily::Disk => write!(f, "disk"),
            SetFamily::Segment => write!(f, "segment"),
            SetFamily::Interval => write!(f, "interval"),
            SetFamily::CuspOut { p } => write!(f, "cusp_out:{p}"),
            SetFamily::CuspIn { p } => write!(f, "cusp_in:{p}"),
            SetFamily::Cantor { depth } => write!(f, "cantor:{depth}"),
            SetFamily::Sierpinski { depth } => write!(f, "sierpinski:{depth}"),
            SetFamily::PointsFile { path } => write!(f, "points_file:{}", path.display()),
        }
    }
}

/// What to generate. `size` is the square side, disk diameter, segment or
/// interval length, or cusp length; fractals ignore `h` and `size` and use
/// their fixed placement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub family: SetFamily,
    pub h: f64,
    pub size: f64,
}

impl SetSpec {
    pub fn new(family: SetFamily, h: f64) -> Self {
        let size = match family {
            SetFamily::CuspOut { .. } => 0.25,
            _ => 0.5,
        };
        SetSpec { family, h, size }
    }

    pub fn square(h: f64) -> Self {
        Self::new(SetFamily::Square, h)
    }

    pub fn disk(h: f64) -> Self {
        Self::new(SetFamily::Disk, h)
    }

    pub fn segment(h: f64) -> Self {
        Self::new(SetFamily::Segment, h)
    }

    pub fn interval(h: f64) -> Self {
        Self::new(SetFamily::Interval, h)
    }

    pub fn cusp_out(p: f64, h: f64) -> Self {
        Self::new(SetFamily::CuspOut { p }, h)
    }

    pub fn cantor(depth: u32) -> Self {
        Self::new(SetFamily::Cantor { depth }, 0.0)
    }

    pub fn sierpinski(depth: u32) -> Self {
        Self::new(SetFamily::Sierpinski { depth }, 0.0)
    }

    pub fn with_size(mut self, size: f64) -> Self {
        self.size = size;
        self
    }

    pub fn dim(&self) -> Option<usize> {
        match self.family {
            SetFamily::Interval | SetFamily::Cantor { .. } => Some(1),
            SetFamily::PointsFile { .. } => None,
            _ => Some(2),
        }
    }

    fn validate(&self) -> Result<()> {
        let full_dim = !matches!(
            self.family,
            SetFamily::Cantor { .. } | SetFamily::Sierpinski { .. } | SetFamily::PointsFile { .. }
        );
        if full_dim {
            if !(self.h > 0.0) || !self.h.is_finite() {
                return Err(Error::InvalidSpec(format!("resolution h must be positive, got {}", self.h)));
            }
            if !(self.size > 0.0) || self.size > 0.5 + 1e-12 {
                return Err(Error::InvalidSpec(format!("size must be in (0, 1/2], got {}", self.size)));
            }
        }
        Ok(())
    }
}

/// Distinguishes iterates of fractals from lattice discretizations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Discretization {
    Lattice,
    Iterate { depth: u32 },
    Points,
}

/// A resolved compact set: distinct points with boundary flags.
#[derive(Clone, Debug)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    boundary: Vec<bool>,
    resolution: f64,
    label: String,
    discretization: Discretization,
    landmarks: Vec<usize>,
    index: OnceLock<SpatialGrid>,
}

impl PointCloud {
    /// Validates nonemptiness, finiteness, distinctness and normalization.
    pub fn new(
        dim: usize,
        coords: Vec<f64>,
        boundary: Vec<bool>,
        resolution: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 || dim > 3 {
            return Err(Error::InvalidInput(format!("unsupported dimension {dim}")));
        }
        if coords.is_empty() || coords.len() % dim != 0 {
            return Err(Error::InvalidInput("point cloud must be nonempty".into()));
        }
        let m = coords.len() / dim;
        if boundary.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: boundary.len() });
        }
        if let Some(v) = coords.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("coordinate {v}")));
        }
        if let Some(v) = coords.iter().find(|v| v.abs() > NORMALIZATION_RADIUS + 1e-12) {
            return Err(Error::InvalidInput(format!(
                "coordinate {v} outside the normalization cube [-1/4, 1/4]^d"
            )));
        }
        let mut seen = HashSet::with_capacity(m);
        for p in coords.chunks_exact(dim) {
            let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
            if !seen.insert(key) {
                return Err(Error::InvalidInput(format!("duplicate point {p:?}")));
            }
        }
        Ok(PointCloud {
            dim,
            coords,
            boundary,
            resolution,
            label: label.into(),
            discretization: Discretization::Points,
            landmarks: Vec::new(),
            index: OnceLock::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.boundary[i]
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    /// Lattice spacing, or the finest generation scale for fractal iterates.
    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn discretization(&self) -> Discretization {
        self.discretization
    }

    /// Distinguished boundary points (corners, cusp tips, extreme endpoints).
    pub fn landmarks(&self) -> &[usize] {
        &self.landmarks
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.boundary[i]).collect()
    }

    /// Landmarks plus at most `cap` other boundary points drawn with a fixed
    /// seed; ascending.
    pub fn boundary_sample(&self, cap: usize, seed: u64) -> Vec<usize> {
        let rest: Vec<usize> = self.boundary_indices().into_iter().filter(|i| !self.landmarks.contains(i)).collect();
        let mut out = self.landmarks.clone();
        if rest.len() <= cap {
            out.extend(rest);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            out.extend(rand::seq::index::sample(&mut rng, rest.len(), cap).into_iter().map(|k| rest[k]));
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    fn index(&self) -> &SpatialGrid {
        self.index
            .get_or_init(|| SpatialGrid::build(self.dim, &self.coords, self.resolution))
    }

    /// Indices of points in the closed ball `B(x0, eps)`, ascending.
    pub fn ball_indices(&self, x0: &[f64], eps: f64) -> Vec<usize> {
        self.index().within(&self.coords, x0, eps)
    }

    /// Nearest cloud point to `x` and its distance.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        self.index().nearest_to_box(&self.coords, x, x)
    }

    /// Nearest cloud point to the axis-aligned box `[lo, hi]` and the distance.
    pub fn nearest_to_box(&self, lo: &[f64], hi: &[f64]) -> (usize, f64) {
        self.index().nearest_to_box(&self.coords, lo, hi)
    }

    /// Index of a point equal to `x` (within 1e-14), if any.
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        let (i, d) = self.nearest(x);
        (d <= 1e-14).then_some(i)
    }

    pub fn subset(&self, idx: &[usize]) -> PointCloud {
        let mut coords = Vec::with_capacity(idx.len() * self.dim);
        let mut boundary = Vec::with_capacity(idx.len());
        for &i in idx {
            coords.extend_from_slice(self.point(i));
            boundary.push(self.boundary[i]);
        }
        let landmarks = idx
            .iter()
            .enumerate()
            .filter(|(_, i)| self.landmarks.contains(i))
            .map(|(k, _)| k)
            .collect();
        PointCloud {
            dim: self.dim,
            coords,
            boundary,
            resolution: self.resolution,
            label: self.label.clone(),
            discretization: self.discretization,
            landmarks,
            index: OnceLock::new(),
        }
    }

    /// The sub-cloud of boundary-flagged points.
    pub fn boundary_points(&self) -> PointCloud {
        self.subset(&self.boundary_indices())
    }

    /// `K ∩ B(x0, eps)`; may be empty.
    pub fn ball_restrict(&self, x0: &[f64], eps: f64) -> PointCloud {
        self.subset(&self.ball_indices(x0, eps))
    }

    /// Largest pairwise distance (exact for m <= 4000, otherwise bounded via the bounding box).
    pub fn diameter(&self) -> f64 {
        let m = self.len();
        if m <= 4000 {
            let mut best: f64 = 0.0;
            for i in 0..m {
                for j in i + 1..m {
                    best = best.max(dist(self.point(i), self.point(j)));
                }
            }
            return best;
        }
        let mut s = 0.0;
        for j in 0..self.dim {
            let (lo, hi) = self
                .points()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[j]), h.max(p[j])));
            s += (hi - lo) * (hi - lo);
        }
        s.sqrt()
    }

    /// Applies `x -> rot x + shift` without the normalization check (used to
    /// test invariance under rigid motions). Only d = 2 rotations are supported.
    pub fn rigid_motion(&self, angle: f64, shift: &[f64]) -> Result<PointCloud> {
        if shift.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: shift.len() });
        }
        let (s, c) = angle.sin_cos();
        let mut coords = Vec::with_capacity(self.coords.len());
        for p in self.points() {
            match self.dim {
                2 => {
                    coords.push(c * p[0] - s * p[1] + shift[0]);
                    coords.push(s * p[0] + c * p[1] + shift[1]);
                }
                _ => coords.extend(p.iter().zip(shift).map(|(a, b)| a + b)),
            }
        }
        let mut out = PointCloud::new(self.dim, coords, self.boundary.clone(), self.resolution, self.label.clone())?;
        out.discretization = self.discretization;
        out.landmarks = self.landmarks.clone();
        Ok(out)
    }

    /// Writes the points file format: one point per line, coordinates then the
    /// boundary flag.
    pub fn write_points<W: Write>(&self, mut w: W) -> Result<()> {
        for (i, p) in self.points().enumerate() {
            let mut line = String::new();
            for v in p {
                line.push_str(&format!("{v:.17e} "));
            }
            line.push(if self.boundary[i] { '1' } else { '0' });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads the points file format. `dim` fixes the number of coordinates;
    /// a trailing `0`/`1` column is the boundary flag (absent means boundary).
    pub fn read_points<R: BufRead>(r: R, dim: usize, label: &str) -> Result<PointCloud> {
        let mut coords = Vec::new();
        let mut boundary = Vec::new();
        for (ln, line) in r.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = t.split_whitespace().collect();
            if fields.len() != dim && fields.len() != dim + 1 {
                return Err(Error::Parse {
                    line: ln + 1,
                    message: format!("expected {dim} or {} fields, found {}", dim + 1, fields.len()),
                });
            }
            for f in &fields[..dim] {
                coords.push(f.parse::<f64>().map_err(|e| Error::Parse {
                    line: ln + 1,
                    message: format!("bad coordinate '{f}': {e}"),
                })?);
            }
            boundary.push(match fields.get(dim) {
                None => true,
                Some(&"1") => true,
                Some(&"0") => false,
                Some(other) => {
                    return Err(Error::Parse {
                        line: ln + 1,
                        message: format!("boundary flag must be 0 or 1, found '{other}'"),
                    })
                }
            });
        }
        let res = estimate_spacing(dim, &coords);
        PointCloud::new(dim, coords, boundary, res, label)
    }

    pub fn load_points(path: &Path, dim: usize) -> Result<PointCloud> {
        let f = std::fs::File::open(path)?;
        PointCloud::read_points(std::io::BufReader::new(f), dim, &format!("points_file:{}", path.display()))
    }
}

fn estimate_spacing(dim: usize, coords: &[f64]) -> f64 {
    let m = coords.len() / dim;
    if m < 2 {
        return 1e-3;
    }
    let g = SpatialGrid::build(dim, coords, 0.0);
    // median nearest-neighbour distance over a bounded sample
    let step = (m / 256).max(1);
    let mut d: Vec<f64> = (0..m)
        .step_by(step)
        .map(|i| {
            let p = &coords[i * dim..(i + 1) * dim];
            let near = g.within(coords, p, 0.05);
            near.iter()
                .filter(|&&j| j != i)
                .map(|&j| dist(p, &coords[j * dim..(j + 1) * dim]))
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|v| v.is_finite())
        .collect();
    if d.is_empty() {
        return 1e-3;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean distance from `x` to the affine hull of `anchors`, via
/// Gram-Schmidt with one re-orthogonalization pass.
pub fn dist_to_affine_hull(x: &[f64], anchors: &[&[f64]]) -> f64 {
    assert!(!anchors.is_empty(), "anchors must be nonempty");
    let a0 = anchors[0];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for a in &anchors[1..] {
        let mut v: Vec<f64> = a.iter().zip(a0).map(|(p, q)| p - q).collect();
        let raw = norm(&v);
        if raw == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
            }
        }
        let n = norm(&v);
        if n < 1e-12 * raw.max(1.0) || n < 1e-12 {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi /= n);
        basis.push(v);
    }
    let mut r: Vec<f64> = x.iter().zip(a0).map(|(p, q)| p - q).collect();
    for _ in 0..2 {
        for b in &basis {
            let c = dot(&r, b);
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri -= c * bi);
        }
    }
    norm(&r)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Builds the cloud described by `spec`. Deterministic, point order included.
pub fn generate(spec: &SetSpec) -> Result<PointCloud> {
    spec.validate()?;
    let label = spec.family.to_string();
    let mut cloud = match &spec.family {
        SetFamily::Square => {
            let half = spec.size / 2.0;
            let mut c = lattice_set(2, spec.h, &label, |p| p[0].abs() <= half + tol(spec.h) && p[1].abs() <= half + tol(spec.h), half, &[])?;
            let e = (half / spec.h + 1e-9).floor() * spec.h;
            c.landmarks = [[-e, -e], [e, -e], [e, e], [-e, e]].iter().filter_map(|q| c.find(q)).collect();
            c
        }
        SetFamily::Disk => {
            let r = spec.size / 2.0;
            lattice_set(2, spec.h, &label, |p| p[0] * p[0] + p[1] * p[1] <= r * r * (1.0 + 1e-12), r, &[])?
        }
        SetFamily::Interval => {
            let half = spec.size / 2.0;
            let mut c = lattice_set(1, spec.h, &label, |p| p[0].abs() <= half + tol(spec.h), half, &[])?;
            c.landmarks = vec![0, c.len() - 1];
            c
        }
        SetFamily::Segment => segment(spec)?,
        SetFamily::CuspOut { p } => cusp_out(*p, spec)?,
        SetFamily::CuspIn { p } => cusp_in(*p, spec)?,
        SetFamily::Cantor { depth } => cantor(*depth)?,
        SetFamily::Sierpinski { depth } => sierpinski(*depth)?,
        SetFamily::PointsFile { path } => {
            let dim = spec.dim().unwrap_or_else(|| sniff_dim(path).unwrap_or(2));
            return PointCloud::load_points(path, dim);
        }
    };
    cloud.label = label;
    Ok(cloud)
}

fn sniff_dim(path: &Path) -> Option<usize> {
    let text = std::fs::read_to_string(path).ok()?;
    let first = text.lines().find(|l| !l.trim().is_empty() && !l.trim().starts_with('#'))?;
    let n = first.split_whitespace().count();
    // a trailing 0/1 flag is ambiguous with a coordinate; flags are written as bare integers
    let last = first.split_whitespace().last()?;
    if (last == "0" || last == "1") && n >= 2 {
        Some(n - 1)
    } else {
        Some(n)
    }
}

fn tol(h: f64) -> f64 {
    1e-9 * h
}

/// Lattice points `h * Z^d` inside `member`, scanning the box `[-extent, extent]^d`.
/// Boundary: some axis neighbour at step h lies outside. `extra` are exact
/// boundary points appended after the lattice.
fn lattice_set(
    dim: usize,
    h: f64,
    label: &str,
    member: impl Fn(&[f64]) -> bool,
    extent: f64,
    extra: &[Vec<f64>],
) -> Result<PointCloud> {
    let n = (extent / h + 1e-9).floor() as i64;
    let mut coords = Vec::new();
    let mut boundary = Vec::new();
    let mut idx = vec![-n; dim];
    let mut p = vec![0.0; dim];
    let mut q = vec![0.0; dim];
    loop {
        for j in 0..dim {
            p[j] = idx[j] as f64 * h;
        }
        if member(&p) {
            let mut b = false;
            for j in 0..dim {
                for s in [-1.0, 1.0] {
                    q.copy_from_slice(&p);
                    q[j] += s * h;
                    if !member(&q) {
                        b = true;
                    }
                }
            }
            coords.extend_from_slice(&p);
            boundary.push(b);
        }
        let mut j = 0;
        loop {
            if j == dim {
                let mut seen: HashSet<Vec<u64>> =
                    coords.chunks_exact(dim).map(|c| c.iter().map(|v| (v + 0.0).to_bits()).collect()).collect();
                for e in extra {
                    let key: Vec<u64> = e.iter().map(|v| (v + 0.0).to_bits()).collect();
                    if seen.insert(key) {
                        coords.extend_from_slice(e);
                        boundary.push(true);
                    }
                }
                let mut c = PointCloud::new(dim, coords, boundary, h, label)?;
                c.discretization = Discretization::Lattice;
                return Ok(c);
            }
            if idx[j] < n {
                idx[j] += 1;
                break;
            }
            idx[j] = -n;
            j += 1;
        }
    }
}

fn segment(spec: &SetSpec) -> Result<PointCloud> {
    let half = spec.size / 2.0;
    let n = (half / spec.h + 1e-9).floor() as i64;
    let mut coords = Vec::new();
    for i in -n..=n {
        coords.push(i as f64 * spec.h);
        coords.push(0.0);
    }
    let m = coords.len() / 2;
    let mut c = PointCloud::new(2, coords, vec![true; m], spec.h, "segment")?;
    c.discretization = Discretization::Lattice;
    c.landmarks = vec![0, m - 1];
    Ok(c)
}

fn cusp_out(p: f64, spec: &SetSpec) -> Result<PointCloud> {
    let len = spec.size;
    if len.powf(p) > NORMALIZATION_RADIUS || len > NORMALIZATION_RADIUS + 1e-12 {
        return Err(Error::InvalidSpec(format!("cusp length {len} leaves the normalization cube")));
    }
    let h = spec.h;
    let member = |q: &[f64]| q[0] >= -tol(h) && q[0] <= len + tol(h) && q[1].abs() <= q[0].max(0.0).powf(p) * (1.0 + 1e-12);
    let nx = (len / h + 1e-9).floor() as i64;
    let mut extra = Vec::new();
    for i in 1..=nx {
        let x = i as f64 * h;
        let w = x.powf(p);
        extra.push(vec![x, w]);
        extra.push(vec![x, -w]);
    }
    let mut c = lattice_set(2, h, "cusp_out", member, len, &extra)?;
    c.landmarks = c.find(&[0.0, 0.0]).into_iter().collect();
    Ok(c)
}

fn cusp_in(p: f64, spec: &SetSpec) -> Result<PointCloud> {
    let half = spec.size / 2.0;
    let h = spec.h;
    let member = |q: &[f64]| {
        let in_square = q[0].abs() <= half + tol(h) && q[1].abs() <= half + tol(h);
        let in_notch = q[0] > 0.0 && q[1].abs() < q[0].powf(p) * (1.0 - 1e-12);
        in_square && !in_notch
    };
    let nx = (half / h + 1e-9).floor() as i64;
    let mut extra = Vec::new();
    for i in 1..=nx {
        let x = i as f64 * h;
        let w = x.powf(p);
        if w <= half {
            extra.push(vec![x, w]);
            extra.push(vec![x, -w]);
        }
    }
    let mut c = lattice_set(2, h, "cusp_in", member, half, &extra)?;
    c.landmarks = c.find(&[0.0, 0.0]).into_iter().collect();
    Ok(c)
}

/// Endpoints of the depth-`depth` middle-thirds iterate of `[0, 1/4]`.
fn cantor(depth: u32) -> Result<PointCloud> {
    // integer endpoints on the grid 3^-depth of [0, 1]
    let scale = 3i64.pow(depth);
    let mut ends: Vec<i64> = vec![0, scale];
    let mut intervals = vec![(0i64, scale)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(intervals.len() * 2);
        for (a, b) in intervals {
            let t = (b - a) / 3;
            next.push((a, a + t));
            next.push((b - t, b));
        }
        intervals = next;
    }
    ends.clear();
    for (a, b) in &intervals {
        ends.push(*a);
        ends.push(*b);
    }
    let coords: Vec<f64> = ends.iter().map(|&e| 0.25 * e as f64 / scale as f64).collect();
    let m = coords.len();
    let mut c = PointCloud::new(1, coords, vec![true; m], 0.25 / scale as f64, format!("cantor:{depth}"))?;
    c.discretization = Discretization::Iterate { depth };
    c.landmarks = vec![0, m - 1];
    Ok(c)
}

/// Vertices of the depth-`depth` Sierpinski iterate of the equilateral triangle
/// with side 1/2 centred in the normalization cube.
fn sierpinski(depth: u32) -> Result<PointCloud> {
    let n = 1i64 << depth;
    // barycentric lattice coordinates (i, j): vertex = A + i/n (B - A) + j/n (C - A)
    let mut tris = vec![(0i64, 0i64, n)];
    for _ in 0..depth {
        let mut next = Vec::with_capacity(tris.len() * 3);
        for (i, j, s) in tris {
            let t = s / 2;
            next.push((i, j, t));
            next.push((i + t, j, t));
            next.push((i, j + t, t));
        }
        tris = next;
    }
    let mut seen = HashSet::new();
    let mut verts = Vec::new();
    for (i, j, s) in tris {
        for v in [(i, j), (i + s, j), (i, j + s)] {
            if seen.insert(v) {
                verts.push(v);
            }
        }
    }
    let height = 3f64.sqrt() / 4.0;
    let a = [-0.25, -height / 2.0];
    let b = [0.25, -height / 2.0];
    let cpt = [0.0, height / 2.0];
    let mut coords = Vec::with_capacity(verts.len() * 2);
    for (i, j) in &verts {
        let (u, v) = (*i as f64 / n as f64, *j as f64 / n as f64);
        coords.push(a[0] + u * (b[0] - a[0]) + v * (cpt[0] - a[0]));
        coords.push(a[1] + u * (b[1] - a[1]) + v * (cpt[1] - a[1]));
    }
    let m = verts.len();
    let mut c = PointCloud::new(2, coords, vec![true; m], 0.5 / n as f64, format!("sierpinski:{depth}"))?;
    c.discretization = Discretization::Iterate { depth };
    c.landmarks = [(0, 0), (n, 0), (0, n)]
        .iter()
        .filter_map(|v| verts.iter().position(|w| w == v))
        .collect();
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_count_and_boundary() {
        let c = generate(&SetSpec::square(1.0 / 256.0)).unwrap();
        assert_eq!(c.len(), 129 * 129);
        let b = c.boundary_points();
        assert_eq!(b.len(), 4 * 128);
        for p in b.points() {
            assert!((p[0].abs() - 0.25).abs() < 1e-12 || (p[1].abs() - 0.25).abs() < 1e-12);
        }
        assert_eq!(c.landmarks().len(), 4);
        for &i in c.landmarks() {
            assert!(c.point(i).iter().all(|v| (v.abs() - 0.25).abs() < 1e-12));
        }
    }

    #[test]
    fn cantor_depth_three() {
        let c = generate(&SetSpec::cantor(3)).unwrap();
        assert_eq!(c.len(), 16);
        assert_eq!(c.boundary_points().len(), 16);
        assert!((c.resolution() - 0.25 / 27.0).abs() < 1e-15);
        let first: Vec<f64> = c.points().take(4).map(|p| p[0]).collect();
        assert_eq!(first, vec![0.0, 0.25 / 27.0, 0.25 * 2.0 / 27.0, 0.25 * 3.0 / 27.0]);
    }

    #[test]
    fn segment_is_flat() {
        let c = generate(&SetSpec::segment(1.0 / 64.0)).unwrap();
        assert!(c.points().all(|p| p[1] == 0.0));
        assert_eq!(c.boundary_points().len(), c.len());
    }

    #[test]
    fn disk_boundary_is_a_thin_ring() {
        let h = 1.0 / 128.0;
        let c = generate(&SetSpec::disk(h)).unwrap();
        let b = c.boundary_points();
        assert!(b.len() > 0 && b.len() < c.len() / 4);
        for p in b.points() {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!(r <= 0.25 + 1e-12 && r >= 0.25 - 2f64.sqrt() * h, "r = {r}");
        }
    }

    #[test]
    fn boundary_points_have_outside_neighbour() {
        let h = 1.0 / 64.0;
        for spec in [SetSpec::square(h), SetSpec::disk(h), SetSpec::cusp_out(2.0, h)] {
            let c = generate(&spec).unwrap();
            for i in c.boundary_indices() {
                let p = c.point(i);
                let has_gap = (0..2).any(|j| {
                    [-1.0, 1.0].iter().any(|s| {
                        let mut q = p.to_vec();
                        q[j] += s * h;
                        c.find(&q).is_none()
                    })
                });
                assert!(has_gap, "{} point {p:?}", c.label());
            }
        }
    }

    #[test]
    fn ball_restrict_examples() {
        let h = 1.0 / 256.0;
        let c = generate(&SetSpec::square(h)).unwrap();
        let corner = [-0.25, -0.25];
        let b = c.ball_restrict(&corner, h / 2.0);
        assert_eq!(b.len(), 1);
        assert_eq!(b.point(0), &corner);
        let x0 = c.point(100).to_vec();
        assert!(c.ball_restrict(&x0, 1e-9).points().any(|p| p == x0.as_slice()));
        assert_eq!(c.ball_restrict(&x0, 2.0).len(), c.len());
        assert!(c.ball_restrict(&[0.49, 0.49], 0.01).is_empty());
    }

    #[test]
    fn affine_hull_examples() {
        assert!((dist_to_affine_hull(&[3.0, 4.0], &[&[0.0, 0.0]]) - 5.0).abs() < 1e-12);
        assert!((dist_to_affine_hull(&[5.0, 2.0], &[&[0.0, 0.0], &[1.0, 0.0]]) - 2.0).abs() < 1e-12);
        assert!(dist_to_affine_hull(&[0.3, -7.0], &[&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]) < 1e-12);
        // permutation and redundant anchors
        let a: [&[f64]; 3] = [&[0.1, 0.2, 0.0], &[1.0, -0.5, 0.3], &[0.4, 0.4, 0.4]];
        let x = [0.7, -0.1, 2.0];
        let d0 = dist_to_affine_hull(&x, &a);
        let d1 = dist_to_affine_hull(&x, &[a[2], a[0], a[1]]);
        let mid = [0.55, -0.15, 0.15];
        let d2 = dist_to_affine_hull(&x, &[a[0], a[1], a[2], &mid]);
        assert!((d0 - d1).abs() < 1e-10 && (d0 - d2).abs() < 1e-10);
    }

    #[test]
    fn generation_is_deterministic_and_refinement_keeps_membership() {
        let a = generate(&SetSpec::cusp_out(2.0, 1.0 / 64.0)).unwrap();
        let b = generate(&SetSpec::cusp_out(2.0, 1.0 / 64.0)).unwrap();
        assert_eq!(a.coords(), b.coords());
        assert_eq!(a.boundary_flags(), b.boundary_flags());
        for spec in [SetSpec::disk(1.0 / 32.0), SetSpec::square(1.0 / 32.0)] {
            let coarse = generate(&spec).unwrap();
            let mut fine_spec = spec.clone();
            fine_spec.h /= 2.0;
            let fine = generate(&fine_spec).unwrap();
            for p in coarse.points() {
                assert!(fine.find(p).is_some(), "{p:?} lost under refinement");
            }
        }
    }

    #[test]
    fn sierpinski_vertex_count() {
        for depth in 1..=5u32 {
            let c = generate(&SetSpec::sierpinski(depth)).unwrap();
            assert_eq!(c.len() as u64, (3u64.pow(depth + 1) + 3) / 2);
            assert_eq!(c.landmarks().len(), 3);
        }
    }

    #[test]
    fn points_file_round_trip_and_errors() {
        let c = generate(&SetSpec::cusp_out(2.0, 1.0 / 32.0)).unwrap();
        let mut buf = Vec::new();
        c.write_points(&mut buf).unwrap();
        let back = PointCloud::read_points(&buf[..], 2, "x").unwrap();
        assert_eq!(back.coords(), c.coords());
        assert_eq!(back.boundary_flags(), c.boundary_flags());
        let no_flags = PointCloud::read_points("0.1 0.2\n-0.1 0\n".as_bytes(), 2, "x").unwrap();
        assert!(no_flags.boundary_flags().iter().all(|&b| b));
        assert!(matches!(
            PointCloud::read_points("0.1 zz\n".as_bytes(), 2, "x"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(PointCloud::read_points("0.9 0.0\n".as_bytes(), 2, "x").is_err());
        assert!(matches!(SetFamily::parse("pentagon"), Err(Error::UnknownFamily(_))));
        assert_eq!(SetFamily::parse("cusp_out:2").unwrap(), SetFamily::CuspOut { p: 2.0 });
        assert!(SetFamily::parse("cusp_out:0.5").is_err());
    }
}
