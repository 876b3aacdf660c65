//! Uniform-grid bucket index over a flat point array (d <= 3).

#[derive(Clone, Debug)]
pub struct SpatialGrid {
    dim: usize,
    origin: Vec<f64>,
    cell: f64,
    counts: Vec<usize>,
    // CSR layout: points of cell c are order[start[c]..start[c + 1]]
    start: Vec<usize>,
    order: Vec<usize>,
}

impl SpatialGrid {
    /// Builds the index; `coords` is row-major `m x dim`.
    pub fn build(dim: usize, coords: &[f64], hint_spacing: f64) -> Self {
        let m = coords.len() / dim;
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for p in coords.chunks_exact(dim) {
            for j in 0..dim {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        let extent: Vec<f64> = (0..dim).map(|j| (hi[j] - lo[j]).max(1e-12)).collect();
        let vol: f64 = extent.iter().product();
        let even = (vol / m.max(1) as f64).powf(1.0 / dim as f64) * 1.5;
        let mut cell = even.max(hint_spacing).max(1e-9);
        // keep the cell count bounded by ~4m
        loop {
            let n: f64 = extent.iter().map(|e| (e / cell).floor() + 1.0).product();
            if n <= 4.0 * m.max(16) as f64 {
                break;
            }
            cell *= 1.5;
        }
        let counts: Vec<usize> = extent.iter().map(|e| (e / cell).floor() as usize + 1).collect();
        let ncells: usize = counts.iter().product();
        let mut grid = SpatialGrid {
            dim,
            origin: lo,
            cell,
            counts,
            start: vec![0; ncells + 1],
            order: vec![0; m],
        };
        let keys: Vec<usize> = coords
            .chunks_exact(dim)
            .map(|p| grid.linear(&grid.cell_of(p)))
            .collect();
        for &k in &keys {
            grid.start[k + 1] += 1;
        }
        for c in 0..ncells {
            grid.start[c + 1] += grid.start[c];
        }
        let mut fill = grid.start.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.order[fill[k]] = i;
            fill[k] += 1;
        }
        grid
    }

    fn cell_of(&self, p: &[f64]) -> Vec<isize> {
        (0..self.dim)
            .map(|j| ((p[j] - self.origin[j]) / self.cell).floor() as isize)
            .collect()
    }

    fn clamp_cell(&self, c: &[isize]) -> Vec<isize> {
        c.iter()
            .zip(&self.counts)
            .map(|(&v, &n)| v.clamp(0, n as isize - 1))
            .collect()
    }

    fn linear(&self, c: &[isize]) -> usize {
        let mut k = 0usize;
        for j in (0..self.dim).rev() {
            k = k * self.counts[j] + c[j] as usize;
        }
        k
    }

    fn for_each_in_range(&self, lo: &[isize], hi: &[isize], mut f: impl FnMut(usize)) {
        let lo = self.clamp_cell(lo);
        let hi = self.clamp_cell(hi);
        let mut cur = lo.clone();
        loop {
            let k = self.linear(&cur);
            for &i in &self.order[self.start[k]..self.start[k + 1]] {
                f(i);
            }
            let mut j = 0;
            loop {
                if j == self.dim {
                    return;
                }
                if cur[j] < hi[j] {
                    cur[j] += 1;
                    break;
                }
                cur[j] = lo[j];
                j += 1;
            }
        }
    }

    /// Indices of points with `|p - x| <= r`, ascending.
    pub fn within(&self, coords: &[f64], x: &[f64], r: f64) -> Vec<usize> {
        let lo: Vec<f64> = x.iter().map(|v| v - r).collect();
        let hi: Vec<f64> = x.iter().map(|v| v + r).collect();
        let r2 = r * r;
        let mut out = Vec::new();
        self.for_each_in_range(&self.cell_of(&lo), &self.cell_of(&hi), |i| {
            let p = &coords[i * self.dim..(i + 1) * self.dim];
            let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 <= r2 {
                out.push(i);
            }
        });
        out.sort_unstable();
        out
    }

    /// Nearest point to the box `[lo, hi]` (a point when `lo == hi`); ties go
    /// to the smaller index.
    pub fn nearest_to_box(&self, coords: &[f64], lo: &[f64], hi: &[f64]) -> (usize, f64) {
        let clo = self.cell_of(lo);
        let chi = self.cell_of(hi);
        let mut best = (usize::MAX, f64::INFINITY);
        let box_dist = |p: &[f64]| -> f64 {
            let mut s = 0.0;
            for j in 0..p.len() {
                let d = (lo[j] - p[j]).max(p[j] - hi[j]).max(0.0);
                s += d * d;
            }
            s.sqrt()
        };
        let max_ring = self.counts.iter().copied().max().unwrap_or(1) as isize + 1
            + clo
                .iter()
                .chain(chi.iter())
                .map(|c| c.abs())
                .max()
                .unwrap_or(0);
        let mut visited_all = false;
        for k in 0..=max_ring {
            // points in ring k are at least (k - 1) * cell away from the box
            if best.0 != usize::MAX && (k as f64 - 1.0) * self.cell > best.1 {
                break;
            }
            let lo_k: Vec<isize> = clo.iter().map(|c| c - k).collect();
            let hi_k: Vec<isize> = chi.iter().map(|c| c + k).collect();
            let lo_in: Vec<isize> = clo.iter().map(|c| c - k + 1).collect();
            let hi_in: Vec<isize> = chi.iter().map(|c| c + k - 1).collect();
            let mut scan = |i: usize| {
                let p = &coords[i * self.dim..(i + 1) * self.dim];
                let d = box_dist(p);
                if d < best.1 || (d == best.1 && i < best.0) {
                    best = (i, d);
                }
            };
            // visit only cells on the ring shell
            self.for_each_shell(&lo_k, &hi_k, &lo_in, &hi_in, k == 0, &mut scan);
            if (0..self.dim).all(|j| lo_k[j] <= 0 && hi_k[j] >= self.counts[j] as isize - 1) {
                visited_all = true;
            }
            if visited_all && best.0 != usize::MAX {
                break;
            }
        }
        best
    }

    fn for_each_shell(
        &self,
        lo: &[isize],
        hi: &[isize],
        lo_in: &[isize],
        hi_in: &[isize],
        whole: bool,
        f: &mut impl FnMut(usize),
    ) {
        let lo_c = self.clamp_cell(lo);
        let hi_c = self.clamp_cell(hi);
        // empty after clamping
        for j in 0..self.dim {
            if lo[j] > self.counts[j] as isize - 1 || hi[j] < 0 {
                return;
            }
        }
        let mut cur = lo_c.clone();
        loop {
            let inner = !whole && (0..self.dim).all(|j| cur[j] >= lo_in[j] && cur[j] <= hi_in[j]);
            if !inner {
                let k = self.linear(&cur);
                for &i in &self.order[self.start[k]..self.start[k + 1]] {
                    f(i);
                }
            }
            let mut j = 0;
            loop {
                if j == self.dim {
                    return;
                }
                if cur[j] < hi_c[j] {
                    cur[j] += 1;
                    break;
                }
                cur[j] = lo_c[j];
                j += 1;
            }
        }
    }
}
