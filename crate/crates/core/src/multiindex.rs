//! Multi-indices in `N_0^d` and their graded-lexicographic enumeration.

use std::cmp::Ordering;
use std::fmt;

/// A multi-index `alpha = (alpha_1, ..., alpha_d)` of nonnegative integers.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(entries: Vec<u32>) -> Self {
        MultiIndex(entries)
    }

    pub fn zero(dim: usize) -> Self {
        MultiIndex(vec![0; dim])
    }

    /// The unit multi-index `e_j`.
    pub fn unit(dim: usize, j: usize) -> Self {
        let mut e = vec![0; dim];
        e[j] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn entries(&self) -> &[u32] {
        &self.0
    }

    /// `|alpha|`, the sum of the entries.
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&a| a == 0)
    }

    /// `alpha!` as a float.
    pub fn factorial(&self) -> f64 {
        self.0.iter().map(|&a| factorial(a)).product()
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        if !other.le(self) {
            return None;
        }
        Some(MultiIndex(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `x^alpha`.
    pub fn monomial(&self, x: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(x)
            .map(|(&a, &xi)| xi.powi(a as i32))
            .product()
    }

    /// `binom(alpha, gamma) = prod_j binom(alpha_j, gamma_j)`.
    pub fn binomial(&self, gamma: &MultiIndex) -> f64 {
        self.0
            .iter()
            .zip(&gamma.0)
            .map(|(&a, &g)| binomial(a, g))
            .product()
    }

    /// All `gamma <= self` componentwise, in graded-lex order.
    pub fn lower_set(&self) -> Vec<MultiIndex> {
        enumerate(self.dim(), self.order())
            .into_iter()
            .filter(|g| g.le(self))
            .collect()
    }

    /// Position of this index in [`enumerate`] for its dimension.
    pub fn rank(&self) -> usize {
        let d = self.dim();
        let m = self.order() as usize;
        let mut r = if m == 0 { 0 } else { count_up_to(d, m - 1) };
        // position among indices of order m: leading entries are visited in
        // decreasing order
        let mut remaining = m;
        for (j, &a) in self.0.iter().enumerate() {
            let tail = d - j - 1;
            if tail == 0 {
                break;
            }
            let a = a as usize;
            for lead in (a + 1..=remaining).rev() {
                r += compositions(remaining - lead, tail);
            }
            remaining -= a;
        }
        r
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Graded lexicographic: by order first, then larger leading entries first.
impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.order()
            .cmp(&other.order())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Number of multi-indices in `N_0^dim` of order exactly `m`.
fn compositions(m: usize, dim: usize) -> usize {
    if dim == 0 {
        return usize::from(m == 0);
    }
    binom_usize(m + dim - 1, dim - 1)
}

/// Number of multi-indices in `N_0^dim` of order at most `m`: `binom(m + d, d)`.
pub fn count_up_to(dim: usize, m: usize) -> usize {
    binom_usize(m + dim, dim)
}

fn binom_usize(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// All `alpha` in `N_0^dim` with `|alpha| <= max_order`, graded-lex ordered.
pub fn enumerate(dim: usize, max_order: u32) -> Vec<MultiIndex> {
    assert!(dim >= 1, "dimension must be at least 1");
    let mut out = Vec::with_capacity(count_up_to(dim, max_order as usize));
    for m in 0..=max_order {
        out.extend(of_order(dim, m));
    }
    out
}

/// All `alpha` with `|alpha| = m`, larger leading entries first.
pub fn of_order(dim: usize, m: u32) -> Vec<MultiIndex> {
    let mut out = Vec::new();
    let mut buf = vec![0u32; dim];
    fill(&mut buf, 0, m, &mut out);
    out
}

fn fill(buf: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<MultiIndex>) {
    if pos + 1 == buf.len() {
        buf[pos] = remaining;
        out.push(MultiIndex(buf.to_vec()));
        return;
    }
    for lead in (0..=remaining).rev() {
        buf[pos] = lead;
        fill(buf, pos + 1, remaining - lead, out);
    }
}
