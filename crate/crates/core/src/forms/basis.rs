//! Increasing multi-indices and the index tables used by the form operations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing list of zero-based axes, naming the basis element
/// `dx_{i1} ∧ … ∧ dx_{ik}`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(axes: Vec<usize>, dim: usize) -> Result<Self> {
        if axes.len() > dim {
            return Err(Error::DegreeOverflow { degree: axes.len(), dim });
        }
        for w in axes.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Index(format!("axes {axes:?} are not strictly increasing")));
            }
        }
        if let Some(&a) = axes.iter().find(|&&a| a >= dim) {
            return Err(Error::Index(format!("axis {} out of range 1..={dim}", a + 1)));
        }
        Ok(MultiIndex(axes))
    }

    pub fn axes(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Lexicographically ordered basis of k-forms on R^m.
#[derive(Debug, Clone)]
pub struct Basis {
    dim: usize,
    degree: usize,
    indices: Vec<Vec<usize>>,
}

impl Basis {
    pub fn new(dim: usize, degree: usize) -> Self {
        let mut indices = Vec::with_capacity(binomial(dim, degree));
        let mut cur = Vec::with_capacity(degree);
        fn rec(start: usize, dim: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for i in start..dim {
                cur.push(i);
                rec(i + 1, dim, k, cur, out);
                cur.pop();
            }
        }
        if degree <= dim {
            rec(0, dim, degree, &mut cur, &mut indices);
        }
        Basis { dim, degree, indices }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, rank: usize) -> &[usize] {
        &self.indices[rank]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.iter().map(|v| v.as_slice())
    }

    /// Rank of a strictly increasing index.
    pub fn rank(&self, axes: &[usize]) -> Option<usize> {
        self.indices.binary_search_by(|probe| probe.as_slice().cmp(axes)).ok()
    }
}

/// Sort `axes` in place, returning the sign of the sorting permutation, or
/// `None` if an axis repeats.
pub fn sort_with_sign(axes: &mut [usize]) -> Option<f64> {
    let mut sign = 1.0;
    for i in 1..axes.len() {
        let mut j = i;
        while j > 0 && axes[j - 1] > axes[j] {
            axes.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if axes.windows(2).any(|w| w[0] == w[1]) {
        None
    } else {
        Some(sign)
    }
}

/// `(target, source_a, source_b, sign)` entries for `a ∧ b`.
pub(crate) fn wedge_table(dim: usize, ka: usize, kb: usize) -> Vec<(usize, usize, usize, f64)> {
    let (ba, bb, bt) = (Basis::new(dim, ka), Basis::new(dim, kb), Basis::new(dim, ka + kb));
    let mut out = Vec::new();
    for (ia, ax) in ba.iter().enumerate() {
        for (ib, bx) in bb.iter().enumerate() {
            let mut joined: Vec<usize> = ax.iter().chain(bx.iter()).copied().collect();
            if let Some(sign) = sort_with_sign(&mut joined) {
                let it = bt.rank(&joined).expect("sorted index in basis");
                out.push((it, ia, ib, sign));
            }
        }
    }
    out
}

/// `(target, source, axis, sign)` entries for the exterior derivative of a
/// k-form: `(da)_I = Σ_p (-1)^p ∂_{i_p} a_{I \ i_p}`.
pub(crate) fn derivative_table(dim: usize, k: usize) -> Vec<(usize, usize, usize, f64)> {
    let (src, tgt) = (Basis::new(dim, k), Basis::new(dim, k + 1));
    let mut out = Vec::new();
    for (it, idx) in tgt.iter().enumerate() {
        for p in 0..idx.len() {
            let rest: Vec<usize> = idx.iter().enumerate().filter(|&(q, _)| q != p).map(|(_, &a)| a).collect();
            let is = src.rank(&rest).expect("sub-index in basis");
            let sign = if p % 2 == 0 { 1.0 } else { -1.0 };
            out.push((it, is, idx[p], sign));
        }
    }
    out
}

/// `(target, source, axis, sign)` entries for `X ⌟ a` with a of degree k:
/// `(X⌟a)_J = Σ_i X_i a(e_i, e_J)`.
pub(crate) fn interior_table(dim: usize, k: usize) -> Vec<(usize, usize, usize, f64)> {
    let (src, tgt) = (Basis::new(dim, k), Basis::new(dim, k - 1));
    let mut out = Vec::new();
    for (it, j) in tgt.iter().enumerate() {
        for i in 0..dim {
            if j.contains(&i) {
                continue;
            }
            let mut joined = Vec::with_capacity(k);
            joined.push(i);
            joined.extend_from_slice(j);
            let sign = sort_with_sign(&mut joined).expect("distinct axes");
            out.push((it, src.rank(&joined).expect("index in basis"), i, sign));
        }
    }
    out
}
