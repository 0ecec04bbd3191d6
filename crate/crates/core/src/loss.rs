//! Squared and percentage losses, subgradients in the flat layout, and the
//! sparse indicator vectors used to write constraints of the DC subproblems.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{LDerParams, ModelDims};

/// Feature rows `x` (m×n) with one target per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    x: Matrix,
    y: Vec<f64>,
}

impl TrainingSet {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dim("targets vs feature rows", x.rows(), y.len()));
        }
        if y.is_empty() {
            return Err(Error::domain("training set must contain at least one sample"));
        }
        if !x.is_finite() || !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("training set"));
        }
        Ok(TrainingSet { x, y })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    #[inline]
    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    #[inline]
    pub fn sample(&self, i: usize) -> (&[f64], f64) {
        (self.x.row(i), self.y[i])
    }

    pub fn subset(&self, idx: &[usize]) -> Result<TrainingSet> {
        let y = idx.iter().map(|&i| self.y[i]).collect();
        TrainingSet::new(self.x.select_rows(idx), y)
    }

    pub(crate) fn check_dims(&self, dims: ModelDims) -> Result<()> {
        if self.n_features() != dims.n {
            return Err(Error::dim("training set features", dims.n, self.n_features()));
        }
        Ok(())
    }
}

/// Sparse vector over the flat parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAlphaVec {
    len: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseAlphaVec {
    /// Entries must have strictly increasing, in-range indices.
    pub fn new(len: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::domain("sparse indices must be strictly increasing"));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= len {
                return Err(Error::Index { index: i, bound: len });
            }
        }
        Ok(SparseAlphaVec { len, entries })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn dot(&self, alpha: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * alpha[i]).sum()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// `out += coef · self`
    pub fn add_scaled_to(&self, coef: f64, out: &mut [f64]) {
        for &(i, v) in &self.entries {
            out[i] += coef * v;
        }
    }

    /// `self − other`, dropping entries that cancel exactly.
    pub fn sub(&self, other: &SparseAlphaVec) -> SparseAlphaVec {
        let mut out = Vec::with_capacity(self.entries.len() + other.entries.len());
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() || j < b.len() {
            let next = match (a.get(i), b.get(j)) {
                (Some(&(ia, va)), Some(&(ib, vb))) if ia == ib => {
                    i += 1;
                    j += 1;
                    (ia, va - vb)
                }
                (Some(&(ia, va)), Some(&(ib, _))) if ia < ib => {
                    i += 1;
                    (ia, va)
                }
                (Some(&(ia, va)), None) => {
                    i += 1;
                    (ia, va)
                }
                (_, Some(&(ib, vb))) => {
                    j += 1;
                    (ib, -vb)
                }
                (None, None) => unreachable!(),
            };
            if next.1 != 0.0 {
                out.push(next);
            }
        }
        SparseAlphaVec {
            len: self.len,
            entries: out,
        }
    }
}

/// Vector holding `(x, 1)` in block `s` (0-based over both branches) and zeros elsewhere,
/// so that its inner product with the flat parameters is the value of piece `s` at `x`.
pub fn indicator_vector(x: &[f64], s: usize, dims: ModelDims) -> Result<SparseAlphaVec> {
    if x.len() != dims.n {
        return Err(Error::dim("input vector", dims.n, x.len()));
    }
    if s >= dims.blocks() {
        return Err(Error::Index {
            index: s,
            bound: dims.blocks(),
        });
    }
    let off = dims.block_offset(s);
    let mut entries: Vec<(usize, f64)> = x
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(k, v)| (off + k, *v))
        .collect();
    entries.push((off + dims.n, 1.0));
    Ok(SparseAlphaVec {
        len: dims.flat_len(),
        entries,
    })
}

/// `v = e(j1) − e(r1 + j2)` with the active pieces of `p` at `x`; `⟨v, α⟩ = predict(x)`.
pub fn active_difference_vector(p: &LDerParams, x: &[f64]) -> Result<SparseAlphaVec> {
    let dims = p.dims();
    let (j1, j2) = p.active_indices(x)?;
    Ok(indicator_vector(x, j1, dims)?.sub(&indicator_vector(x, dims.r1 + j2, dims)?))
}

/// Mean squared error of `p` on `t`.
pub fn mse(p: &LDerParams, t: &TrainingSet) -> Result<f64> {
    t.check_dims(p.dims())?;
    Ok(mse_unchecked(p, t))
}

pub(crate) fn mse_unchecked(p: &LDerParams, t: &TrainingSet) -> f64 {
    let sum: f64 = (0..t.len())
        .map(|i| {
            let (x, y) = t.sample(i);
            let r = y - p.predict_unchecked(x);
            r * r
        })
        .sum();
    sum / t.len() as f64
}

/// Mean absolute percentage error. Returns `f64::INFINITY` when some target is zero.
pub fn mape(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::dim("mape prediction length", y.len(), y_hat.len()));
    }
    if y.is_empty() {
        return Err(Error::domain("mape of an empty vector"));
    }
    if y.iter().any(|v| *v == 0.0) {
        return Ok(f64::INFINITY);
    }
    let s: f64 = y
        .iter()
        .zip(y_hat)
        .map(|(t, p)| libm::fabs(t - p) / libm::fabs(*t))
        .sum();
    Ok(s / y.len() as f64)
}

/// Subgradient of the MSE in the flat layout: `(2/m) Σ (τ(x_i) − y_i) v_i`.
pub fn grad_mse(p: &LDerParams, batch: &TrainingSet) -> Result<Vec<f64>> {
    batch.check_dims(p.dims())?;
    let mut g = vec![0.0; p.dims().flat_len()];
    grad_mse_into(p, batch, 0..batch.len(), &mut g);
    Ok(g)
}

/// Accumulates the MSE subgradient over the sample indices `idx` into `out`
/// (overwritten), scaled by `2 / |idx|`.
pub(crate) fn grad_mse_into(
    p: &LDerParams,
    t: &TrainingSet,
    idx: impl IntoIterator<Item = usize> + Clone,
    out: &mut [f64],
) {
    let dims = p.dims();
    let n = dims.n;
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut count = 0usize;
    for i in idx {
        count += 1;
        let (x, y) = t.sample(i);
        let (j1, v1) = p.first_branch(x);
        let (j2, v2) = p.second_branch(x);
        let r = v1 - v2 - y;
        let o1 = dims.block_offset(j1);
        let o2 = dims.block_offset(dims.r1 + j2);
        for k in 0..n {
            out[o1 + k] += r * x[k];
            out[o2 + k] -= r * x[k];
        }
        out[o1 + n] += r;
        out[o2 + n] -= r;
    }
    let scale = 2.0 / count as f64;
    out.iter_mut().for_each(|v| *v *= scale);
}

/// Central finite-difference gradient of `f` at `alpha`.
pub fn finite_diff_grad<F>(mut f: F, alpha: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::domain("finite difference step must be positive"));
    }
    let mut probe = alpha.to_vec();
    let mut g = Vec::with_capacity(alpha.len());
    for k in 0..alpha.len() {
        probe[k] = alpha[k] + h;
        let fp = f(&probe);
        probe[k] = alpha[k] - h;
        let fm = f(&probe);
        probe[k] = alpha[k];
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}
