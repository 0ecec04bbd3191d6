//! The linear dilation-erosion regressor and its flat parameter layout.
//!
//! Parameters are stored as one flat vector
//! `(w_1, a_1, ..., w_r1, a_r1, m_1, b_1, ..., m_r2, b_r2)`: every row of the
//! weight matrices is followed by its bias, dilation branch first. Block `s`
//! (0-based) of length `n + 1` is the affine piece `s` for `s < r1`, and piece
//! `s - r1` of the second branch otherwise.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Input dimension and the number of affine pieces in each branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub n: usize,
    pub r1: usize,
    pub r2: usize,
}

impl ModelDims {
    pub fn new(n: usize, r1: usize, r2: usize) -> Result<Self> {
        if n == 0 || r1 == 0 || r2 == 0 {
            return Err(Error::domain("model dimensions n, r1, r2 must be positive"));
        }
        Ok(ModelDims { n, r1, r2 })
    }

    /// Length of one affine block, `n + 1`.
    #[inline]
    pub fn block_len(&self) -> usize {
        self.n + 1
    }

    /// Total number of affine pieces, `r1 + r2`.
    #[inline]
    pub fn blocks(&self) -> usize {
        self.r1 + self.r2
    }

    /// `(r1 + r2)(n + 1)`
    #[inline]
    pub fn flat_len(&self) -> usize {
        self.blocks() * self.block_len()
    }

    /// Offset of block `s` inside the flat vector.
    #[inline]
    pub fn block_offset(&self, s: usize) -> usize {
        s * self.block_len()
    }
}

/// Max-plus dilation `max_j (a_j + x_j)`.
pub fn dilation(a: &[f64], x: &[f64]) -> Result<f64> {
    if a.len() != x.len() {
        return Err(Error::dim("dilation operand length", a.len(), x.len()));
    }
    if a.is_empty() {
        return Err(Error::domain("dilation of an empty vector"));
    }
    Ok(a.iter()
        .zip(x)
        .map(|(ai, xi)| ai + xi)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Min-plus erosion `min_j (b_j + x_j)`.
pub fn erosion(b: &[f64], x: &[f64]) -> Result<f64> {
    if b.len() != x.len() {
        return Err(Error::dim("erosion operand length", b.len(), x.len()));
    }
    if b.is_empty() {
        return Err(Error::domain("erosion of an empty vector"));
    }
    Ok(b.iter()
        .zip(x)
        .map(|(bi, xi)| bi + xi)
        .fold(f64::INFINITY, f64::min))
}

/// Parameters `(W, a, M, b)` of a regressor, held in the flat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LDerParams {
    dims: ModelDims,
    alpha: Vec<f64>,
}

impl LDerParams {
    /// All-zero parameters.
    pub fn zeros(dims: ModelDims) -> Self {
        LDerParams {
            dims,
            alpha: alloc::vec![0.0; dims.flat_len()],
        }
    }

    /// Builds parameters from row-major `W` (r1×n), `a`, row-major `M` (r2×n) and `b`.
    pub fn from_parts(dims: ModelDims, w: &[f64], a: &[f64], m: &[f64], b: &[f64]) -> Result<Self> {
        let ModelDims { n, r1, r2 } = dims;
        if a.len() != r1 {
            return Err(Error::dim("bias a", r1, a.len()));
        }
        if b.len() != r2 {
            return Err(Error::dim("bias b", r2, b.len()));
        }
        if w.len() != r1 * n {
            return Err(Error::dim("weights W", r1 * n, w.len()));
        }
        if m.len() != r2 * n {
            return Err(Error::dim("weights M", r2 * n, m.len()));
        }
        let mut alpha = Vec::with_capacity(dims.flat_len());
        for (row, bias) in w.chunks_exact(n).zip(a) {
            alpha.extend_from_slice(row);
            alpha.push(*bias);
        }
        for (row, bias) in m.chunks_exact(n).zip(b) {
            alpha.extend_from_slice(row);
            alpha.push(*bias);
        }
        Self::unflatten(alpha, dims)
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn unflatten(alpha: Vec<f64>, dims: ModelDims) -> Result<Self> {
        if alpha.len() != dims.flat_len() {
            return Err(Error::dim("flat parameter vector", dims.flat_len(), alpha.len()));
        }
        if !alpha.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(LDerParams { dims, alpha })
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.alpha.clone()
    }

    #[inline]
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Mutable access to the flat vector; used by trainers for in-place updates.
    #[inline]
    pub(crate) fn alpha_mut(&mut self) -> &mut [f64] {
        &mut self.alpha
    }

    #[inline]
    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    #[inline]
    fn block(&self, s: usize) -> &[f64] {
        let o = self.dims.block_offset(s);
        &self.alpha[o..o + self.dims.block_len()]
    }

    /// Row `i` of `W`.
    pub fn w_row(&self, i: usize) -> &[f64] {
        &self.block(i)[..self.dims.n]
    }

    pub fn a(&self, i: usize) -> f64 {
        self.block(i)[self.dims.n]
    }

    /// Row `j` of `M`.
    pub fn m_row(&self, j: usize) -> &[f64] {
        &self.block(self.dims.r1 + j)[..self.dims.n]
    }

    pub fn b(&self, j: usize) -> f64 {
        self.block(self.dims.r1 + j)[self.dims.n]
    }

    /// Value of affine piece `s` (0-based over both branches) at `x`. No length check.
    #[inline]
    pub fn piece(&self, s: usize, x: &[f64]) -> f64 {
        let blk = self.block(s);
        dot(&blk[..self.dims.n], x) + blk[self.dims.n]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dims.n {
            return Err(Error::dim("input vector", self.dims.n, x.len()));
        }
        Ok(())
    }

    /// Largest piece of the blocks `range`, lowest index on ties.
    #[inline]
    fn branch_max(&self, range: core::ops::Range<usize>, x: &[f64]) -> (usize, f64) {
        let start = range.start;
        let mut best = (start, self.piece(start, x));
        for s in range.skip(1) {
            let v = self.piece(s, x);
            if v > best.1 {
                best = (s, v);
            }
        }
        best
    }

    /// `δ_a(Wx) = max_i (w_i·x + a_i)` without a length check.
    #[inline]
    pub(crate) fn first_branch(&self, x: &[f64]) -> (usize, f64) {
        self.branch_max(0..self.dims.r1, x)
    }

    /// `δ_b(Mx) = max_j (m_j·x + b_j)`; returned index is 0-based within the branch.
    #[inline]
    pub(crate) fn second_branch(&self, x: &[f64]) -> (usize, f64) {
        let (s, v) = self.branch_max(self.dims.r1..self.dims.blocks(), x);
        (s - self.dims.r1, v)
    }

    /// Both branch values at `x`.
    pub fn branches(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_input(x)?;
        Ok((self.first_branch(x).1, self.second_branch(x).1))
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.first_branch(x).1 - self.second_branch(x).1
    }

    /// `max_i (w_i·x + a_i) − max_j (m_j·x + b_j)`
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub fn predict_batch(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.dims.n {
            return Err(Error::dim("input matrix columns", self.dims.n, x.cols()));
        }
        Ok(x.iter_rows().map(|r| self.predict_unchecked(r)).collect())
    }

    /// 0-based indices of the maximizing piece in each branch; lowest index wins ties.
    pub fn active_indices(&self, x: &[f64]) -> Result<(usize, usize)> {
        self.check_input(x)?;
        Ok((self.first_branch(x).0, self.second_branch(x).0))
    }

    /// Rewrites a model trained on standardized inputs `(x − mean) / std` into an
    /// equivalent model on raw inputs.
    pub fn absorb_standardization(&self, mean: &[f64], std: &[f64]) -> Result<Self> {
        let n = self.dims.n;
        if mean.len() != n || std.len() != n {
            return Err(Error::dim("standardization stats", n, mean.len().min(std.len())));
        }
        let mut alpha = self.alpha.clone();
        for blk in alpha.chunks_exact_mut(n + 1) {
            let mut shift = 0.0;
            for k in 0..n {
                blk[k] /= std[k];
                shift += blk[k] * mean[k];
            }
            blk[n] -= shift;
        }
        Self::unflatten(alpha, self.dims)
    }

    /// Parameters of `x ↦ scale·τ(x) + shift`. Both maxima are positively
    /// homogeneous, so `scale` must be positive.
    pub fn rescale_output(&self, scale: f64, shift: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() || !shift.is_finite() {
            return Err(Error::domain("output scale must be positive and finite"));
        }
        let n = self.dims.n;
        let mut alpha: Vec<f64> = self.alpha.iter().map(|v| v * scale).collect();
        for blk in alpha.chunks_exact_mut(n + 1).take(self.dims.r1) {
            blk[n] += shift;
        }
        Self::unflatten(alpha, self.dims)
    }
}
