//! Small dense and row-sparse linear algebra used by the model and the QP solver.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix data length", rows * cols, data.len()));
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows. An empty slice gives a 0×`cols` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], cols: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::dim("matrix row length", cols, r.len()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on 0, and a 0-column matrix still has rows
        (0..self.rows).map(move |i| self.row(i))
    }

    /// Copies the selected rows, in order, into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    /// `out = self * x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, r) in out.iter_mut().zip(self.iter_rows()) {
            *o = dot(r, x);
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Compressed sparse row matrix. Column indices within a row are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn new(cols: usize) -> Self {
        CsrMatrix {
            rows: 0,
            cols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Appends a row given as `(column, value)` pairs. Duplicate columns are summed
    /// and exact zeros dropped.
    pub fn push_row(&mut self, entries: &[(usize, f64)]) -> Result<()> {
        let mut row: Vec<(usize, f64)> = entries.to_vec();
        row.sort_by_key(|e| e.0);
        let start = self.col_idx.len();
        for (c, v) in row {
            if c >= self.cols {
                return Err(Error::Index {
                    index: c,
                    bound: self.cols,
                });
            }
            if self.col_idx.len() > start && *self.col_idx.last().unwrap() == c {
                *self.values.last_mut().unwrap() += v;
            } else {
                self.col_idx.push(c);
                self.values.push(v);
            }
        }
        // drop entries that cancelled out
        let mut w = start;
        for r in start..self.col_idx.len() {
            if self.values[r] != 0.0 {
                self.col_idx[w] = self.col_idx[r];
                self.values[w] = self.values[r];
                w += 1;
            }
        }
        self.col_idx.truncate(w);
        self.values.truncate(w);
        self.row_ptr.push(w);
        self.rows += 1;
        Ok(())
    }

    pub fn from_dense(m: &Matrix) -> Self {
        let mut csr = CsrMatrix::new(m.cols());
        for r in m.iter_rows() {
            let entries: Vec<(usize, f64)> = r
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect();
            csr.push_row(&entries).expect("columns in range");
        }
        csr
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    #[inline]
    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
        let mut acc = 0.0;
        for k in s..e {
            acc += self.values[k] * x[self.col_idx[k]];
        }
        acc
    }

    /// `out = A x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = self.row_dot(i, x);
        }
    }

    /// `out = Aᵀ y`
    pub fn tr_mul_vec_into(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &yi) in y.iter().enumerate().take(self.rows) {
            if yi == 0.0 {
                continue;
            }
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for k in s..e {
                out[self.col_idx[k]] += self.values[k] * yi;
            }
        }
    }

    /// Scales row `i` by `r[i]` and column `j` by `c[j]` in place.
    pub fn scale(&mut self, r: &[f64], c: &[f64]) {
        for i in 0..self.rows {
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for k in s..e {
                self.values[k] *= r[i] * c[self.col_idx[k]];
            }
        }
    }

    /// Infinity norm of each row.
    pub fn row_norms_inf(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.row(i).fold(0.0, |acc, (_, v)| f64::max(acc, v.abs())))
            .collect()
    }

    /// Infinity norm of each column.
    pub fn col_norms_inf(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (c, v) in self.col_idx.iter().zip(&self.values) {
            out[*c] = f64::max(out[*c], v.abs());
        }
        out
    }

    /// Adds `Σ_{i in rows} weight(i) · a_i a_iᵀ` into the dense symmetric `acc`.
    pub(crate) fn add_weighted_gram(&self, acc: &mut Matrix, weight: impl Fn(usize) -> f64) {
        for i in 0..self.rows {
            let w = weight(i);
            if w == 0.0 {
                continue;
            }
            let (s, e) = (self.row_ptr[i], self.row_ptr[i + 1]);
            for p in s..e {
                let (cp, vp) = (self.col_idx[p], self.values[p] * w);
                for q in s..e {
                    acc[(cp, self.col_idx[q])] += vp * self.values[q];
                }
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| f64::max(acc, x.abs()))
}

/// In-place Cholesky factorization `A = L Lᵀ` of a symmetric positive definite matrix.
/// The lower triangle of `a` is overwritten with `L`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    pub fn factor(mut a: Matrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::dim("cholesky: square matrix", n, a.cols()));
        }
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= a[(j, k)] * a[(j, k)];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::domain("cholesky: matrix is not positive definite"));
            }
            let d = libm::sqrt(d);
            a[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                let (ri, rj) = (i * n, j * n);
                let data = a.as_slice();
                for k in 0..j {
                    s -= data[ri + k] * data[rj + k];
                }
                a[(i, j)] = s / d;
            }
        }
        Ok(Cholesky { l: a })
    }

    pub fn dim(&self) -> usize {
        self.l.rows()
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.l.rows();
        let l = self.l.as_slice();
        for i in 0..n {
            let mut s = b[i];
            let row = &l[i * n..i * n + i];
            for (k, lik) in row.iter().enumerate() {
                s -= lik * b[k];
            }
            b[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * b[k];
            }
            b[i] = s / l[i * n + i];
        }
    }
}

/// Solves a small dense linear system by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Matrix, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = a.rows();
    if a.cols() != n || b.len() != n {
        return Err(Error::dim("solve_dense: square system", n, b.len()));
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[(i, col)].abs().total_cmp(&a[(j, col)].abs()))
            .unwrap();
        if a[(piv, col)].abs() < 1e-300 {
            return Err(Error::domain("solve_dense: singular matrix"));
        }
        if piv != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = t;
            }
            b.swap(col, piv);
        }
        for i in (col + 1)..n {
            let f = a[(i, col)] / a[(col, col)];
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                a[(i, j)] -= f * a[(col, j)];
            }
            b[i] -= f * b[col];
        }
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in (i + 1)..n {
            s -= a[(i, j)] * b[j];
        }
        b[i] = s / a[(i, i)];
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd_system() {
        let a = Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]], 3).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let mut b = a.mul_vec(&x_true);
        Cholesky::factor(a).unwrap().solve_in_place(&mut b);
        for (x, t) in b.iter().zip(x_true) {
            assert!((x - t).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]], 2).unwrap();
        assert!(Cholesky::factor(a).is_err());
    }

    #[test]
    fn csr_products_match_dense() {
        let d = Matrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 0.0, 0.0], [-1.0, 3.0, 0.0]], 3).unwrap();
        let s = CsrMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 4);
        assert_eq!(s.to_dense(), d);
        let x = [0.5, -1.0, 2.0];
        let mut out = [0.0; 3];
        s.mul_vec_into(&x, &mut out);
        assert_eq!(out.to_vec(), d.mul_vec(&x));
        let mut t = [0.0; 3];
        s.tr_mul_vec_into(&x, &mut t);
        assert_eq!(t.to_vec(), d.transpose().mul_vec(&x));
    }

    #[test]
    fn csr_push_row_merges_and_drops_cancellations() {
        let mut s = CsrMatrix::new(4);
        s.push_row(&[(2, 1.0), (0, 1.0), (2, -1.0), (3, 2.0), (3, 1.0)]).unwrap();
        let row: Vec<_> = s.row(0).collect();
        assert_eq!(row, vec![(0, 1.0), (3, 3.0)]);
        assert!(s.push_row(&[(4, 1.0)]).is_err());
    }

    #[test]
    fn gaussian_elimination_pivots() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [1.0, 1.0]], 2).unwrap();
        let x = solve_dense(a, vec![2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
    }
}
