//! Convex quadratic programs
//!
//! ```text
//! minimize    ½ xᵀ Q x + cᵀ x
//! subject to  l ≤ A x ≤ u
//! ```
//!
//! solved by an over-relaxed alternating-direction (operator splitting)
//! iteration with adaptive penalty, followed by an active-set polish step.
//!
//! Dual convention: multipliers `λ` satisfy `Q x + c = Aᵀ λ` at a KKT point,
//! with `λ_i ≥ 0` when the lower side of row `i` is active and `λ_i ≤ 0`
//! when the upper side is.

mod admm;

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, CsrMatrix, Matrix};

pub use admm::QpSolver;

/// Quadratic term of the objective.
#[derive(Debug, Clone, PartialEq)]
pub enum QuadTerm {
    Dense(Matrix),
    Diagonal(Vec<f64>),
}

impl QuadTerm {
    pub fn dim(&self) -> usize {
        match self {
            QuadTerm::Dense(m) => m.rows(),
            QuadTerm::Diagonal(d) => d.len(),
        }
    }

    /// `out = Q x`
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            QuadTerm::Dense(m) => m.mul_vec_into(x, out),
            QuadTerm::Diagonal(d) => {
                for ((o, di), xi) in out.iter_mut().zip(d).zip(x) {
                    *o = di * xi;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Matrix {
        match self {
            QuadTerm::Dense(m) => m.clone(),
            QuadTerm::Diagonal(d) => {
                let mut m = Matrix::zeros(d.len(), d.len());
                for (i, v) in d.iter().enumerate() {
                    m[(i, i)] = *v;
                }
                m
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    q: QuadTerm,
    c: Vec<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
}

/// Smallest Rayleigh quotient accepted when probing `Q` for semidefiniteness.
const PSD_TOL: f64 = 1e-10;
const PSD_PROBES: usize = 32;

impl QpProblem {
    /// Validates and builds a problem. `l = None` means every row is only bounded above.
    pub fn new(q: QuadTerm, c: Vec<f64>, a: CsrMatrix, l: Option<Vec<f64>>, u: Vec<f64>) -> Result<Self> {
        let d = c.len();
        if q.dim() != d {
            return Err(Error::dim("quadratic term size", d, q.dim()));
        }
        if a.cols() != d {
            return Err(Error::dim("constraint matrix columns", d, a.cols()));
        }
        let k = a.rows();
        if u.len() != k {
            return Err(Error::dim("upper bounds", k, u.len()));
        }
        let l = l.unwrap_or_else(|| vec![f64::NEG_INFINITY; k]);
        if l.len() != k {
            return Err(Error::dim("lower bounds", k, l.len()));
        }
        if l.iter().zip(&u).any(|(lo, hi)| lo > hi || lo.is_nan() || hi.is_nan()) {
            return Err(Error::domain("constraint bounds must satisfy l <= u"));
        }
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("linear term"));
        }
        let prob = QpProblem { q, c, a, l, u };
        prob.check_quadratic()?;
        Ok(prob)
    }

    fn check_quadratic(&self) -> Result<()> {
        match &self.q {
            QuadTerm::Diagonal(d) => {
                if d.iter().any(|v| !v.is_finite() || *v < -PSD_TOL) {
                    return Err(Error::domain("quadratic term is not positive semidefinite"));
                }
            }
            QuadTerm::Dense(m) => {
                let d = m.rows();
                if m.cols() != d {
                    return Err(Error::dim("quadratic term columns", d, m.cols()));
                }
                if !m.is_finite() {
                    return Err(Error::NonFinite("quadratic term"));
                }
                for i in 0..d {
                    for j in 0..i {
                        let (a, b) = (m[(i, j)], m[(j, i)]);
                        if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                            return Err(Error::domain("quadratic term is not symmetric"));
                        }
                    }
                }
                // probabilistic check via random Rayleigh quotients
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_95d);
                let mut v = vec![0.0; d];
                let mut qv = vec![0.0; d];
                for _ in 0..PSD_PROBES.min(4 * d + 1) {
                    v.iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
                    let nrm = dot(&v, &v);
                    if nrm == 0.0 {
                        continue;
                    }
                    m.mul_vec_into(&v, &mut qv);
                    if dot(&v, &qv) / nrm < -PSD_TOL {
                        return Err(Error::domain("quadratic term is not positive semidefinite"));
                    }
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.c.len()
    }

    #[inline]
    pub fn n_constraints(&self) -> usize {
        self.a.rows()
    }

    pub fn quad(&self) -> &QuadTerm {
        &self.q
    }

    pub fn linear(&self) -> &[f64] {
        &self.c
    }

    pub fn constraints(&self) -> &CsrMatrix {
        &self.a
    }

    pub fn lower(&self) -> &[f64] {
        &self.l
    }

    pub fn upper(&self) -> &[f64] {
        &self.u
    }

    /// `½ xᵀ Q x + cᵀ x`
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut qx = vec![0.0; self.dim()];
        self.q.mul_vec_into(x, &mut qx);
        0.5 * dot(x, &qx) + dot(&self.c, x)
    }

    /// Largest violation of `l ≤ A x ≤ u`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_constraints() {
            let ax = self.a.row_dot(i, x);
            worst = worst.max(ax - self.u[i]).max(self.l[i] - ax);
        }
        worst
    }
}

/// Termination state of [`solve_qp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    MaxIter,
    InfeasibleSuspected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Multipliers in the sign convention of the module docs.
    pub duals: Vec<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    pub status: QpStatus,
    pub polished: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Absolute tolerance on both KKT residuals.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial penalty parameter.
    pub rho: f64,
    /// Proximal regularization of the x-update.
    pub sigma: f64,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    /// Iterations between penalty updates.
    pub adapt_interval: usize,
    /// Ruiz equilibration passes; 0 disables scaling.
    pub scaling_iters: usize,
    pub polish: bool,
    /// Threshold used by the primal infeasibility heuristic.
    pub infeasibility_tol: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            tol: 1e-6,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            relaxation: 1.6,
            adapt_interval: 25,
            scaling_iters: 10,
            polish: true,
            infeasibility_tol: 1e-5,
        }
    }
}

/// Solves `prob` from a cold start.
pub fn solve_qp(prob: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    let settings = QpSettings {
        tol,
        max_iter,
        ..QpSettings::default()
    };
    QpSolver::new(prob, settings)?.solve(None, None)
}

/// Primal residual (largest constraint violation) and dual residual
/// (`‖Qx + c − Aᵀλ‖∞`, plus the size of any multiplier pricing an infinite bound).
pub fn kkt_residual(prob: &QpProblem, x: &[f64], duals: &[f64]) -> Result<(f64, f64)> {
    if x.len() != prob.dim() {
        return Err(Error::dim("primal vector", prob.dim(), x.len()));
    }
    if duals.len() != prob.n_constraints() {
        return Err(Error::dim("dual vector", prob.n_constraints(), duals.len()));
    }
    let primal = prob.max_violation(x);
    let d = prob.dim();
    let mut r = vec![0.0; d];
    prob.q.mul_vec_into(x, &mut r);
    let mut aty = vec![0.0; d];
    prob.a.tr_mul_vec_into(duals, &mut aty);
    for ((ri, ci), ai) in r.iter_mut().zip(&prob.c).zip(&aty) {
        *ri += ci - ai;
    }
    let mut dual = norm_inf(&r);
    for ((lam, lo), hi) in duals.iter().zip(&prob.l).zip(&prob.u) {
        if *lam > 0.0 && *lo == f64::NEG_INFINITY {
            dual = dual.max(*lam);
        }
        if *lam < 0.0 && *hi == f64::INFINITY {
            dual = dual.max(-*lam);
        }
    }
    Ok((primal.max(0.0), dual))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csr(rows: &[&[f64]], d: usize) -> CsrMatrix {
        CsrMatrix::from_dense(&Matrix::from_rows(rows, d).unwrap())
    }

    #[test]
    fn active_lower_bound() {
        // minimize x² s.t. x ≥ 1
        let p = QpProblem::new(
            QuadTerm::Diagonal(vec![2.0]),
            vec![0.0],
            csr(&[&[1.0]], 1),
            Some(vec![1.0]),
            vec![f64::INFINITY],
        )
        .unwrap();
        let s = solve_qp(&p, 1e-8, 20_000).unwrap();
        assert_eq!(s.status, QpStatus::Solved);
        assert!((s.x[0] - 1.0).abs() < 1e-8);
        assert!((s.duals[0] - 2.0).abs() < 1e-6);
        let (pr, du) = kkt_residual(&p, &[1.0], &[2.0]).unwrap();
        assert!(pr <= 1e-12 && du <= 1e-12);
    }

    #[test]
    fn unconstrained_identity() {
        let c = vec![1.0, -2.0, 0.5];
        let p = QpProblem::new(QuadTerm::Diagonal(vec![1.0; 3]), c.clone(), CsrMatrix::new(3), None, vec![]).unwrap();
        let s = solve_qp(&p, 1e-9, 1000).unwrap();
        assert_eq!(s.status, QpStatus::Solved);
        for (x, ci) in s.x.iter().zip(&c) {
            assert!((x + ci).abs() < 1e-8);
        }
    }

    #[test]
    fn halfplane_projection() {
        // minimize ½(x1² + x2²) s.t. x1 + x2 ≥ 2
        let p = QpProblem::new(
            QuadTerm::Dense(Matrix::identity(2)),
            vec![0.0, 0.0],
            csr(&[&[1.0, 1.0]], 2),
            Some(vec![2.0]),
            vec![f64::INFINITY],
        )
        .unwrap();
        let s = solve_qp(&p, 1e-8, 20_000).unwrap();
        assert_eq!(s.status, QpStatus::Solved);
        assert!((s.x[0] - 1.0).abs() < 1e-7 && (s.x[1] - 1.0).abs() < 1e-7);
        let (pr, du) = kkt_residual(&p, &s.x, &s.duals).unwrap();
        assert!((pr - s.primal_residual).abs() < 1e-15 && (du - s.dual_residual).abs() < 1e-15);
    }

    #[test]
    fn interior_point_with_zero_duals() {
        let q = Matrix::from_rows(&[[2.0, 0.5], [0.5, 1.0]], 2).unwrap();
        let c = vec![0.3, -0.7];
        let p = QpProblem::new(QuadTerm::Dense(q.clone()), c.clone(), csr(&[&[1.0, 0.0]], 2), None, vec![10.0]).unwrap();
        let x = [0.2, 0.4];
        let mut g = q.mul_vec(&x);
        g.iter_mut().zip(&c).for_each(|(gi, ci)| *gi += ci);
        let (pr, du) = kkt_residual(&p, &x, &[0.0]).unwrap();
        assert_eq!(pr, 0.0);
        assert_eq!(du, norm_inf(&g));
    }

    #[test]
    fn wrong_sign_multiplier_is_penalized() {
        let p = QpProblem::new(QuadTerm::Diagonal(vec![0.0]), vec![0.0], csr(&[&[1.0]], 1), None, vec![1.0]).unwrap();
        // a positive multiplier prices the (absent) lower side
        let (_, du) = kkt_residual(&p, &[0.0], &[0.5]).unwrap();
        assert!(du >= 0.5);
    }

    #[test]
    fn infeasible_problem_is_flagged() {
        // x ≥ 1 and x ≤ 0
        let p = QpProblem::new(
            QuadTerm::Diagonal(vec![1.0]),
            vec![0.0],
            csr(&[&[1.0], &[1.0]], 1),
            Some(vec![1.0, f64::NEG_INFINITY]),
            vec![f64::INFINITY, 0.0],
        )
        .unwrap();
        let s = solve_qp(&p, 1e-6, 5000).unwrap();
        assert_eq!(s.status, QpStatus::InfeasibleSuspected);
    }

    #[test]
    fn rejects_bad_problems() {
        let a = CsrMatrix::new(2);
        assert!(QpProblem::new(QuadTerm::Diagonal(vec![1.0]), vec![0.0; 2], a.clone(), None, vec![]).is_err());
        let asym = Matrix::from_rows(&[[1.0, 2.0], [0.0, 1.0]], 2).unwrap();
        assert!(QpProblem::new(QuadTerm::Dense(asym), vec![0.0; 2], a.clone(), None, vec![]).is_err());
        let indef = Matrix::from_rows(&[[1.0, 0.0], [0.0, -1.0]], 2).unwrap();
        assert!(QpProblem::new(QuadTerm::Dense(indef), vec![0.0; 2], a, None, vec![]).is_err());
        assert!(QpProblem::new(
            QuadTerm::Diagonal(vec![1.0]),
            vec![0.0],
            csr(&[&[1.0]], 1),
            Some(vec![2.0]),
            vec![1.0]
        )
        .is_err());
    }

    #[test]
    fn solves_are_deterministic() {
        let p = QpProblem::new(
            QuadTerm::Dense(Matrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]], 2).unwrap()),
            vec![-1.0, 0.4],
            csr(&[&[1.0, 1.0], &[1.0, -1.0]], 2),
            Some(vec![0.5, -1.0]),
            vec![1.0, 0.2],
        )
        .unwrap();
        let a = solve_qp(&p, 1e-7, 10_000).unwrap();
        let b = solve_qp(&p, 1e-7, 10_000).unwrap();
        assert_eq!(a, b);
    }
}
