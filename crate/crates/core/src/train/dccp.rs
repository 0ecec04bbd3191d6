//! Penalty convex-concave procedure on the constrained least-squares form
//!
//! ```text
//! minimize  (1/m) ‖ξ‖²   subject to   δ_a(W x_i) + ξ_i = δ_b(M x_i) + y_i
//! ```
//!
//! Each equality is split into two DC inequalities sharing one slack `s_i ≥ 0`,
//! the concave side of each is replaced by its tangent at the current iterate,
//! and `t_k Σ s_i` is added to the objective, together with a small proximal
//! term `(γ/2)‖α − α_k‖²`.

use alloc::vec;
use alloc::vec::Vec;

use super::dca::push_block;
use super::{init_params, Stopwatch, Termination, TrainReport};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::loss::{indicator_vector, mse_unchecked, SparseAlphaVec, TrainingSet};
use crate::model::{LDerParams, ModelDims};
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus, QuadTerm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpConfig {
    pub t0: f64,
    pub mu: f64,
    pub t_max: f64,
    pub max_outer: usize,
    pub slack_tol: f64,
    pub converge_tol: f64,
    /// Weight `γ ≥ 0` of the proximal term.
    pub prox: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for CcpConfig {
    fn default() -> Self {
        CcpConfig {
            t0: 1e-5,
            mu: 1.5,
            t_max: 1e4,
            max_outer: 100,
            slack_tol: 1e-6,
            converge_tol: 1e-5,
            prox: 1e-4,
            qp_tol: 1e-7,
            qp_max_iter: 20_000,
            seed: 0,
            init_scale: 1.0,
        }
    }
}

impl CcpConfig {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.t0) || !positive(self.t_max) || !(self.t0 <= self.t_max) {
            return Err(Error::domain("penalty requires 0 < t0 ≤ t_max"));
        }
        if !(self.mu > 1.0) || !self.mu.is_finite() {
            return Err(Error::domain("penalty growth mu must exceed 1"));
        }
        if self.max_outer == 0 || !positive(self.slack_tol) || !positive(self.converge_tol) {
            return Err(Error::domain("max_outer and tolerances must be positive"));
        }
        if !(self.prox >= 0.0) || !self.prox.is_finite() {
            return Err(Error::domain("proximal weight must be finite and nonnegative"));
        }
        Ok(())
    }

    /// `t_k` for outer iteration `k` (0-based).
    pub fn penalty(&self, k: usize) -> f64 {
        let mut t = self.t0;
        for _ in 0..k {
            t = f64::min(self.mu * t, self.t_max);
        }
        t
    }
}

/// One of the two max-affine branches of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `δ_a(W x) = max_i (w_i·x + a_i)`
    DilationA,
    /// `δ_b(M x) = max_j (m_j·x + b_j)`
    DilationB,
}

/// Tangent of a branch at an anchor: `α ↦ value + ⟨grad, α − anchor⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFunctional {
    pub value: f64,
    pub grad: SparseAlphaVec,
    pub anchor: Vec<f64>,
}

impl AffineFunctional {
    pub fn eval(&self, alpha: &[f64]) -> f64 {
        let mut shift = 0.0;
        for &(k, g) in self.grad.entries() {
            shift += g * (alpha[k] - self.anchor[k]);
        }
        self.value + shift
    }
}

/// Affine minorant of `branch` at `anchor`, exact at the anchor.
pub fn linearize_branch(branch: Branch, anchor: &LDerParams, x: &[f64]) -> Result<AffineFunctional> {
    let dims = anchor.dims();
    if x.len() != dims.n {
        return Err(Error::dim("feature vector", dims.n, x.len()));
    }
    let (s, value) = match branch {
        Branch::DilationA => anchor.first_branch(x),
        Branch::DilationB => {
            let (j, v) = anchor.second_branch(x);
            (dims.r1 + j, v)
        }
    };
    Ok(AffineFunctional {
        value,
        grad: indicator_vector(x, s, dims)?,
        anchor: anchor.flatten(),
    })
}

/// Linearized subproblem at `alpha` with penalty `t`.
///
/// Variables `(α, ξ, s)`; objective `(1/m)‖ξ‖² + t Σ s_i + (γ/2)‖α − α_k‖²`
/// with `γ = prox`; for each sample
///
/// ```text
/// ⟨v(l), α⟩ + ξ_i − ℓ_b(α) − y_i ≤ s_i       l < r1
/// ⟨v(r1+l), α⟩ + y_i − ℓ_a(α) − ξ_i ≤ s_i    l < r2
/// s_i ≥ 0
/// ```
///
/// where `ℓ_a`, `ℓ_b` are the branch tangents at `alpha`.
pub fn assemble_ccp_subproblem(alpha: &LDerParams, t: &TrainingSet, penalty: f64, prox: f64) -> Result<QpProblem> {
    let dims = alpha.dims();
    t.check_dims(dims)?;
    if !(penalty > 0.0) || !penalty.is_finite() {
        return Err(Error::domain("penalty must be finite and positive"));
    }
    if !(prox >= 0.0) || !prox.is_finite() {
        return Err(Error::domain("proximal weight must be finite and nonnegative"));
    }
    let m = t.len();
    let flat = dims.flat_len();
    let nvar = flat + 2 * m;
    let mut quad = vec![0.0; nvar];
    quad[..flat].iter_mut().for_each(|v| *v = prox);
    quad[flat..flat + m].iter_mut().for_each(|v| *v = 2.0 / m as f64);
    let mut c = vec![0.0; nvar];
    for (ci, a) in c.iter_mut().zip(alpha.alpha()) {
        *ci = -prox * a;
    }
    c[flat + m..].iter_mut().for_each(|v| *v = penalty);

    let rows = m * dims.blocks() + m;
    let mut a = CsrMatrix::new(nvar);
    let mut l = Vec::with_capacity(rows);
    let mut u = Vec::with_capacity(rows);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * dims.block_len() + 2);
    for i in 0..m {
        let (x, y) = t.sample(i);
        let act_a = alpha.first_branch(x).0;
        let act_b = dims.r1 + alpha.second_branch(x).0;
        let (xi, si) = (flat + i, flat + m + i);
        for s in 0..dims.r1 {
            row.clear();
            push_block(&mut row, dims, s, x, 1.0);
            push_block(&mut row, dims, act_b, x, -1.0);
            row.push((xi, 1.0));
            row.push((si, -1.0));
            a.push_row(&row)?;
            l.push(f64::NEG_INFINITY);
            u.push(y);
        }
        for s in dims.r1..dims.blocks() {
            row.clear();
            push_block(&mut row, dims, s, x, 1.0);
            push_block(&mut row, dims, act_a, x, -1.0);
            row.push((xi, -1.0));
            row.push((si, -1.0));
            a.push_row(&row)?;
            l.push(f64::NEG_INFINITY);
            u.push(-y);
        }
    }
    for i in 0..m {
        a.push_row(&[(flat + m + i, 1.0)])?;
        l.push(0.0);
        u.push(f64::INFINITY);
    }
    QpProblem::new(QuadTerm::Diagonal(quad), c, a, Some(l), u)
}

/// Feasible point of the subproblem at `alpha`: `α` itself, `ξ_i = y_i − τ(x_i)`, `s = 0`.
pub fn ccp_feasible_point(alpha: &LDerParams, t: &TrainingSet) -> Vec<f64> {
    let m = t.len();
    let flat = alpha.dims().flat_len();
    let mut z = alpha.flatten();
    z.resize(flat + 2 * m, 0.0);
    for i in 0..m {
        let (x, y) = t.sample(i);
        z[flat + i] = y - alpha.predict_unchecked(x);
    }
    z
}

/// Largest violation of `δ_a(W x_i) + ξ_i = δ_b(M x_i) + y_i`.
pub fn equality_residual(p: &LDerParams, xi: &[f64], t: &TrainingSet) -> f64 {
    (0..t.len())
        .map(|i| {
            let (x, y) = t.sample(i);
            libm::fabs(p.predict_unchecked(x) + xi[i] - y)
        })
        .fold(0.0, f64::max)
}

pub fn train_dccp(t: &TrainingSet, dims: ModelDims, cfg: &CcpConfig) -> Result<(LDerParams, TrainReport)> {
    let init = init_params(dims, cfg.seed, cfg.init_scale);
    train_dccp_from(t, init, cfg, None)
}

/// Runs the penalty procedure from `init`. `observer`, when given, sees every
/// assembled subproblem.
pub fn train_dccp_from(
    t: &TrainingSet,
    init: LDerParams,
    cfg: &CcpConfig,
    mut observer: Option<&mut dyn FnMut(usize, &QpProblem)>,
) -> Result<(LDerParams, TrainReport)> {
    cfg.validate()?;
    let dims = init.dims();
    t.check_dims(dims)?;
    let clock = Stopwatch::start();
    let m = t.len();
    let flat = dims.flat_len();
    let settings = QpSettings {
        tol: cfg.qp_tol,
        max_iter: cfg.qp_max_iter,
        ..QpSettings::default()
    };

    let mut report = TrainReport::new(Termination::MaxIter);
    let mut current = init;
    let initial = mse_unchecked(&current, t);
    report.loss_trace.push(initial);
    let mut best = (initial, current.clone());
    let mut penalty = cfg.t0;
    let mut prev_obj: Option<f64> = None;

    for iter in 1..=cfg.max_outer {
        let prob = assemble_ccp_subproblem(&current, t, penalty, cfg.prox)?;
        if let Some(obs) = observer.as_mut() {
            obs(iter, &prob);
        }
        let x0 = ccp_feasible_point(&current, t);
        let mut sol = QpSolver::new(&prob, settings)?.solve(Some(&x0), None)?;
        if sol.status != QpStatus::Solved {
            report.qp_iterations += sol.iterations;
            sol = QpSolver::new(&prob, settings)?.solve(None, None)?;
        }
        report.qp_iterations += sol.iterations;
        report.penalty_trace.push(penalty);
        if sol.status != QpStatus::Solved {
            report.termination = Termination::SubproblemFailure;
            break;
        }
        let next = LDerParams::unflatten(sol.x[..flat].to_vec(), dims)?;
        let xi = &sol.x[flat..flat + m];
        let slack: f64 = sol.x[flat + m..].iter().map(|s| s.max(0.0)).sum();
        let obj = prob.objective(&sol.x);
        let loss = mse_unchecked(&next, t);
        report.loss_trace.push(loss);
        report.slack_trace.push(slack);
        report.equality_residual.push(equality_residual(&next, xi, t));
        report.iterations = iter;
        current = next;
        if loss < best.0 {
            best = (loss, current.clone());
        }
        if let Some(prev) = prev_obj {
            if libm::fabs(obj - prev) <= cfg.converge_tol * (1.0 + libm::fabs(prev)) && slack <= cfg.slack_tol {
                report.termination = Termination::Converged;
                break;
            }
        }
        prev_obj = Some(obj);
        penalty = f64::min(cfg.mu * penalty, cfg.t_max);
    }
    report.wall_time = clock.elapsed();
    Ok((best.1, report))
}
