//! Difference-of-convex algorithm for the least-squares loss.
//!
//! With `τ1(α) = δ_a(W x_i) − y_i` and `τ2(α) = δ_b(M x_i)`, and their
//! linearizations `ℓ1`, `ℓ2` at an anchor `ᾱ`, let
//!
//! ```text
//! φ_i(α) = max{ −ℓ1(α), −ℓ2(α) }
//! G(α)   = (2/m) Σ (τ1 + φ_i)² + (τ2 + φ_i)²
//! H(α)   = (1/m) Σ (τ1 + τ2 + 2 φ_i)²
//! ```
//!
//! so that `G − H` is the MSE for every `α`. Both `τ1 + φ_i` and `τ2 + φ_i` are
//! nonnegative convex functions, which makes `G` and `H` convex. The trainer
//! works with the pair `G + (γ/2)‖α‖²`, `H + (γ/2)‖α‖²`: each outer iteration
//! takes `β ∈ ∂H(α_t)` (equal to the MSE subgradient when the anchor is `α_t`)
//! and minimizes `G(α) − ⟨β, α⟩ + (γ/2)‖α − α_t‖²` through its epigraph QP.

use alloc::vec;
use alloc::vec::Vec;

use super::{init_params, Stopwatch, Termination, TrainReport};
use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::loss::{grad_mse, mse_unchecked, TrainingSet};
use crate::model::{LDerParams, ModelDims};
use crate::qp::{QpProblem, QpSettings, QpSolver, QpStatus, QuadTerm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcaConfig {
    /// Relative stopping tolerance on successive MSE values.
    pub epsilon: f64,
    pub max_outer: usize,
    /// Weight `γ ≥ 0` of the strongly convex term added to both components.
    pub prox: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for DcaConfig {
    fn default() -> Self {
        DcaConfig {
            epsilon: 1e-6,
            max_outer: 200,
            prox: 1e-4,
            qp_tol: 1e-6,
            qp_max_iter: 20_000,
            seed: 0,
            init_scale: 1.0,
        }
    }
}

/// Values at one sample: `(τ1, τ2, ℓ1, ℓ2)` where the linearizations are taken
/// at the anchor and evaluated at `alpha`.
fn sample_terms(alpha: &LDerParams, anchor: &LDerParams, x: &[f64], y: f64) -> (f64, f64, f64, f64) {
    let dims = alpha.dims();
    let (j1, _) = anchor.first_branch(x);
    let (j2, _) = anchor.second_branch(x);
    let tau1 = alpha.first_branch(x).1 - y;
    let tau2 = alpha.second_branch(x).1;
    let lin1 = alpha.piece(j1, x) - y;
    let lin2 = alpha.piece(dims.r1 + j2, x);
    (tau1, tau2, lin1, lin2)
}

/// The convex function `φ_i` at `alpha`, built from linearizations at `anchor`.
pub fn phi(i: usize, alpha: &[f64], anchor: &LDerParams, t: &TrainingSet) -> Result<f64> {
    let dc = dc_components(t, anchor)?;
    dc.phi(i, alpha)
}

/// DC components `G` and `H` of the MSE, bound to a training set and an anchor.
#[derive(Debug, Clone)]
pub struct DcDecomposition<'a> {
    t: &'a TrainingSet,
    anchor: LDerParams,
}

pub fn dc_components<'a>(t: &'a TrainingSet, anchor: &LDerParams) -> Result<DcDecomposition<'a>> {
    t.check_dims(anchor.dims())?;
    Ok(DcDecomposition {
        t,
        anchor: anchor.clone(),
    })
}

impl DcDecomposition<'_> {
    fn params(&self, alpha: &[f64]) -> Result<LDerParams> {
        LDerParams::unflatten(alpha.to_vec(), self.anchor.dims())
    }

    fn terms(&self, p: &LDerParams, i: usize) -> (f64, f64, f64) {
        let (x, y) = self.t.sample(i);
        let (tau1, tau2, lin1, lin2) = sample_terms(p, &self.anchor, x, y);
        (tau1, tau2, f64::max(-lin1, -lin2))
    }

    pub fn phi(&self, i: usize, alpha: &[f64]) -> Result<f64> {
        if i >= self.t.len() {
            return Err(Error::Index {
                index: i,
                bound: self.t.len(),
            });
        }
        let p = self.params(alpha)?;
        Ok(self.terms(&p, i).2)
    }

    pub fn g(&self, alpha: &[f64]) -> Result<f64> {
        let p = self.params(alpha)?;
        let m = self.t.len();
        let s: f64 = (0..m)
            .map(|i| {
                let (t1, t2, ph) = self.terms(&p, i);
                (t1 + ph) * (t1 + ph) + (t2 + ph) * (t2 + ph)
            })
            .sum();
        Ok(2.0 * s / m as f64)
    }

    pub fn h(&self, alpha: &[f64]) -> Result<f64> {
        let p = self.params(alpha)?;
        let m = self.t.len();
        let s: f64 = (0..m)
            .map(|i| {
                let (t1, t2, ph) = self.terms(&p, i);
                let v = t1 + t2 + 2.0 * ph;
                v * v
            })
            .sum();
        Ok(s / m as f64)
    }

    pub fn anchor(&self) -> &LDerParams {
        &self.anchor
    }
}

/// Subgradient of `H` at `alpha` with the anchor placed at `alpha`:
/// `(2/m) Σ (τ(x_i) − y_i) v_i`, the same vector as the MSE subgradient.
pub fn dca_beta(alpha: &LDerParams, t: &TrainingSet) -> Result<Vec<f64>> {
    grad_mse(alpha, t)
}

/// Epigraph QP for `min G(α) − ⟨β, α⟩ + (γ/2)‖α − α_t‖²` with the anchor at
/// `alpha` (`α_t`) and `γ = prox`.
///
/// Variables are `(α, q, p)` with `q, p ∈ ℝᵐ`; the objective is
/// `(2/m)(‖q‖² + ‖p‖²) − ⟨β, α⟩` plus the proximal term, and for every
/// sample `i` and piece `l`
///
/// ```text
/// ⟨v(l) − v(j1), α⟩          ≤ q_i
/// ⟨v(l) − v(r1+j2), α⟩       ≤ q_i + y_i
/// ⟨v(r1+l) − v(j1), α⟩       ≤ p_i − y_i
/// ⟨v(r1+l) − v(r1+j2), α⟩    ≤ p_i
/// ```
///
/// which encode `q_i ≥ τ1 + φ_i` and `p_i ≥ τ2 + φ_i`.
pub fn assemble_dca_subproblem(alpha: &LDerParams, beta: &[f64], t: &TrainingSet, prox: f64) -> Result<QpProblem> {
    let dims = alpha.dims();
    t.check_dims(dims)?;
    let flat = dims.flat_len();
    if beta.len() != flat {
        return Err(Error::dim("DCA subgradient", flat, beta.len()));
    }
    if !(prox >= 0.0) || !prox.is_finite() {
        return Err(Error::domain("proximal weight must be finite and nonnegative"));
    }
    let m = t.len();
    let nvar = flat + 2 * m;
    let mut quad = vec![0.0; nvar];
    quad[..flat].iter_mut().for_each(|v| *v = prox);
    quad[flat..].iter_mut().for_each(|v| *v = 4.0 / m as f64);
    let mut c = vec![0.0; nvar];
    for ((ci, b), a) in c.iter_mut().zip(beta).zip(alpha.alpha()) {
        *ci = -b - prox * a;
    }

    let mut a = CsrMatrix::new(nvar);
    let mut u = Vec::with_capacity(2 * m * dims.blocks());
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * dims.block_len() + 1);
    for i in 0..m {
        let (x, y) = t.sample(i);
        let (j1, _) = alpha.first_branch(x);
        let (j2, _) = alpha.second_branch(x);
        let act1 = j1;
        let act2 = dims.r1 + j2;
        let (qi, pi) = (flat + i, flat + m + i);
        // (piece block, subtracted active block, epigraph variable, rhs)
        let families: [(core::ops::Range<usize>, usize, usize, f64); 4] = [
            (0..dims.r1, act1, qi, 0.0),
            (0..dims.r1, act2, qi, y),
            (dims.r1..dims.blocks(), act1, pi, -y),
            (dims.r1..dims.blocks(), act2, pi, 0.0),
        ];
        for (pieces, active, epi, rhs) in families {
            for s in pieces {
                row.clear();
                push_block(&mut row, dims, s, x, 1.0);
                push_block(&mut row, dims, active, x, -1.0);
                row.push((epi, -1.0));
                a.push_row(&row)?;
                u.push(rhs);
            }
        }
    }
    QpProblem::new(QuadTerm::Diagonal(quad), c, a, None, u)
}

/// Appends `sign · (x, 1)` at block `s`.
pub(crate) fn push_block(row: &mut Vec<(usize, f64)>, dims: ModelDims, s: usize, x: &[f64], sign: f64) {
    let off = dims.block_offset(s);
    for (k, xk) in x.iter().enumerate() {
        row.push((off + k, sign * xk));
    }
    row.push((off + dims.n, sign));
}

/// Feasible point of the subproblem built at `alpha`: `α` itself with
/// `q_i = max(0, r_i)` and `p_i = max(0, −r_i)`, `r_i` the residual `τ(x_i) − y_i`.
pub fn dca_feasible_point(alpha: &LDerParams, t: &TrainingSet) -> Vec<f64> {
    let m = t.len();
    let mut z = alpha.flatten();
    z.resize(z.len() + 2 * m, 0.0);
    let flat = alpha.dims().flat_len();
    for i in 0..m {
        let (x, y) = t.sample(i);
        let r = alpha.predict_unchecked(x) - y;
        z[flat + i] = r.max(0.0);
        z[flat + m + i] = (-r).max(0.0);
    }
    z
}

pub fn train_dca(t: &TrainingSet, dims: ModelDims, cfg: &DcaConfig) -> Result<(LDerParams, TrainReport)> {
    let init = init_params(dims, cfg.seed, cfg.init_scale);
    train_dca_from(t, init, cfg, None)
}

/// Runs DCA from `init`. `observer`, when given, sees every assembled subproblem.
pub fn train_dca_from(
    t: &TrainingSet,
    init: LDerParams,
    cfg: &DcaConfig,
    mut observer: Option<&mut dyn FnMut(usize, &QpProblem)>,
) -> Result<(LDerParams, TrainReport)> {
    if !(cfg.epsilon > 0.0) {
        return Err(Error::domain("DCA epsilon must be positive"));
    }
    if cfg.max_outer == 0 {
        return Err(Error::domain("DCA max_outer must be positive"));
    }
    if !(cfg.prox >= 0.0) {
        return Err(Error::domain("DCA proximal weight must be nonnegative"));
    }
    let dims = init.dims();
    t.check_dims(dims)?;
    let clock = Stopwatch::start();
    let flat = dims.flat_len();
    let settings = QpSettings {
        tol: cfg.qp_tol,
        max_iter: cfg.qp_max_iter,
        ..QpSettings::default()
    };

    let mut report = TrainReport::new(Termination::MaxIter);
    let mut current = init;
    let mut prev_loss = mse_unchecked(&current, t);
    report.loss_trace.push(prev_loss);
    let mut best = (prev_loss, current.clone());
    let mut warm_duals: Option<Vec<f64>> = None;

    for iter in 1..=cfg.max_outer {
        let beta = dca_beta(&current, t)?;
        let prob = assemble_dca_subproblem(&current, &beta, t, cfg.prox)?;
        if let Some(obs) = observer.as_mut() {
            obs(iter, &prob);
        }
        let x0 = dca_feasible_point(&current, t);
        let mut sol = QpSolver::new(&prob, settings)?.solve(Some(&x0), warm_duals.as_deref())?;
        if sol.status != QpStatus::Solved {
            report.qp_iterations += sol.iterations;
            sol = QpSolver::new(&prob, settings)?.solve(None, None)?;
        }
        report.qp_iterations += sol.iterations;
        report.dual = beta;
        if sol.status != QpStatus::Solved {
            report.termination = Termination::SubproblemFailure;
            break;
        }
        let next = LDerParams::unflatten(sol.x[..flat].to_vec(), dims)?;
        let loss = mse_unchecked(&next, t);
        report.loss_trace.push(loss);
        report.iterations = iter;
        warm_duals = Some(sol.duals);
        current = next;
        if loss < best.0 {
            best = (loss, current.clone());
        }
        if libm::fabs(loss - prev_loss) <= cfg.epsilon * (1.0 + prev_loss) {
            report.termination = Termination::Converged;
            break;
        }
        prev_loss = loss;
    }
    report.wall_time = clock.elapsed();
    Ok((best.1, report))
}
