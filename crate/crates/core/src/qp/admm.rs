use alloc::vec;
use alloc::vec::Vec;

use super::{kkt_residual, QpProblem, QpSettings, QpSolution, QpStatus, QuadTerm};
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Cholesky, CsrMatrix, Matrix};

const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_SCALE: f64 = 1e3;
const SCALING_MIN: f64 = 1e-4;
const SCALING_MAX: f64 = 1e4;
const CHECK_EVERY: usize = 5;
const POLISH_DELTA: f64 = 1e-7;
const POLISH_REFINE: usize = 60;
const POLISH_GAP: usize = 200;
const POLISH_NEAR: [f64; 2] = [0.0, 1e-6];
const POLISH_ROUNDS: usize = 6;

/// Reusable solver for one [`QpProblem`]. Holds the equilibrated copy of the
/// problem and the factorization of `P + σI + Aᵀ diag(ρ) A`, which is only
/// recomputed when the penalty changes.
pub struct QpSolver<'a> {
    prob: &'a QpProblem,
    settings: QpSettings,
    // column scaling of x, row scaling of A, cost scaling
    d: Vec<f64>,
    e: Vec<f64>,
    cost: f64,
    p: QuadTerm,
    q: Vec<f64>,
    a: CsrMatrix,
    l: Vec<f64>,
    u: Vec<f64>,
    rho: f64,
    rho_vec: Vec<f64>,
    factor: Cholesky,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Free,
    Inequality,
    Equality,
}

fn row_kind(l: f64, u: f64) -> RowKind {
    if l == f64::NEG_INFINITY && u == f64::INFINITY {
        RowKind::Free
    } else if u - l < 1e-9 * (1.0 + l.abs()) {
        RowKind::Equality
    } else {
        RowKind::Inequality
    }
}

fn clamp_scale(v: f64) -> f64 {
    if v < SCALING_MIN {
        1.0
    } else {
        v.min(SCALING_MAX)
    }
}

fn scale_quad(p: &QuadTerm, d: &[f64], cost: f64) -> QuadTerm {
    match p {
        QuadTerm::Diagonal(v) => QuadTerm::Diagonal(v.iter().zip(d).map(|(pi, di)| cost * pi * di * di).collect()),
        QuadTerm::Dense(m) => {
            let mut s = m.clone();
            for i in 0..s.rows() {
                for j in 0..s.cols() {
                    s[(i, j)] *= cost * d[i] * d[j];
                }
            }
            QuadTerm::Dense(s)
        }
    }
}

fn quad_col_norms(p: &QuadTerm) -> Vec<f64> {
    match p {
        QuadTerm::Diagonal(v) => v.iter().map(|x| x.abs()).collect(),
        QuadTerm::Dense(m) => {
            let mut out = vec![0.0; m.cols()];
            for r in m.iter_rows() {
                for (o, v) in out.iter_mut().zip(r) {
                    *o = f64::max(*o, v.abs());
                }
            }
            out
        }
    }
}

impl<'a> QpSolver<'a> {
    pub fn new(prob: &'a QpProblem, settings: QpSettings) -> Result<Self> {
        if !(settings.tol > 0.0) {
            return Err(Error::domain("QP tolerance must be positive"));
        }
        if !(settings.relaxation > 0.0 && settings.relaxation < 2.0) {
            return Err(Error::domain("over-relaxation must lie in (0, 2)"));
        }
        let dim = prob.dim();
        let k = prob.n_constraints();
        let mut d = vec![1.0; dim];
        let mut e = vec![1.0; k];
        let mut p = prob.q.clone();
        let mut a = prob.a.clone();
        // Ruiz equilibration of the KKT matrix [P Aᵀ; A 0]
        for _ in 0..settings.scaling_iters {
            let pc = quad_col_norms(&p);
            let ac = a.col_norms_inf();
            let dd: Vec<f64> = pc
                .iter()
                .zip(&ac)
                .map(|(x, y)| 1.0 / libm::sqrt(clamp_scale(x.max(*y))))
                .collect();
            let ee: Vec<f64> = a
                .row_norms_inf()
                .iter()
                .map(|x| 1.0 / libm::sqrt(clamp_scale(*x)))
                .collect();
            p = scale_quad(&p, &dd, 1.0);
            a.scale(&ee, &dd);
            d.iter_mut().zip(&dd).for_each(|(x, y)| *x *= y);
            e.iter_mut().zip(&ee).for_each(|(x, y)| *x *= y);
        }
        let mut q: Vec<f64> = prob.c.iter().zip(&d).map(|(c, di)| c * di).collect();
        let cost = if settings.scaling_iters > 0 {
            let pc = quad_col_norms(&p);
            let mean = if dim == 0 { 0.0 } else { pc.iter().sum::<f64>() / dim as f64 };
            1.0 / clamp_scale(mean.max(norm_inf(&q)))
        } else {
            1.0
        };
        p = scale_quad(&p, &vec![1.0; dim], cost);
        q.iter_mut().for_each(|v| *v *= cost);
        let l: Vec<f64> = prob.l.iter().zip(&e).map(|(v, s)| v * s).collect();
        let u: Vec<f64> = prob.u.iter().zip(&e).map(|(v, s)| v * s).collect();

        let rho = settings.rho.clamp(RHO_MIN, RHO_MAX);
        let rho_vec = Self::rho_vector(&l, &u, rho);
        let factor = Self::factor_kkt(&p, &a, settings.sigma, &rho_vec)?;
        Ok(QpSolver {
            prob,
            settings,
            d,
            e,
            cost,
            p,
            q,
            a,
            l,
            u,
            rho,
            rho_vec,
            factor,
        })
    }

    fn rho_vector(l: &[f64], u: &[f64], rho: f64) -> Vec<f64> {
        l.iter()
            .zip(u)
            .map(|(lo, hi)| match row_kind(*lo, *hi) {
                RowKind::Free => RHO_MIN,
                RowKind::Inequality => rho,
                RowKind::Equality => (RHO_EQ_SCALE * rho).min(RHO_MAX),
            })
            .collect()
    }

    fn factor_kkt(p: &QuadTerm, a: &CsrMatrix, sigma: f64, rho: &[f64]) -> Result<Cholesky> {
        let dim = a.cols();
        let mut k = match p {
            QuadTerm::Dense(m) => m.clone(),
            QuadTerm::Diagonal(v) => {
                let mut m = Matrix::zeros(dim, dim);
                for (i, x) in v.iter().enumerate() {
                    m[(i, i)] = *x;
                }
                m
            }
        };
        for i in 0..dim {
            k[(i, i)] += sigma;
        }
        a.add_weighted_gram(&mut k, |i| rho[i]);
        Cholesky::factor(k)
    }

    fn unscale_x(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().zip(&self.d).map(|(x, d)| x * d).collect()
    }

    /// Public-convention multipliers from the scaled internal dual.
    fn unscale_duals(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().zip(&self.e).map(|(y, e)| -(y * e) / self.cost).collect()
    }

    /// Solves from an optional warm start (`x0`, `duals0` in unscaled coordinates
    /// and the public sign convention).
    pub fn solve(&mut self, x0: Option<&[f64]>, duals0: Option<&[f64]>) -> Result<QpSolution> {
        let dim = self.prob.dim();
        let k = self.prob.n_constraints();
        let mut x = match x0 {
            Some(v) if v.len() == dim => v.iter().zip(&self.d).map(|(x, d)| x / d).collect(),
            Some(v) => return Err(Error::dim("warm-start primal", dim, v.len())),
            None => vec![0.0; dim],
        };
        let mut y = match duals0 {
            Some(v) if v.len() == k => v
                .iter()
                .zip(&self.e)
                .map(|(lam, e)| -lam * self.cost / e)
                .collect(),
            Some(v) => return Err(Error::dim("warm-start duals", k, v.len())),
            None => vec![0.0; k],
        };
        let mut z = vec![0.0; k];
        self.a.mul_vec_into(&x, &mut z);
        for i in 0..k {
            z[i] = z[i].clamp(self.l[i], self.u[i]);
        }

        let relax = self.settings.relaxation;
        let sigma = self.settings.sigma;
        let tol = self.settings.tol;
        let mut rhs = vec![0.0; dim];
        let mut tmp_k = vec![0.0; k];
        let mut ztilde = vec![0.0; k];
        let mut y_prev = vec![0.0; k];
        let mut ax = vec![0.0; k];
        let mut px = vec![0.0; dim];
        let mut aty = vec![0.0; dim];
        let mut last_polish: Option<usize> = None;
        let polish_trigger = (1e3 * tol).max(1e-3);

        for iter in 1..=self.settings.max_iter {
            // x-update
            for i in 0..k {
                tmp_k[i] = self.rho_vec[i] * z[i] - y[i];
            }
            self.a.tr_mul_vec_into(&tmp_k, &mut rhs);
            for j in 0..dim {
                rhs[j] += sigma * x[j] - self.q[j];
            }
            self.factor.solve_in_place(&mut rhs);
            self.a.mul_vec_into(&rhs, &mut ztilde);
            for j in 0..dim {
                x[j] = relax * rhs[j] + (1.0 - relax) * x[j];
            }
            // z- and y-updates
            y_prev.copy_from_slice(&y);
            for i in 0..k {
                let zr = relax * ztilde[i] + (1.0 - relax) * z[i];
                let zn = (zr + y[i] / self.rho_vec[i]).clamp(self.l[i], self.u[i]);
                y[i] += self.rho_vec[i] * (zr - zn);
                z[i] = zn;
            }

            let adapt = self.settings.adapt_interval > 0 && iter % self.settings.adapt_interval == 0;
            let last = iter == self.settings.max_iter;
            if iter % CHECK_EVERY != 0 && !adapt && !last {
                continue;
            }

            self.a.mul_vec_into(&x, &mut ax);
            self.p.mul_vec_into(&x, &mut px);
            self.a.tr_mul_vec_into(&y, &mut aty);
            let mut prim = 0.0f64;
            let mut prim_s = 0.0f64;
            for i in 0..k {
                let r = ax[i] - z[i];
                prim_s = prim_s.max(r.abs());
                prim = prim.max((r / self.e[i]).abs());
            }
            let mut dual = 0.0f64;
            let mut dual_s = 0.0f64;
            for j in 0..dim {
                let r = px[j] + self.q[j] + aty[j];
                dual_s = dual_s.max(r.abs());
                dual = dual.max((r / self.d[j]).abs());
            }
            dual /= self.cost;

            if prim <= tol && dual <= tol {
                if self.settings.polish {
                    if let Some(sol) = self.polish(&x, &z, &y, iter)? {
                        return Ok(sol);
                    }
                }
                return self.finish(&x, &y, iter, QpStatus::Solved);
            }

            if self.primal_infeasible(&y, &y_prev) {
                return self.finish(&x, &y, iter, QpStatus::InfeasibleSuspected);
            }

            if self.settings.polish
                && prim.max(dual) <= polish_trigger
                && last_polish.map_or(true, |lp| iter - lp >= POLISH_GAP.max(iter / 10))
            {
                last_polish = Some(iter);
                if let Some(sol) = self.polish(&x, &z, &y, iter)? {
                    return Ok(sol);
                }
            }

            if adapt {
                let prim_norm = norm_inf(&ax).max(norm_inf(&z)).max(1e-12);
                let dual_norm = norm_inf(&px).max(norm_inf(&aty)).max(norm_inf(&self.q)).max(1e-12);
                let ratio = (prim_s / prim_norm) / (dual_s / dual_norm).max(1e-30);
                let new_rho = (self.rho * libm::sqrt(ratio)).clamp(RHO_MIN, RHO_MAX);
                if new_rho.is_finite() && (new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho) {
                    self.rho = new_rho;
                    self.rho_vec = Self::rho_vector(&self.l, &self.u, new_rho);
                    self.factor = Self::factor_kkt(&self.p, &self.a, sigma, &self.rho_vec)?;
                }
            }
        }
        let iters = self.settings.max_iter;
        if self.settings.polish {
            if let Some(sol) = self.polish(&x, &z, &y, iters)? {
                return Ok(sol);
            }
        }
        self.finish(&x, &y, iters, QpStatus::MaxIter)
    }

    fn finish(&self, xs: &[f64], ys: &[f64], iterations: usize, status: QpStatus) -> Result<QpSolution> {
        let x = self.unscale_x(xs);
        let duals = self.unscale_duals(ys);
        let (primal_residual, dual_residual) = kkt_residual(self.prob, &x, &duals)?;
        let status = match status {
            QpStatus::Solved if primal_residual.max(dual_residual) > self.settings.tol => QpStatus::MaxIter,
            s => s,
        };
        Ok(QpSolution {
            x,
            duals,
            primal_residual,
            dual_residual,
            iterations,
            status,
            polished: false,
        })
    }

    fn primal_infeasible(&self, y: &[f64], y_prev: &[f64]) -> bool {
        let eps = self.settings.infeasibility_tol;
        let k = y.len();
        if k == 0 {
            return false;
        }
        let dy: Vec<f64> = (0..k).map(|i| (y[i] - y_prev[i]) * self.e[i] / self.cost).collect();
        let dy_norm = norm_inf(&dy);
        if dy_norm < 1e-8 {
            return false;
        }
        let mut support = 0.0;
        for i in 0..k {
            if dy[i] > 0.0 {
                if self.prob.u[i] == f64::INFINITY {
                    return false;
                }
                support += self.prob.u[i] * dy[i];
            } else if dy[i] < 0.0 {
                if self.prob.l[i] == f64::NEG_INFINITY {
                    return false;
                }
                support += self.prob.l[i] * dy[i];
            }
        }
        if support > -eps * dy_norm {
            return false;
        }
        let mut atdy = vec![0.0; self.prob.dim()];
        self.prob.a.tr_mul_vec_into(&dy, &mut atdy);
        norm_inf(&atdy) <= eps * dy_norm
    }

    fn polish(&self, xs: &[f64], zs: &[f64], ys: &[f64], iterations: usize) -> Result<Option<QpSolution>> {
        for near in POLISH_NEAR {
            if let Some(sol) = self.try_polish(xs, zs, ys, near, iterations)? {
                return Ok(Some(sol));
            }
        }
        Ok(None)
    }

    /// Guesses the active set from the current iterate (rows within `near` of
    /// a bound count as active) and solves the equality-constrained KKT system
    /// on it, refining from the current iterate. Rows whose multiplier prices
    /// the wrong side are dropped and violated rows added for a few rounds.
    /// Returns `Some` only when the polished point is a KKT point within tolerance.
    fn try_polish(&self, xs: &[f64], zs: &[f64], ys: &[f64], near: f64, iterations: usize) -> Result<Option<QpSolution>> {
        let k = self.prob.n_constraints();
        // (row, lower?)
        let mut active: Vec<(usize, bool)> = Vec::new();
        for i in 0..k {
            let lower = zs[i] - self.l[i] < (-ys[i]).max(0.0) + near;
            let upper = self.u[i] - zs[i] < ys[i].max(0.0) + near;
            if lower && (!upper || ys[i] < 0.0) {
                active.push((i, true));
            } else if upper {
                active.push((i, false));
            }
        }
        let tol = self.settings.tol;
        let mut x = xs.to_vec();
        let mut y_full = ys.to_vec();
        for _ in 0..POLISH_ROUNDS {
            let Some((xn, yn)) = self.solve_reduced(&active, &x, &y_full)? else {
                return Ok(None);
            };
            x = xn;
            y_full = yn;
            let x_out = self.unscale_x(&x);
            let duals = self.unscale_duals(&y_full);
            let (primal_residual, dual_residual) = kkt_residual(self.prob, &x_out, &duals)?;
            let wrong_sign = |&(i, lower): &(usize, bool)| {
                let lam = duals[i];
                (lower && lam < 0.0) || (!lower && lam > 0.0)
            };
            let sign_ok = active.iter().all(|a| {
                let lam = duals[a.0];
                !((a.1 && lam < -tol) || (!a.1 && lam > tol))
            });
            if sign_ok && primal_residual.max(dual_residual) <= tol {
                return Ok(Some(QpSolution {
                    x: x_out,
                    duals,
                    primal_residual,
                    dual_residual,
                    iterations,
                    status: QpStatus::Solved,
                    polished: true,
                }));
            }
            let mut ax = vec![0.0; k];
            self.a.mul_vec_into(&x, &mut ax);
            let before = active.len();
            active.retain(|a| !wrong_sign(a));
            let dropped = active.len() != before;
            let mut added = false;
            for i in 0..k {
                if active.iter().any(|a| a.0 == i) {
                    continue;
                }
                if ax[i] > self.u[i] + tol {
                    active.push((i, false));
                    added = true;
                } else if ax[i] < self.l[i] - tol {
                    active.push((i, true));
                    added = true;
                }
            }
            if !dropped && !added {
                return Ok(None);
            }
            active.sort_unstable();
        }
        Ok(None)
    }

    /// Solves `[P Aₐᵀ; Aₐ 0][x; y] = [−q; b]` on the active rows by regularized
    /// iterative refinement from `(x0, y0)`. Returns scaled `x` and full-length `y`.
    fn solve_reduced(&self, active: &[(usize, bool)], x0: &[f64], y0: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        let dim = self.prob.dim();
        let k = self.prob.n_constraints();
        let mut red = match &self.p {
            QuadTerm::Dense(m) => m.clone(),
            QuadTerm::Diagonal(v) => {
                let mut m = Matrix::zeros(dim, dim);
                for (i, x) in v.iter().enumerate() {
                    m[(i, i)] = *x;
                }
                m
            }
        };
        for j in 0..dim {
            red[(j, j)] += POLISH_DELTA;
        }
        let mut act_a = CsrMatrix::new(dim);
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for &(i, _) in active {
            row_buf.clear();
            row_buf.extend(self.a.row(i));
            act_a.push_row(&row_buf)?;
        }
        act_a.add_weighted_gram(&mut red, |_| 1.0 / POLISH_DELTA);
        let factor = match Cholesky::factor(red) {
            Ok(f) => f,
            Err(_) => return Ok(None),
        };
        let b: Vec<f64> = active
            .iter()
            .map(|&(i, lower)| if lower { self.l[i] } else { self.u[i] })
            .collect();
        let na = active.len();
        let mut x = x0.to_vec();
        let mut y: Vec<f64> = active.iter().map(|a| y0[a.0]).collect();
        let mut r1 = vec![0.0; dim];
        let mut r2 = vec![0.0; na];
        let mut tmp = vec![0.0; dim];
        let mut prev_res = f64::INFINITY;
        for _ in 0..=POLISH_REFINE {
            // residual of the exact KKT system
            self.p.mul_vec_into(&x, &mut r1);
            act_a.tr_mul_vec_into(&y, &mut tmp);
            for j in 0..dim {
                r1[j] = -self.q[j] - r1[j] - tmp[j];
            }
            act_a.mul_vec_into(&x, &mut r2);
            for i in 0..na {
                r2[i] = b[i] - r2[i];
            }
            let res = norm_inf(&r1).max(norm_inf(&r2));
            if res < 1e-14 || res > 0.9 * prev_res {
                break;
            }
            prev_res = res;
            // regularized correction: Δy = (AΔx − r2)/δ, (P + δI + AᵀA/δ)Δx = r1 + Aᵀr2/δ
            act_a.tr_mul_vec_into(&r2, &mut tmp);
            let mut dx: Vec<f64> = r1.iter().zip(&tmp).map(|(a, b)| a + b / POLISH_DELTA).collect();
            factor.solve_in_place(&mut dx);
            let mut adx = vec![0.0; na];
            act_a.mul_vec_into(&dx, &mut adx);
            for i in 0..na {
                y[i] += (adx[i] - r2[i]) / POLISH_DELTA;
            }
            for j in 0..dim {
                x[j] += dx[j];
            }
        }
        if !x.iter().chain(&y).all(|v| v.is_finite()) {
            return Ok(None);
        }
        let mut y_full = vec![0.0; k];
        for (&(i, _), v) in active.iter().zip(&y) {
            y_full[i] = *v;
        }
        Ok(Some((x, y_full)))
    }
}
