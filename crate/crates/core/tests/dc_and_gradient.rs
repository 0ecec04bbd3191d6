use lder_core::train::dca::dca_beta;
use lder_core::{
    assemble_ccp_subproblem, assemble_dca_subproblem, dc_components, finite_diff_grad, grad_mse, linearize_branch,
    mse, solve_qp, Branch, LDerParams, Matrix, ModelDims, QpStatus, TrainingSet,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_params(rng: &mut ChaCha8Rng, dims: ModelDims, scale: f64) -> LDerParams {
    let alpha = (0..dims.flat_len()).map(|_| rng.random_range(-scale..scale)).collect();
    LDerParams::unflatten(alpha, dims).unwrap()
}

fn random_set(rng: &mut ChaCha8Rng, m: usize, n: usize) -> TrainingSet {
    let x: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    TrainingSet::new(Matrix::from_row_major(m, n, x).unwrap(), y).unwrap()
}

/// Smallest gap between the best and second-best piece of either branch.
fn argmax_gap(p: &LDerParams, t: &TrainingSet) -> f64 {
    let d = p.dims();
    let gap = |range: std::ops::Range<usize>, x: &[f64]| {
        let mut v: Vec<f64> = range.map(|s| p.piece(s, x)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.len() > 1 {
            v[0] - v[1]
        } else {
            f64::INFINITY
        }
    };
    t.x()
        .iter_rows()
        .map(|x| gap(0..d.r1, x).min(gap(d.r1..d.blocks(), x)))
        .fold(f64::INFINITY, f64::min)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut tested = 0;
    while tested < 100 {
        let n = rng.random_range(1..=5);
        let r = rng.random_range(1..=4);
        let dims = ModelDims::new(n, r, r).unwrap();
        let m = rng.random_range(1..=20);
        let t = random_set(&mut rng, m, n);
        let p = random_params(&mut rng, dims, 1.0);
        if argmax_gap(&p, &t) < 1e-4 {
            continue;
        }
        let g = grad_mse(&p, &t).unwrap();
        let fd = finite_diff_grad(|a| mse(&LDerParams::unflatten(a.to_vec(), dims).unwrap(), &t).unwrap(), p.alpha(), 1e-6)
            .unwrap();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&fd).max(1e-12);
        assert!(rel <= 1e-5, "relative error {rel}");
        tested += 1;
    }
}

#[test]
fn gradient_is_sample_weighted_average() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let dims = ModelDims::new(3, 2, 3).unwrap();
    let t = random_set(&mut rng, 12, 3);
    let p = random_params(&mut rng, dims, 1.0);
    let a = t.subset(&(0..5).collect::<Vec<_>>()).unwrap();
    let b = t.subset(&(5..12).collect::<Vec<_>>()).unwrap();
    let (ga, gb, g) = (grad_mse(&p, &a).unwrap(), grad_mse(&p, &b).unwrap(), grad_mse(&p, &t).unwrap());
    for k in 0..g.len() {
        assert!((g[k] - (5.0 * ga[k] + 7.0 * gb[k]) / 12.0).abs() <= 1e-12);
    }
}

#[test]
fn dc_identity_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let n = rng.random_range(1..=4);
        let dims = ModelDims::new(n, rng.random_range(1..=4), rng.random_range(1..=4)).unwrap();
        let m = rng.random_range(1..=25);
        let t = random_set(&mut rng, m, n);
        let anchor = random_params(&mut rng, dims, 1.0);
        let dc = dc_components(&t, &anchor).unwrap();
        for _ in 0..100 {
            let p = random_params(&mut rng, dims, 2.0);
            let e = mse(&p, &t).unwrap();
            let gap = dc.g(p.alpha()).unwrap() - dc.h(p.alpha()).unwrap() - e;
            assert!(gap.abs() <= 1e-9 * (1.0 + e), "gap {gap}");
        }
    }
}

#[test]
fn components_at_the_anchor() {
    // with φ = max{−ℓ1, −ℓ2}, G(ᾱ) = 2 MSE(ᾱ) and H(ᾱ) = MSE(ᾱ)
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let dims = ModelDims::new(2, 3, 2).unwrap();
        let t = random_set(&mut rng, 15, 2);
        let anchor = random_params(&mut rng, dims, 1.0);
        let dc = dc_components(&t, &anchor).unwrap();
        let e = mse(&anchor, &t).unwrap();
        assert!((dc.g(anchor.alpha()).unwrap() - 2.0 * e).abs() <= 1e-12 * (1.0 + e));
        assert!((dc.h(anchor.alpha()).unwrap() - e).abs() <= 1e-12 * (1.0 + e));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn components_are_midpoint_convex(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = ModelDims::new(2, 2, 3).unwrap();
        let t = random_set(&mut rng, 10, 2);
        let anchor = random_params(&mut rng, dims, 1.0);
        let dc = dc_components(&t, &anchor).unwrap();
        let a = random_params(&mut rng, dims, 2.0);
        let b = random_params(&mut rng, dims, 2.0);
        let mid: Vec<f64> = a.alpha().iter().zip(b.alpha()).map(|(x, y)| 0.5 * (x + y)).collect();
        for f in [|d: &lder_core::DcDecomposition, v: &[f64]| d.g(v).unwrap(), |d: &lder_core::DcDecomposition, v: &[f64]| d.h(v).unwrap()] {
            let (fa, fb, fm) = (f(&dc, a.alpha()), f(&dc, b.alpha()), f(&dc, &mid));
            prop_assert!(fm <= 0.5 * (fa + fb) + 1e-9 * (1.0 + fa.abs() + fb.abs()));
        }
    }

    #[test]
    fn dca_beta_is_a_subgradient_of_h(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = ModelDims::new(2, 3, 2).unwrap();
        let t = random_set(&mut rng, 12, 2);
        let anchor = random_params(&mut rng, dims, 1.0);
        let dc = dc_components(&t, &anchor).unwrap();
        let beta = dca_beta(&anchor, &t).unwrap();
        let h0 = dc.h(anchor.alpha()).unwrap();
        for _ in 0..20 {
            let p = random_params(&mut rng, dims, 2.0);
            let lin: f64 = h0 + beta.iter().zip(p.alpha()).zip(anchor.alpha()).map(|((b, x), a)| b * (x - a)).sum::<f64>();
            prop_assert!(dc.h(p.alpha()).unwrap() >= lin - 1e-9 * (1.0 + lin.abs()));
        }
    }

    #[test]
    fn branch_tangents_are_exact_minorants(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = ModelDims::new(3, 3, 3).unwrap();
        let anchor = random_params(&mut rng, dims, 1.0);
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (d1, d2) = anchor.branches(&x).unwrap();
        let la = linearize_branch(Branch::DilationA, &anchor, &x).unwrap();
        let lb = linearize_branch(Branch::DilationB, &anchor, &x).unwrap();
        prop_assert!((la.eval(anchor.alpha()) - d1).abs() <= 1e-12);
        prop_assert!((lb.eval(anchor.alpha()) - d2).abs() <= 1e-12);
        for _ in 0..20 {
            let p = random_params(&mut rng, dims, 2.0);
            let (v1, v2) = p.branches(&x).unwrap();
            prop_assert!(la.eval(p.alpha()) <= v1 + 1e-12);
            prop_assert!(lb.eval(p.alpha()) <= v2 + 1e-12);
        }
    }
}

/// `S(α) = G(α) − ⟨β, α⟩ + (γ/2)‖α − α_t‖²` evaluated directly.
fn surrogate(dc: &lder_core::DcDecomposition, beta: &[f64], anchor: &[f64], prox: f64, alpha: &[f64]) -> f64 {
    let lin: f64 = beta.iter().zip(alpha).map(|(b, a)| b * a).sum();
    let reg: f64 = alpha.iter().zip(anchor).map(|(a, c)| (a - c) * (a - c)).sum();
    dc.g(alpha).unwrap() - lin + 0.5 * prox * reg
}

#[test]
fn dca_subproblem_minimizes_the_convex_surrogate() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let prox = 1e-2;
    for _ in 0..8 {
        let dims = ModelDims::new(2, 2, 2).unwrap();
        let t = random_set(&mut rng, 10, 2);
        let anchor = random_params(&mut rng, dims, 1.0);
        let beta = dca_beta(&anchor, &t).unwrap();
        let prob = assemble_dca_subproblem(&anchor, &beta, &t, prox).unwrap();
        let sol = solve_qp(&prob, 1e-9, 50_000).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        let flat = dims.flat_len();
        let star = &sol.x[..flat];
        let dc = dc_components(&t, &anchor).unwrap();
        let s_star = surrogate(&dc, &beta, anchor.alpha(), prox, star);
        // QP objective equals the surrogate up to the constant (γ/2)‖α_t‖²
        let shift = 0.5 * prox * anchor.alpha().iter().map(|a| a * a).sum::<f64>();
        assert!((prob.objective(&sol.x) + shift - s_star).abs() <= 1e-6);
        assert!(s_star <= surrogate(&dc, &beta, anchor.alpha(), prox, anchor.alpha()) + 1e-7);
        for _ in 0..50 {
            let probe: Vec<f64> = star.iter().map(|v| v + rng.random_range(-1e-2..1e-2)).collect();
            assert!(s_star <= surrogate(&dc, &beta, anchor.alpha(), prox, &probe) + 1e-7);
        }
    }
}

#[test]
fn ccp_subproblem_slack_bounds_the_true_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for penalty in [1e-3, 1.0, 100.0] {
        let dims = ModelDims::new(2, 2, 2).unwrap();
        let t = random_set(&mut rng, 12, 2);
        let anchor = random_params(&mut rng, dims, 1.0);
        let prob = assemble_ccp_subproblem(&anchor, &t, penalty, 1e-3).unwrap();
        let sol = solve_qp(&prob, 1e-9, 50_000).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        let flat = dims.flat_len();
        let m = t.len();
        let p = LDerParams::unflatten(sol.x[..flat].to_vec(), dims).unwrap();
        for i in 0..m {
            let (x, y) = t.sample(i);
            let r = (p.predict(x).unwrap() + sol.x[flat + i] - y).abs();
            assert!(r <= sol.x[flat + m + i].max(0.0) + 1e-7, "residual {r}");
        }
    }
}
