use lder_core::{
    kkt_residual, solve_qp, CsrMatrix, Matrix, QpProblem, QpSettings, QpSolver, QpStatus, QuadTerm,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A strictly convex QP whose optimum `x*` and multipliers are fixed in advance
/// and the linear term chosen so that `Q x* + c = Aᵀλ`.
fn constructed(rng: &mut ChaCha8Rng, d: usize, k: usize) -> (QpProblem, Vec<f64>) {
    let b: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut q = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            q[(i, j)] = (0..d).map(|l| b[i * d + l] * b[j * d + l]).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
        }
    }
    let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut a = CsrMatrix::new(d);
    let (mut lo, mut hi, mut lam) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..k {
        let row: Vec<(usize, f64)> = (0..d).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
        let ax: f64 = row.iter().map(|(j, v)| v * x[*j]).sum();
        a.push_row(&row).unwrap();
        match rng.random_range(0..4) {
            0 => {
                lo.push(ax - rng.random_range(0.1..1.0));
                hi.push(ax);
                lam.push(-rng.random_range(0.1..1.0));
            }
            1 => {
                lo.push(ax);
                hi.push(ax + rng.random_range(0.1..1.0));
                lam.push(rng.random_range(0.1..1.0));
            }
            2 => {
                lo.push(ax);
                hi.push(ax);
                lam.push(rng.random_range(-1.0..1.0));
            }
            _ => {
                lo.push(ax - rng.random_range(0.1..1.0));
                hi.push(ax + rng.random_range(0.1..1.0));
                lam.push(0.0);
            }
        }
    }
    let dense = a.to_dense();
    let c = (0..d)
        .map(|j| {
            let qx: f64 = (0..d).map(|l| q[(j, l)] * x[l]).sum();
            let atl: f64 = (0..k).map(|i| dense[(i, j)] * lam[i]).sum();
            atl - qx
        })
        .collect();
    (QpProblem::new(QuadTerm::Dense(q), c, a, Some(lo), hi).unwrap(), x)
}

#[test]
fn recovers_constructed_optima() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let d = rng.random_range(1..=10);
        let k = rng.random_range(1..=20);
        let (prob, x_star) = constructed(&mut rng, d, k);
        let sol = solve_qp(&prob, 1e-9, 50_000).unwrap();
        assert_eq!(sol.status, QpStatus::Solved);
        let err = sol.x.iter().zip(&x_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let (p, dres) = kkt_residual(&prob, &sol.x, &sol.duals).unwrap();
        assert!(err <= 1e-5, "solution error {err}");
        assert!(p <= 1e-6 && dres <= 1e-6, "kkt {p} {dres}");
    }
}

#[test]
fn unconstrained_diagonal_minimizer() {
    // min ½ Σ q_j x_j² + c_j x_j  →  x_j = −c_j / q_j
    let q = vec![2.0, 0.5, 4.0];
    let c = vec![1.0, -2.0, 8.0];
    let mut a = CsrMatrix::new(3);
    a.push_row(&[(0, 1.0)]).unwrap();
    let prob = QpProblem::new(QuadTerm::Diagonal(q), c, a, None, vec![100.0]).unwrap();
    let sol = solve_qp(&prob, 1e-10, 10_000).unwrap();
    for (got, want) in sol.x.iter().zip([-0.5, 4.0, -2.0]) {
        assert!((got - want).abs() <= 1e-8);
    }
    assert!(sol.duals[0].abs() <= 1e-8);
}

#[test]
fn projection_onto_a_halfspace() {
    // min ½‖x − z‖² s.t. x₀ + x₁ ≤ 1 with z = (2, 2): x = (0.5, 0.5), λ = −1.5
    let mut a = CsrMatrix::new(2);
    a.push_row(&[(0, 1.0), (1, 1.0)]).unwrap();
    let prob = QpProblem::new(QuadTerm::Diagonal(vec![1.0, 1.0]), vec![-2.0, -2.0], a, None, vec![1.0]).unwrap();
    let sol = solve_qp(&prob, 1e-10, 10_000).unwrap();
    assert!((sol.x[0] - 0.5).abs() <= 1e-8 && (sol.x[1] - 0.5).abs() <= 1e-8);
    assert!((sol.duals[0] + 1.5).abs() <= 1e-7);
}

#[test]
fn detects_primal_infeasibility() {
    // x ≤ −1 and x ≥ 1
    let mut a = CsrMatrix::new(1);
    a.push_row(&[(0, 1.0)]).unwrap();
    a.push_row(&[(0, 1.0)]).unwrap();
    let prob = QpProblem::new(
        QuadTerm::Diagonal(vec![1.0]),
        vec![0.0],
        a,
        Some(vec![f64::NEG_INFINITY, 1.0]),
        vec![-1.0, f64::INFINITY],
    )
    .unwrap();
    let sol = solve_qp(&prob, 1e-8, 20_000).unwrap();
    assert_eq!(sol.status, QpStatus::InfeasibleSuspected);
}

#[test]
fn warm_start_at_the_optimum_agrees_with_cold_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let (prob, _) = constructed(&mut rng, 6, 9);
        let settings = QpSettings { tol: 1e-9, max_iter: 50_000, ..Default::default() };
        let cold = QpSolver::new(&prob, settings).unwrap().solve(None, None).unwrap();
        let warm = QpSolver::new(&prob, settings).unwrap().solve(Some(&cold.x), Some(&cold.duals)).unwrap();
        assert_eq!(warm.status, QpStatus::Solved);
        assert!(warm.iterations <= cold.iterations);
        let err = warm.x.iter().zip(&cold.x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-6);
    }
}

#[test]
fn rejects_malformed_problems() {
    let mut a = CsrMatrix::new(2);
    a.push_row(&[(0, 1.0)]).unwrap();
    assert!(QpProblem::new(QuadTerm::Diagonal(vec![1.0]), vec![0.0, 0.0], a.clone(), None, vec![1.0]).is_err());
    assert!(QpProblem::new(QuadTerm::Diagonal(vec![1.0, 1.0]), vec![0.0], a.clone(), None, vec![1.0]).is_err());
    assert!(QpProblem::new(QuadTerm::Diagonal(vec![1.0, 1.0]), vec![0.0, 0.0], a.clone(), None, vec![]).is_err());
    assert!(QpProblem::new(QuadTerm::Diagonal(vec![1.0, 1.0]), vec![0.0, 0.0], a, Some(vec![2.0]), vec![1.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn solution_is_feasible_and_no_worse_than_feasible_probes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (prob, x_star) = constructed(&mut rng, 4, 6);
        let sol = solve_qp(&prob, 1e-9, 50_000).unwrap();
        prop_assert!(prob.max_violation(&sol.x) <= 1e-7);
        let f = prob.objective(&sol.x);
        prop_assert!(f <= prob.objective(&x_star) + 1e-7);
        for _ in 0..30 {
            let probe: Vec<f64> = sol.x.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            if prob.max_violation(&probe) == 0.0 {
                prop_assert!(f <= prob.objective(&probe) + 1e-7);
            }
        }
    }
}
