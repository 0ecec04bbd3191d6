use lder_core::{
    init_params, mse, synth_pwl, train_dca, train_dccp, train_sgd, CcpConfig, DcaConfig, Matrix, ModelDims,
    SgdConfig, Termination, TrainingSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Least-squares MSE of an affine fit, by Gaussian elimination on the normal equations.
fn normal_equations_mse(t: &TrainingSet) -> f64 {
    let (m, n) = (t.len(), t.n_features());
    let d = n + 1;
    let row = |i: usize| {
        let mut r = t.x().row(i).to_vec();
        r.push(1.0);
        r
    };
    let mut a = vec![vec![0.0; d + 1]; d];
    for i in 0..m {
        let r = row(i);
        for p in 0..d {
            for q in 0..d {
                a[p][q] += r[p] * r[q];
            }
            a[p][d] += r[p] * t.y()[i];
        }
    }
    for c in 0..d {
        let piv = (c..d).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..d {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=d {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..d).map(|i| a[i][d] / a[i][i]).collect();
    (0..m)
        .map(|i| {
            let r = row(i);
            let p: f64 = r.iter().zip(&beta).map(|(u, v)| u * v).sum();
            (p - t.y()[i]).powi(2)
        })
        .sum::<f64>()
        / m as f64
}

fn affine_data(seed: u64, m: usize, n: usize) -> TrainingSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let x: Vec<f64> = (0..m * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..m)
        .map(|i| {
            let lin: f64 = (0..n).map(|k| w[k] * x[i * n + k]).sum();
            lin + 0.5 + rng.random_range(-0.3..0.3)
        })
        .collect();
    TrainingSet::new(Matrix::from_row_major(m, n, x).unwrap(), y).unwrap()
}

#[test]
fn affine_models_reach_the_least_squares_optimum() {
    let dims = ModelDims::new(3, 1, 1).unwrap();
    for seed in 0..2 {
        let t = affine_data(seed, 60, 3);
        let best = normal_equations_mse(&t);
        let (p, _) = train_sgd(&t, dims, &SgdConfig { seed, ..Default::default() }).unwrap();
        let sgd = mse(&p, &t).unwrap();
        let (p, _) = train_dca(&t, dims, &DcaConfig { seed, ..Default::default() }).unwrap();
        let dca = mse(&p, &t).unwrap();
        let (p, _) = train_dccp(&t, dims, &CcpConfig { seed, ..Default::default() }).unwrap();
        let dccp = mse(&p, &t).unwrap();
        for (name, v) in [("sgd", sgd), ("dca", dca), ("dccp", dccp)] {
            assert!(v >= best - 1e-12, "{name} below the optimum");
            assert!(v - best <= 1e-4, "{name}: {v} vs {best}");
        }
    }
}

#[test]
fn zero_learning_rate_keeps_the_initial_parameters() {
    let dims = ModelDims::new(2, 2, 2).unwrap();
    let (t, _) = synth_pwl(dims, 30, 0.0, 1).unwrap();
    let cfg = SgdConfig { learning_rate: 0.0, epochs: 5, seed: 4, ..Default::default() };
    let (p, report) = train_sgd(&t, dims, &cfg).unwrap();
    assert_eq!(p, init_params(dims, 4, cfg.init_scale));
    assert_eq!(report.loss_trace.len(), 6);
    assert!(report.loss_trace.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(report.termination, Termination::EpochsExhausted);
}

#[test]
fn zero_init_scale_gives_zero_parameters() {
    let dims = ModelDims::new(3, 2, 4).unwrap();
    assert!(init_params(dims, 11, 0.0).alpha().iter().all(|v| *v == 0.0));
    assert_eq!(init_params(dims, 11, 1.0), init_params(dims, 11, 1.0));
    assert_ne!(init_params(dims, 11, 1.0), init_params(dims, 12, 1.0));
}

#[test]
fn sgd_is_deterministic_and_decreases_loss() {
    let dims = ModelDims::new(2, 2, 2).unwrap();
    let (t, _) = synth_pwl(dims, 80, 0.0, 3).unwrap();
    let cfg = SgdConfig { epochs: 300, seed: 9, ..Default::default() };
    let (p1, r1) = train_sgd(&t, dims, &cfg).unwrap();
    let (p2, r2) = train_sgd(&t, dims, &cfg).unwrap();
    assert_eq!(p1, p2);
    assert_eq!(r1.loss_trace, r2.loss_trace);
    assert!(r1.final_loss().unwrap() < r1.loss_trace[0]);
    assert!(r1.loss_trace.iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn dca_descends_monotonically() {
    let dims = ModelDims::new(2, 2, 2).unwrap();
    for seed in 0..3 {
        let (t, _) = synth_pwl(dims, 40, 0.05, 200 + seed).unwrap();
        let (p, r) = train_dca(&t, dims, &DcaConfig { seed, ..Default::default() }).unwrap();
        assert_eq!(r.termination, Termination::Converged);
        assert!(r.iterations <= 200);
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{:?}", r.loss_trace);
        assert_eq!(mse(&p, &t).unwrap(), r.final_loss().unwrap());
        assert_eq!(r.dual.len(), dims.flat_len());
    }
}

#[test]
fn dca_stops_at_once_on_data_from_its_start() {
    let dims = ModelDims::new(2, 2, 3).unwrap();
    let start = init_params(dims, 5, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Matrix::from_row_major(25, 2, (0..50).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let y = start.predict_batch(&x).unwrap();
    let t = TrainingSet::new(x, y).unwrap();
    let (_, r) = train_dca(&t, dims, &DcaConfig { seed: 5, ..Default::default() }).unwrap();
    assert_eq!(r.termination, Termination::Converged);
    assert_eq!(r.iterations, 1);
    assert!(r.final_loss().unwrap() <= 1e-10);

    let (_, r) = train_dccp(&t, dims, &CcpConfig { seed: 5, ..Default::default() }).unwrap();
    assert!(r.slack_trace[0] <= 1e-8 && r.loss_trace[1] <= 1e-8, "{:?}", r.slack_trace);
}

#[test]
fn dccp_penalty_follows_the_capped_geometric_schedule() {
    let dims = ModelDims::new(2, 2, 2).unwrap();
    let (t, _) = synth_pwl(dims, 40, 0.0, 77).unwrap();
    let cfg = CcpConfig { t0: 0.5, mu: 3.0, t_max: 40.0, max_outer: 8, converge_tol: 1e-12, seed: 1, ..Default::default() };
    let (_, r) = train_dccp(&t, dims, &cfg).unwrap();
    assert!(!r.penalty_trace.is_empty());
    let mut want = cfg.t0;
    for (k, &tk) in r.penalty_trace.iter().enumerate() {
        assert_eq!(tk, want, "k = {k}");
        assert_eq!(tk, (cfg.mu.powi(k as i32) * cfg.t0).min(cfg.t_max));
        want = (cfg.mu * want).min(cfg.t_max);
    }
    assert_eq!(r.slack_trace.len(), r.penalty_trace.len());
    assert_eq!(r.equality_residual.len(), r.penalty_trace.len());
}

#[test]
fn dc_trainers_reject_bad_settings() {
    let dims = ModelDims::new(1, 1, 1).unwrap();
    let (t, _) = synth_pwl(dims, 10, 0.0, 0).unwrap();
    assert!(train_dccp(&t, dims, &CcpConfig { mu: 1.0, ..Default::default() }).is_err());
    assert!(train_dccp(&t, dims, &CcpConfig { t0: 10.0, t_max: 1.0, ..Default::default() }).is_err());
    assert!(train_dca(&t, dims, &DcaConfig { epsilon: 0.0, ..Default::default() }).is_err());
    assert!(train_sgd(&t, dims, &SgdConfig { momentum: 1.0, ..Default::default() }).is_err());
    assert!(train_sgd(&t, ModelDims::new(2, 1, 1).unwrap(), &SgdConfig::default()).is_err());
}
