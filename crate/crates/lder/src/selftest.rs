//! Quick invariant checks run by `lder selftest`.

use lder_core::{
    dc_components, finite_diff_grad, grad_mse, kfold_split, kkt_residual, mse, solve_qp, standardize,
    wilcoxon_signed_rank, CsrMatrix, LDerParams, Matrix, ModelDims, QpProblem, QuadTerm, TrainingSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_params(rng: &mut ChaCha8Rng, dims: ModelDims) -> LDerParams {
    let alpha = (0..dims.flat_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    LDerParams::unflatten(alpha, dims).expect("length matches dims")
}

fn random_dims(rng: &mut ChaCha8Rng, max_n: usize, max_r: usize) -> ModelDims {
    ModelDims::new(
        rng.random_range(1..=max_n),
        rng.random_range(1..=max_r),
        rng.random_range(1..=max_r),
    )
    .expect("positive dims")
}

fn random_set(rng: &mut ChaCha8Rng, m: usize, n: usize) -> TrainingSet {
    let x: Vec<f64> = (0..m * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    TrainingSet::new(Matrix::from_row_major(m, n, x).expect("sizes"), y).expect("sizes")
}

fn brute_force(p: &LDerParams, x: &[f64]) -> f64 {
    let d = p.dims();
    let mut hi = f64::NEG_INFINITY;
    for i in 0..d.r1 {
        let mut v = p.a(i);
        for k in 0..d.n {
            v += p.w_row(i)[k] * x[k];
        }
        hi = hi.max(v);
    }
    let mut lo = f64::NEG_INFINITY;
    for j in 0..d.r2 {
        let mut v = p.b(j);
        for k in 0..d.n {
            v += p.m_row(j)[k] * x[k];
        }
        lo = lo.max(v);
    }
    hi - lo
}

fn check_model(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    let mut roundtrip = true;
    for _ in 0..500 {
        let dims = random_dims(rng, 6, 6);
        let p = random_params(rng, dims);
        let x: Vec<f64> = (0..dims.n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v = p.predict(&x).expect("input length matches");
        worst = worst.max((v - brute_force(&p, &x)).abs());
        roundtrip &= LDerParams::unflatten(p.flatten(), dims).as_ref() == Ok(&p);
    }
    Check {
        name: "model evaluation",
        passed: worst <= 1e-12 && roundtrip,
        detail: format!("max |predict - brute force| = {worst:.2e}, flatten roundtrip {roundtrip}"),
    }
}

/// Smallest margin between the winning piece and the runner-up of either
/// branch over all samples.
fn argmax_gap(p: &LDerParams, t: &TrainingSet) -> f64 {
    let d = p.dims();
    let gap = |range: std::ops::Range<usize>, x: &[f64]| {
        let mut v: Vec<f64> = range.map(|s| p.piece(s, x)).collect();
        v.sort_by(|a, b| b.total_cmp(a));
        if v.len() > 1 { v[0] - v[1] } else { f64::INFINITY }
    };
    t.x()
        .iter_rows()
        .map(|x| gap(0..d.r1, x).min(gap(d.r1..d.blocks(), x)))
        .fold(f64::INFINITY, f64::min)
}

fn check_gradient(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    let mut tested = 0;
    while tested < 30 {
        let dims = random_dims(rng, 4, 3);
        let t = random_set(rng, 10, dims.n);
        let p = random_params(rng, dims);
        if argmax_gap(&p, &t) < 1e-4 {
            continue;
        }
        let g = grad_mse(&p, &t).expect("dims match");
        let fd = finite_diff_grad(
            |a| mse(&LDerParams::unflatten(a.to_vec(), dims).expect("length"), &t).expect("dims"),
            p.alpha(),
            1e-6,
        )
        .expect("positive step");
        let num: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(num / den);
        tested += 1;
    }
    Check {
        name: "gradient vs finite differences",
        passed: worst <= 1e-5,
        detail: format!("max relative error {worst:.2e} over {tested} points"),
    }
}

fn check_dc_identity(rng: &mut ChaCha8Rng) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let dims = random_dims(rng, 3, 3);
        let t = random_set(rng, 12, dims.n);
        let anchor = random_params(rng, dims);
        let dc = dc_components(&t, &anchor).expect("dims match");
        for _ in 0..40 {
            let p = random_params(rng, dims);
            let e = mse(&p, &t).expect("dims");
            let g = dc.g(p.alpha()).expect("length");
            let h = dc.h(p.alpha()).expect("length");
            worst = worst.max((g - h - e).abs() / (1.0 + e));
        }
    }
    Check {
        name: "DC decomposition identity",
        passed: worst <= 1e-9,
        detail: format!("max |G - H - MSE| / (1 + MSE) = {worst:.2e}"),
    }
}

fn check_qp(rng: &mut ChaCha8Rng) -> Check {
    let mut worst_x = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for _ in 0..40 {
        let d = rng.random_range(1..=8);
        let k = rng.random_range(1..=12);
        let b: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let s: f64 = (0..d).map(|l| b[i * d + l] * b[j * d + l]).sum();
                q[(i, j)] = s + if i == j { 0.5 } else { 0.0 };
            }
        }
        let x_star: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut a = CsrMatrix::new(d);
        let mut lo = Vec::with_capacity(k);
        let mut hi = Vec::with_capacity(k);
        let mut lam = Vec::with_capacity(k);
        for _ in 0..k {
            let row: Vec<(usize, f64)> = (0..d).map(|j| (j, rng.random_range(-1.0..1.0))).collect();
            let ax: f64 = row.iter().map(|(j, v)| v * x_star[*j]).sum();
            a.push_row(&row).expect("columns in range");
            match rng.random_range(0..3) {
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
                _ => {
                    lo.push(ax - rng.random_range(0.1..1.0));
                    hi.push(ax + rng.random_range(0.1..1.0));
                    lam.push(0.0);
                }
            }
        }
        let dense_a = a.to_dense();
        let c: Vec<f64> = (0..d)
            .map(|j| {
                let qx: f64 = (0..d).map(|l| q[(j, l)] * x_star[l]).sum();
                let atl: f64 = (0..k).map(|i| dense_a[(i, j)] * lam[i]).sum();
                atl - qx
            })
            .collect();
        let prob = QpProblem::new(QuadTerm::Dense(q), c, a, Some(lo), hi).expect("valid problem");
        match solve_qp(&prob, 1e-9, 50_000) {
            Ok(sol) => {
                let err = sol.x.iter().zip(&x_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                let (p, dres) = kkt_residual(&prob, &sol.x, &sol.duals).expect("sizes");
                worst_x = worst_x.max(err);
                worst_kkt = worst_kkt.max(p.max(dres));
            }
            Err(_) => worst_x = f64::INFINITY,
        }
    }
    Check {
        name: "QP solver on constructed optima",
        passed: worst_x <= 1e-5 && worst_kkt <= 1e-6,
        detail: format!("max solution error {worst_x:.2e}, max KKT residual {worst_kkt:.2e}"),
    }
}

fn check_data(rng: &mut ChaCha8Rng) -> Check {
    let mut ok = true;
    for _ in 0..20 {
        let m = rng.random_range(2..60);
        let k = rng.random_range(2..=m.min(10));
        let plan = kfold_split(m, k, rng.random()).expect("valid k");
        let sizes = plan.fold_sizes();
        let (mn, mx) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        ok &= mx - mn <= 1 && sizes.iter().sum::<usize>() == m;
    }
    let x: Vec<f64> = (0..40).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x = Matrix::from_row_major(10, 4, x).expect("sizes");
    let (z, stats) = standardize(&x);
    let back = stats.invert(&z).expect("dims");
    let err = back.as_slice().iter().zip(x.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ok &= err <= 1e-10;
    Check {
        name: "fold plans and standardization",
        passed: ok,
        detail: format!("partition checks passed {ok}, standardization roundtrip error {err:.2e}"),
    }
}

fn check_wilcoxon() -> Check {
    let r = wilcoxon_signed_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], &[0.0; 5]);
    let passed = matches!(r, Ok(r) if r.w == 0.0 && r.p_two_sided == 0.0625 && r.exact);
    Check {
        name: "signed-rank test",
        passed,
        detail: "n=5 all-positive differences give W=0, p=0.0625".into(),
    }
}

pub fn run(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        check_model(&mut rng),
        check_gradient(&mut rng),
        check_dc_identity(&mut rng),
        check_qp(&mut rng),
        check_data(&mut rng),
        check_wilcoxon(),
    ]
}
