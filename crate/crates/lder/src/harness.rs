//! Cross-validation, trainer comparison and the benchmark report.

use std::fmt;
use std::time::Instant;

use lder_core::stats::{mean, median, sample_std};
use lder_core::{
    init_params, kfold_split, mape, mse, train_dca_from, train_dccp_from, train_sgd_from, wilcoxon_signed_rank,
    CcpConfig, Dataset, DcaConfig, LDerParams, Matrix, ModelDims, QpProblem, SgdConfig, StandardizeStats,
    TrainReport, TrainingSet,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerId {
    Sgd,
    Dca,
    Dccp,
}

impl TrainerId {
    pub const ALL: [TrainerId; 3] = [TrainerId::Sgd, TrainerId::Dca, TrainerId::Dccp];

    pub fn as_str(&self) -> &'static str {
        match self {
            TrainerId::Sgd => "sgd",
            TrainerId::Dca => "dca",
            TrainerId::Dccp => "dccp",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TrainerId::Sgd => "SGD",
            TrainerId::Dca => "DCA",
            TrainerId::Dccp => "DCCP",
        }
    }
}

impl fmt::Display for TrainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TrainerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(TrainerId::Sgd),
            "dca" => Ok(TrainerId::Dca),
            "dccp" | "ccp" => Ok(TrainerId::Dccp),
            other => Err(Error::Usage(format!("unknown trainer `{other}` (expected sgd, dca or dccp)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub init_scale: f64,
    pub decay: bool,
}

impl Default for SgdSettings {
    fn default() -> Self {
        let c = SgdConfig::default();
        SgdSettings {
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            batch_size: c.batch_size,
            momentum: c.momentum,
            init_scale: c.init_scale,
            decay: c.decay,
        }
    }
}

impl SgdSettings {
    pub fn config(&self, seed: u64) -> SgdConfig {
        SgdConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            momentum: self.momentum,
            seed,
            init_scale: self.init_scale,
            decay: self.decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DcaSettings {
    pub epsilon: f64,
    pub max_outer: usize,
    pub prox: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub init_scale: f64,
}

impl Default for DcaSettings {
    fn default() -> Self {
        let c = DcaConfig::default();
        DcaSettings {
            epsilon: c.epsilon,
            max_outer: c.max_outer,
            prox: c.prox,
            qp_tol: c.qp_tol,
            qp_max_iter: c.qp_max_iter,
            init_scale: c.init_scale,
        }
    }
}

impl DcaSettings {
    pub fn config(&self, seed: u64) -> DcaConfig {
        DcaConfig {
            epsilon: self.epsilon,
            max_outer: self.max_outer,
            prox: self.prox,
            qp_tol: self.qp_tol,
            qp_max_iter: self.qp_max_iter,
            seed,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DccpSettings {
    pub t0: f64,
    pub mu: f64,
    pub t_max: f64,
    pub max_outer: usize,
    pub slack_tol: f64,
    pub converge_tol: f64,
    pub prox: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
    pub init_scale: f64,
}

impl Default for DccpSettings {
    fn default() -> Self {
        let c = CcpConfig::default();
        DccpSettings {
            t0: c.t0,
            mu: c.mu,
            t_max: c.t_max,
            max_outer: c.max_outer,
            slack_tol: c.slack_tol,
            converge_tol: c.converge_tol,
            prox: c.prox,
            qp_tol: c.qp_tol,
            qp_max_iter: c.qp_max_iter,
            init_scale: c.init_scale,
        }
    }
}

impl DccpSettings {
    pub fn config(&self, seed: u64) -> CcpConfig {
        CcpConfig {
            t0: self.t0,
            mu: self.mu,
            t_max: self.t_max,
            max_outer: self.max_outer,
            slack_tol: self.slack_tol,
            converge_tol: self.converge_tol,
            prox: self.prox,
            qp_tol: self.qp_tol,
            qp_max_iter: self.qp_max_iter,
            seed,
            init_scale: self.init_scale,
        }
    }
}

/// Model size, preprocessing and per-trainer settings shared by every command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    pub r1: usize,
    pub r2: usize,
    /// Standardize features with training-fold statistics.
    pub standardize: bool,
    /// Train on centered, unit-variance targets and map the model back.
    /// The returned model and all scores are in raw target units.
    pub scale_targets: bool,
    pub sgd: SgdSettings,
    pub dca: DcaSettings,
    pub dccp: DccpSettings,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            r1: 10,
            r2: 10,
            standardize: true,
            scale_targets: true,
            sgd: SgdSettings::default(),
            dca: DcaSettings::default(),
            dccp: DccpSettings::default(),
        }
    }
}

impl HarnessConfig {
    pub fn dims(&self, n: usize) -> Result<ModelDims> {
        Ok(ModelDims::new(n, self.r1, self.r2)?)
    }
}

/// Runs one trainer from the seeded initialization on already-preprocessed data.
pub fn train(
    trainer: TrainerId,
    t: &TrainingSet,
    cfg: &HarnessConfig,
    seed: u64,
    observer: Option<&mut dyn FnMut(usize, &QpProblem)>,
) -> Result<(LDerParams, TrainReport)> {
    let dims = cfg.dims(t.n_features())?;
    let out = match trainer {
        TrainerId::Sgd => {
            let c = cfg.sgd.config(seed);
            train_sgd_from(t, init_params(dims, seed, c.init_scale), &c)?
        }
        TrainerId::Dca => {
            let c = cfg.dca.config(seed);
            train_dca_from(t, init_params(dims, seed, c.init_scale), &c, observer)?
        }
        TrainerId::Dccp => {
            let c = cfg.dccp.config(seed);
            train_dccp_from(t, init_params(dims, seed, c.init_scale), &c, observer)?
        }
    };
    Ok(out)
}

/// A model expressed in raw feature units, with the report of its training run.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: LDerParams,
    pub report: TrainReport,
    pub stats: Option<StandardizeStats>,
    /// `(mean, scale)` of the targets when they were scaled.
    pub target_scale: Option<(f64, f64)>,
}

/// Population mean and standard deviation of `y`; the scale falls back to 1
/// for constant targets.
pub fn target_scale(y: &[f64]) -> (f64, f64) {
    let mu = mean(y);
    let var = y.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / y.len() as f64;
    let sd = var.sqrt();
    if sd > 1e-12 * (1.0 + mu.abs()) {
        (mu, sd)
    } else {
        (mu, 1.0)
    }
}

/// Standardizes features and targets (when configured), trains, and folds
/// both transforms back into the returned model.
pub fn fit(
    trainer: TrainerId,
    x: &Matrix,
    y: &[f64],
    cfg: &HarnessConfig,
    seed: u64,
    observer: Option<&mut dyn FnMut(usize, &QpProblem)>,
) -> Result<Fitted> {
    let (xt, stats) = if cfg.standardize {
        let stats = StandardizeStats::fit(x);
        (stats.apply(x)?, Some(stats))
    } else {
        (x.clone(), None)
    };
    let ts = (cfg.scale_targets && !y.is_empty()).then(|| target_scale(y));
    let yt = match ts {
        Some((mu, sd)) => y.iter().map(|v| (v - mu) / sd).collect(),
        None => y.to_vec(),
    };
    let t = TrainingSet::new(xt, yt)?;
    let (p, report) = train(trainer, &t, cfg, seed, observer)?;
    let p = match ts {
        Some((mu, sd)) => p.rescale_output(sd, mu)?,
        None => p,
    };
    let model = match &stats {
        Some(s) => p.absorb_standardization(&s.mean, &s.std)?,
        None => p,
    };
    Ok(Fitted {
        model,
        report,
        stats,
        target_scale: ts,
    })
}

/// Test-set scores; MAPE is `None` when a target is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub mse: f64,
    pub mape: Option<f64>,
}

pub fn evaluate(model: &LDerParams, x: &Matrix, y: &[f64]) -> Result<Scores> {
    let t = TrainingSet::new(x.clone(), y.to_vec())?;
    let pred = model.predict_batch(x)?;
    let m = mape(y, &pred)?;
    Ok(Scores {
        mse: mse(model, &t)?,
        mape: m.is_finite().then_some(m),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Initialization seed of the trainer on this fold.
    pub seed: u64,
    pub mse: Option<f64>,
    pub mape: Option<f64>,
    pub train_mse: Option<f64>,
    pub iterations: usize,
    pub termination: Option<String>,
    pub loss_trace: Vec<f64>,
    pub wall_time: f64,
    /// Set when the trainer failed on this fold.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub dataset: String,
    pub trainer: TrainerId,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    /// `None` when any fold failed or had an undefined MAPE.
    pub mape_mean: Option<f64>,
    pub mape_std: Option<f64>,
    pub mse_mean: Option<f64>,
    pub mse_std: Option<f64>,
    /// Some fold failed; the aggregates cover the remaining folds.
    pub partial: bool,
    pub wall_time: f64,
}

impl CvResult {
    fn aggregate(dataset: &str, trainer: TrainerId, k: usize, seed: u64, folds: Vec<FoldResult>) -> Self {
        let partial = folds.iter().any(|f| f.error.is_some());
        let ok: Vec<&FoldResult> = folds.iter().filter(|f| f.error.is_none()).collect();
        let summarize = |v: Vec<f64>| -> (Option<f64>, Option<f64>) {
            if v.is_empty() {
                (None, None)
            } else {
                (Some(mean(&v)), Some(sample_std(&v)))
            }
        };
        let mses: Vec<f64> = ok.iter().filter_map(|f| f.mse).collect();
        let (mse_mean, mse_std) = summarize(mses);
        let mapes: Option<Vec<f64>> = ok.iter().map(|f| f.mape).collect();
        let (mape_mean, mape_std) = match mapes {
            Some(v) if !partial => summarize(v),
            _ => (None, None),
        };
        let wall_time = folds.iter().map(|f| f.wall_time).sum();
        CvResult {
            dataset: dataset.to_string(),
            trainer,
            k,
            seed,
            folds,
            mape_mean,
            mape_std,
            mse_mean,
            mse_std,
            partial,
            wall_time,
        }
    }
}

/// Seed of the trainer on `fold`; all trainers share it.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_add(1 + fold as u64)
}

fn check_complete(d: &Dataset) -> Result<()> {
    if d.missing_count() > 0 {
        return Err(Error::Usage(format!(
            "dataset `{}` has missing values; impute before cross-validation",
            d.name
        )));
    }
    Ok(())
}

fn run_fold(d: &Dataset, plan: &lder_core::FoldPlan, fold: usize, trainer: TrainerId, cfg: &HarnessConfig) -> FoldResult {
    let train_idx = plan.train_indices(fold);
    let test_idx = plan.test_indices(fold);
    let seed = fold_seed(plan.seed, fold);
    let mut out = FoldResult {
        fold,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        seed,
        mse: None,
        mape: None,
        train_mse: None,
        iterations: 0,
        termination: None,
        loss_trace: Vec::new(),
        wall_time: 0.0,
        error: None,
    };
    let start = Instant::now();
    let res = (|| -> Result<(Fitted, Scores, f64)> {
        let (xtr, ytr) = select(d, &train_idx)?;
        let (xte, yte) = select(d, &test_idx)?;
        let fitted = fit(trainer, &xtr, &ytr, cfg, seed, None)?;
        let scores = evaluate(&fitted.model, &xte, &yte)?;
        let train_mse = mse(&fitted.model, &TrainingSet::new(xtr, ytr)?)?;
        Ok((fitted, scores, train_mse))
    })();
    out.wall_time = start.elapsed().as_secs_f64();
    match res {
        Ok((fitted, scores, train_mse)) => {
            out.mse = Some(scores.mse);
            out.mape = scores.mape;
            out.train_mse = Some(train_mse);
            out.iterations = fitted.report.iterations;
            out.termination = Some(fitted.report.termination.as_str().to_string());
            out.loss_trace = fitted.report.loss_trace;
        }
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn select(d: &Dataset, idx: &[usize]) -> Result<(Matrix, Vec<f64>)> {
    let n = d.n_features();
    let mut x = Vec::with_capacity(idx.len() * n);
    for &i in idx {
        x.extend_from_slice(d.x.row(i));
    }
    let y = idx.iter().map(|&i| d.y[i]).collect();
    Ok((Matrix::from_row_major(idx.len(), n, x)?, y))
}

/// k-fold cross-validation of one trainer. Folds run in parallel.
pub fn run_cv(d: &Dataset, trainer: TrainerId, cfg: &HarnessConfig, k: usize, seed: u64) -> Result<CvResult> {
    check_complete(d)?;
    let plan = kfold_split(d.len(), k, seed)?;
    let folds: Vec<FoldResult> = (0..k)
        .into_par_iter()
        .map(|f| run_fold(d, &plan, f, trainer, cfg))
        .collect();
    Ok(CvResult::aggregate(&d.name, trainer, k, seed, folds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub dataset: String,
    pub n_samples: usize,
    pub n_features: usize,
    /// One entry per trainer, in table column order.
    pub cells: Vec<CvResult>,
    /// Min-max normalized mean MAPE per trainer; `None` where the mean is undefined.
    pub normalized: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub trainer: TrainerId,
    pub mean_fold_seconds: f64,
    pub median_fold_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: TrainerId,
    pub b: TrainerId,
    /// Datasets where both mean MAPEs are defined.
    pub n_pairs: usize,
    pub w: Option<f64>,
    pub w_plus: Option<f64>,
    pub w_minus: Option<f64>,
    pub p_two_sided: Option<f64>,
    pub exact: Option<bool>,
    pub degenerate: Option<bool>,
    /// Why the test could not run.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub trainers: Vec<TrainerId>,
    pub k: usize,
    pub seed: u64,
    pub rows: Vec<DatasetRow>,
    /// Median across datasets of each trainer's normalized score.
    pub median_normalized: Vec<Option<f64>>,
    pub timing: Vec<TimingSummary>,
    /// Signed-rank tests on per-dataset mean MAPE, one per trainer pair.
    pub wilcoxon: Vec<PairwiseTest>,
}

/// Min-max normalization of the defined entries; all-equal rows map to 0.
pub fn normalize_row(v: &[Option<f64>]) -> Vec<Option<f64>> {
    let defined: Vec<f64> = v.iter().flatten().copied().collect();
    if defined.is_empty() {
        return vec![None; v.len()];
    }
    let lo = defined.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = defined.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    v.iter()
        .map(|x| {
            x.map(|x| {
                if hi > lo {
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Cross-validates every trainer on every dataset. All (dataset, trainer, fold)
/// tasks run in parallel; results are assembled in input order.
pub fn compare_trainers(
    datasets: &[Dataset],
    trainers: &[TrainerId],
    cfg: &HarnessConfig,
    k: usize,
    seed: u64,
) -> Result<ComparisonTable> {
    if datasets.is_empty() {
        return Err(Error::Usage("comparison needs at least one dataset".into()));
    }
    if trainers.len() < 2 {
        return Err(Error::Usage("comparison needs at least two trainers".into()));
    }
    let mut plans = Vec::with_capacity(datasets.len());
    for d in datasets {
        check_complete(d)?;
        plans.push(kfold_split(d.len(), k, seed)?);
    }
    let tasks: Vec<(usize, usize, usize)> = (0..datasets.len())
        .flat_map(|di| (0..trainers.len()).flat_map(move |ti| (0..k).map(move |f| (di, ti, f))))
        .collect();
    let results: Vec<FoldResult> = tasks
        .par_iter()
        .map(|&(di, ti, f)| run_fold(&datasets[di], &plans[di], f, trainers[ti], cfg))
        .collect();

    let mut results = results.into_iter();
    let mut rows = Vec::with_capacity(datasets.len());
    for d in datasets {
        let cells: Vec<CvResult> = trainers
            .iter()
            .map(|&tr| {
                let folds: Vec<FoldResult> = results.by_ref().take(k).collect();
                CvResult::aggregate(&d.name, tr, k, seed, folds)
            })
            .collect();
        let means: Vec<Option<f64>> = cells.iter().map(|c| c.mape_mean).collect();
        rows.push(DatasetRow {
            dataset: d.name.clone(),
            n_samples: d.len(),
            n_features: d.n_features(),
            normalized: normalize_row(&means),
            cells,
        });
    }

    let median_normalized = (0..trainers.len())
        .map(|ti| {
            let v: Vec<f64> = rows.iter().filter_map(|r| r.normalized[ti]).collect();
            (!v.is_empty()).then(|| median(&v))
        })
        .collect();

    let timing = trainers
        .iter()
        .enumerate()
        .map(|(ti, &tr)| {
            let times: Vec<f64> = rows
                .iter()
                .flat_map(|r| r.cells[ti].folds.iter().map(|f| f.wall_time))
                .collect();
            TimingSummary {
                trainer: tr,
                mean_fold_seconds: mean(&times),
                median_fold_seconds: median(&times),
                total_seconds: times.iter().sum(),
            }
        })
        .collect();

    let mut wilcoxon = Vec::new();
    for a in 0..trainers.len() {
        for b in a + 1..trainers.len() {
            wilcoxon.push(pairwise_test(&rows, trainers, a, b));
        }
    }

    Ok(ComparisonTable {
        trainers: trainers.to_vec(),
        k,
        seed,
        rows,
        median_normalized,
        timing,
        wilcoxon,
    })
}

fn pairwise_test(rows: &[DatasetRow], trainers: &[TrainerId], a: usize, b: usize) -> PairwiseTest {
    let (xa, xb): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| Some((r.cells[a].mape_mean?, r.cells[b].mape_mean?)))
        .unzip();
    let mut out = PairwiseTest {
        a: trainers[a],
        b: trainers[b],
        n_pairs: xa.len(),
        w: None,
        w_plus: None,
        w_minus: None,
        p_two_sided: None,
        exact: None,
        degenerate: None,
        note: None,
    };
    match wilcoxon_signed_rank(&xa, &xb) {
        Ok(r) => {
            out.w = Some(r.w);
            out.w_plus = Some(r.w_plus);
            out.w_minus = Some(r.w_minus);
            out.p_two_sided = Some(r.p_two_sided);
            out.exact = Some(r.exact);
            out.degenerate = Some(r.degenerate);
        }
        Err(e) => out.note = Some(e.to_string()),
    }
    out
}
