use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lder::csv_io::{load_csv, write_csv, TargetColumn};
use lder::harness::{self, evaluate, fit, HarnessConfig, TrainerId};
use lder::manifest::Manifest;
use lder::model_io::{load_model, save_model};
use lder::qp_dump::dump_qp;
use lder::report::{self, BenchReport, CvReport, Versions};
use lder::{Error, Result};
use lder_core::{impute_mean, synth_pwl, Dataset, ModelDims, QpProblem};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lder", version, about = "Linear dilation-erosion regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model on a whole dataset.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Eval(EvalArgs),
    /// k-fold cross-validation of one trainer.
    Cv(CvArgs),
    /// Cross-validate every trainer on every dataset of a manifest.
    Bench(BenchArgs),
    /// Run the built-in invariant checks.
    Selftest(SelftestArgs),
    /// Write a synthetic piecewise-linear dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Target column name; defaults to the last column.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Args)]
struct ModelArgs {
    /// JSON file with harness settings; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    r1: Option<usize>,
    #[arg(long)]
    r2: Option<usize>,
    /// Train on raw features.
    #[arg(long)]
    no_standardize: bool,
    /// Train on raw targets.
    #[arg(long)]
    no_scale_targets: bool,
    #[arg(long = "sgd.lr")]
    sgd_lr: Option<f64>,
    #[arg(long = "sgd.epochs")]
    sgd_epochs: Option<usize>,
    #[arg(long = "sgd.batch")]
    sgd_batch: Option<usize>,
    #[arg(long = "sgd.momentum")]
    sgd_momentum: Option<f64>,
    #[arg(long = "sgd.decay")]
    sgd_decay: Option<bool>,
    #[arg(long = "dca.epsilon")]
    dca_epsilon: Option<f64>,
    #[arg(long = "dca.max-outer")]
    dca_max_outer: Option<usize>,
    #[arg(long = "dca.prox")]
    dca_prox: Option<f64>,
    #[arg(long = "dccp.t0")]
    dccp_t0: Option<f64>,
    #[arg(long = "dccp.mu")]
    dccp_mu: Option<f64>,
    #[arg(long = "dccp.t-max")]
    dccp_t_max: Option<f64>,
    #[arg(long = "dccp.max-outer")]
    dccp_max_outer: Option<usize>,
    #[arg(long = "dccp.slack-tol")]
    dccp_slack_tol: Option<f64>,
    #[arg(long = "dccp.prox")]
    dccp_prox: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl ModelArgs {
    fn build(&self) -> Result<HarnessConfig> {
        let mut c = match &self.config {
            Some(p) => {
                let s = std::fs::read_to_string(p).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&s)?
            }
            None => HarnessConfig::default(),
        };
        set(&mut c.r1, self.r1);
        set(&mut c.r2, self.r2);
        if self.no_standardize {
            c.standardize = false;
        }
        if self.no_scale_targets {
            c.scale_targets = false;
        }
        set(&mut c.sgd.learning_rate, self.sgd_lr);
        set(&mut c.sgd.epochs, self.sgd_epochs);
        set(&mut c.sgd.batch_size, self.sgd_batch);
        set(&mut c.sgd.momentum, self.sgd_momentum);
        set(&mut c.sgd.decay, self.sgd_decay);
        set(&mut c.dca.epsilon, self.dca_epsilon);
        set(&mut c.dca.max_outer, self.dca_max_outer);
        set(&mut c.dca.prox, self.dca_prox);
        set(&mut c.dccp.t0, self.dccp_t0);
        set(&mut c.dccp.mu, self.dccp_mu);
        set(&mut c.dccp.t_max, self.dccp_t_max);
        set(&mut c.dccp.max_outer, self.dccp_max_outer);
        set(&mut c.dccp.slack_tol, self.dccp_slack_tol);
        set(&mut c.dccp.prox, self.dccp_prox);
        if c.r1 == 0 || c.r2 == 0 {
            return Err(Error::Usage("--r1 and --r2 must be positive".into()));
        }
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "dccp")]
    trainer: TrainerId,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for model.json and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Also write every QP subproblem as JSON into this directory.
    #[arg(long)]
    dump_qp: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "dccp")]
    trainer: TrainerId,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON list of {"path", "target_column", "name"} entries.
    #[arg(long)]
    manifest: PathBuf,
    /// Comma-separated trainer list.
    #[arg(long, value_delimiter = ',', default_value = "sgd,dca,dccp")]
    trainers: Vec<TrainerId>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Pieces of the ground-truth first branch.
    #[arg(long, default_value_t = 2)]
    truth_r1: usize,
    /// Pieces of the ground-truth second branch.
    #[arg(long, default_value_t = 2)]
    truth_r2: usize,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Constant added to every target.
    #[arg(long, default_value_t = 0.0)]
    offset: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load(d: &DataArgs) -> Result<Dataset> {
    let raw = load_csv(&d.data, &TargetColumn::from_option(d.target.as_deref()))?;
    Ok(impute_mean(&raw)?)
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::Format(format!("cannot create {}: {e}", p.display())))
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let d = load(&a.data)?;
    let cfg = a.model.build()?;
    create_dir(&a.out)?;
    if let Some(dir) = &a.dump_qp {
        create_dir(dir)?;
    }
    let mut dump_err: Option<Error> = None;
    let mut dumper = |k: usize, q: &QpProblem| {
        if let Some(dir) = &a.dump_qp {
            if dump_err.is_none() {
                if let Err(e) = dump_qp(dir.join(format!("qp_{k:04}.json")), q) {
                    dump_err = Some(e);
                }
            }
        }
    };
    let fitted = fit(a.trainer, &d.x, &d.y, &cfg, a.seed, Some(&mut dumper))?;
    if let Some(e) = dump_err {
        return Err(e);
    }
    save_model(a.out.join("model.json"), &fitted.model)?;
    let scores = evaluate(&fitted.model, &d.x, &d.y)?;
    let r = &fitted.report;
    let rep = json!({
        "command": "train",
        "versions": Versions::default(),
        "dataset": d.name,
        "trainer": a.trainer,
        "seed": a.seed,
        "config": cfg,
        "train_scores": scores,
        "iterations": r.iterations,
        "termination": r.termination.as_str(),
        "loss_trace": r.loss_trace,
        "penalty_trace": r.penalty_trace,
        "slack_trace": r.slack_trace,
        "equality_residual": r.equality_residual,
        "qp_iterations": r.qp_iterations,
        "wall_time": r.wall_time,
    });
    report::write_json(&a.out.join("report.json"), &rep)?;
    print_json(&json!({
        "model": a.out.join("model.json"),
        "train_mse": scores.mse,
        "train_mape": scores.mape,
        "iterations": r.iterations,
        "termination": r.termination.as_str(),
    }))
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let d = load(&a.data)?;
    if d.n_features() != model.dims().n {
        return Err(Error::Usage(format!(
            "model expects {} features, dataset has {}",
            model.dims().n,
            d.n_features()
        )));
    }
    let s = evaluate(&model, &d.x, &d.y)?;
    print_json(&json!({ "dataset": d.name, "n_samples": d.len(), "mse": s.mse, "mape": s.mape }))
}

fn cmd_cv(a: CvArgs) -> Result<()> {
    let d = load(&a.data)?;
    let cfg = a.model.build()?;
    let result = harness::run_cv(&d, a.trainer, &cfg, a.folds, a.seed)?;
    print!("{}", report::format_cv(&result));
    if let Some(out) = &a.out {
        create_dir(out)?;
        let rep = CvReport {
            command: "cv".into(),
            versions: Versions::default(),
            config: cfg,
            result,
        };
        report::write_json(&out.join("cv.json"), &rep)?;
        println!("fingerprint {}", report::fingerprint(&rep)?);
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let manifest = Manifest::load(&a.manifest)?;
    let datasets = manifest.load_datasets()?;
    let cfg = a.model.build()?;
    let table = harness::compare_trainers(&datasets, &a.trainers, &cfg, a.folds, a.seed)?;
    let rep = BenchReport {
        command: "bench".into(),
        versions: Versions::default(),
        config: cfg,
        table,
    };
    create_dir(&a.out)?;
    let fp = report::fingerprint(&rep)?;
    let text = report::format_table(&rep.table);
    report::write_json(&a.out.join("report.json"), &rep)?;
    report::write_records(&a.out.join("table1.csv"), &report::table1_records(&rep.table))?;
    report::write_records(&a.out.join("normalized.csv"), &report::normalized_records(&rep.table))?;
    report::write_text(&a.out.join("table.txt"), &text)?;
    report::write_text(&a.out.join("fingerprint.txt"), &format!("{fp}\n"))?;
    print!("{text}");
    println!("fingerprint {fp}");
    Ok(())
}

fn cmd_selftest(a: SelftestArgs) -> Result<bool> {
    let checks = lder::selftest::run(a.seed);
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let dims = ModelDims::new(a.n, a.truth_r1, a.truth_r2)?;
    let (t, _) = synth_pwl(dims, a.m, a.noise, a.seed)?;
    let y: Vec<f64> = t.y().iter().map(|v| v + a.offset).collect();
    let names = (0..a.n).map(|i| format!("x{}", i + 1)).collect();
    let name = a.out.file_stem().map_or("synth".into(), |s| s.to_string_lossy().into_owned());
    let d = Dataset::new(name, t.x().clone(), y, names)?;
    write_csv(&a.out, &d, "y")
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Eval(a) => cmd_eval(a).map(|_| true),
        Command::Cv(a) => cmd_cv(a).map(|_| true),
        Command::Bench(a) => cmd_bench(a).map(|_| true),
        Command::Selftest(a) => cmd_selftest(a),
        Command::Synth(a) => cmd_synth(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", Error::Usage(e.render().to_string().trim().to_string()).to_json());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
