//! Batch commands behind the `objdisc` binary.
//!
//! Every command is a plain function over its argument struct, so tests can
//! call them in-process. Relative input paths resolve against the data
//! directory (`--data-dir`, or `OBJDISC_DATA_DIR`); outputs land in the given
//! output directory next to a `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use objdisc_core::dataset::{
    make_split, read_candidates, read_ground_truth, synth_generate, validate_candidates_file,
    validate_ground_truth_file, write_candidates, write_ground_truth, Dataset, MatchConfig, SynthConfig,
    ValidationSummary,
};
use objdisc_core::engine::{read_history_jsonl, write_history_jsonl};
use objdisc_core::evaluation::{
    detection_metrics, discovery_report, label_report, write_report_csv, AggregateReport, TruthTable, DEFAULT_TOP_W,
};
use objdisc_core::experiment::{
    run_experiment, train_filter, ExperimentConfig, FilterTraining, RunOutput, Setting,
};
use objdisc_core::svm::{GridSearchConfig, ModelFile, SvmModel, DEFAULT_TOL};
use serde::Serialize;
use serde_json::json;

pub const DATA_DIR_ENV: &str = "OBJDISC_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "objdisc", version, about = "Semi-supervised object discovery over object candidates")]
pub struct Cli {
    /// Base directory for relative input paths.
    #[arg(long, global = true, env = DATA_DIR_ENV)]
    pub data_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check candidate and ground-truth files; exit code 0 iff clean.
    Validate(ValidateArgs),
    /// Generate a planted-class synthetic dataset.
    Synth(SynthArgs),
    /// Split annotated candidates into refill bag and unlabeled pool.
    Split(SplitArgs),
    /// Train the object / no-object filter with cross-validated grid search.
    TrainFilter(TrainFilterArgs),
    /// Run seeded discovery sessions with the majority-vote oracle.
    Run(RunArgs),
    /// Compare candidate files by no-object share and detection rate.
    BenchDetections(BenchArgs),
    /// Recompute a report from a history log.
    Report(ReportArgs),
    /// Serve the HTTP session API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    pub candidates: PathBuf,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// JSON generator configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub n_classes: Option<usize>,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub no_object_fraction: Option<f64>,
    #[arg(long)]
    pub scene_dim: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0.4)]
    pub refill_frac: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFilterArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated σ grid.
    #[arg(long, value_delimiter = ',')]
    pub sigma_grid: Option<Vec<f64>>,
    /// Comma-separated C grid.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    pub outer_folds: usize,
    #[arg(long, default_value_t = 5)]
    pub inner_folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on object features concatenated with scene features.
    #[arg(long)]
    pub scene: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "S3")]
    pub setting: Setting,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON experiment configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pretrained filter for S5/S6.
    #[arg(long)]
    pub filter_model: Option<PathBuf>,
    /// Grid-search the filter per run instead of the fixed parameters.
    #[arg(long)]
    pub filter_grid: bool,
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub refill_frac: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// One candidate file per detector.
    #[arg(required = true)]
    pub candidates: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_TOP_W)]
    pub top_w: usize,
    /// Keep every candidate instead of the per-image top W.
    #[arg(long, conflicts_with = "top_w")]
    pub all: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub history: PathBuf,
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Ids of the evaluated pool, one JSON split file; defaults to every candidate.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
}

/// Resolves relative paths against the data directory.
#[derive(Debug, Clone, Default)]
pub struct Paths {
    pub data_dir: Option<PathBuf>,
}

impl Paths {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.data_dir {
            Some(d) if p.is_relative() => d.join(p),
            _ => p.to_path_buf(),
        }
    }
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn manifest(out: &Path, command: &str, body: serde_json::Value, files: &[&str]) -> Result<()> {
    let doc = json!({
        "tool": "objdisc",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "parameters": body,
        "files": files,
    });
    write_json(&out.join("manifest.json"), &doc)
}

fn load_dataset(paths: &Paths, candidates: &Path, gt: Option<&Path>) -> Result<Dataset> {
    let c = paths.resolve(candidates);
    let g = gt.map(|g| paths.resolve(g));
    Dataset::load(&c, g.as_deref(), &MatchConfig::default())
        .with_context(|| format!("loading {}", c.display()))
}

/// Validation summaries for the given files; the first is the candidate file.
pub fn cmd_validate(paths: &Paths, args: &ValidateArgs) -> Result<Vec<ValidationSummary>> {
    let mut out = vec![validate_candidates_file(paths.resolve(&args.candidates))?];
    if let Some(gt) = &args.ground_truth {
        out.push(validate_ground_truth_file(paths.resolve(gt))?);
    }
    Ok(out)
}

pub fn cmd_synth(paths: &Paths, args: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => read_json(&paths.resolve(p))?,
        None => SynthConfig::default(),
    };
    if let Some(v) = args.n_classes {
        cfg.n_classes = v;
    }
    if let Some(v) = args.samples_per_class {
        cfg.samples_per_class = v;
    }
    if let Some(v) = args.dim {
        cfg.dim = v;
    }
    if let Some(v) = args.no_object_fraction {
        cfg.no_object_fraction = v;
    }
    if let Some(v) = args.scene_dim {
        cfg.scene_dim = v;
    }
    let (cands, gts) = synth_generate(&cfg, args.seed)?;
    fs::create_dir_all(&args.out)?;
    write_candidates(args.out.join("candidates.jsonl"), &cands)?;
    write_ground_truth(args.out.join("ground_truth.jsonl"), &gts)?;
    manifest(
        &args.out,
        "synth",
        json!({ "seed": args.seed, "config": cfg }),
        &["candidates.jsonl", "ground_truth.jsonl"],
    )
}

pub fn cmd_split(paths: &Paths, args: &SplitArgs) -> Result<()> {
    let ds = load_dataset(paths, &args.candidates, Some(&args.ground_truth))?;
    let split = make_split(ds.candidates(), args.holdout, args.refill_frac, args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    split.write(&args.out)?;
    Ok(())
}

pub fn cmd_train_filter(paths: &Paths, args: &TrainFilterArgs) -> Result<f64> {
    let ds = load_dataset(paths, &args.candidates, Some(&args.ground_truth))?;
    let defaults = GridSearchConfig::default();
    let grid = GridSearchConfig {
        sigma_grid: args.sigma_grid.clone().unwrap_or(defaults.sigma_grid),
        c_grid: args.c_grid.clone().unwrap_or(defaults.c_grid),
        outer_folds: args.outer_folds,
        inner_folds: args.inner_folds,
        seed: args.seed,
        tol: DEFAULT_TOL,
    };
    let ids: Vec<&str> = ds.candidates().iter().map(|c| c.id.as_str()).collect();
    let (model, record) = train_filter(&ds, &ids, args.scene, &FilterTraining::GridSearch(grid.clone()))?;
    let res = record.grid.as_ref().expect("grid search record");
    fs::create_dir_all(&args.out)?;
    ModelFile::new(SvmModel::Binary(model)).write(args.out.join("model.json"))?;

    let mut w = csv::Writer::from_path(args.out.join("cv.csv"))?;
    w.write_record(["outer_fold", "sigma", "c", "inner_score", "selected", "test_score"])?;
    for f in &res.outer {
        for cell in &f.inner_scores {
            let selected = cell.sigma == f.best_sigma && cell.c == f.best_c;
            w.write_record([
                f.fold.to_string(),
                cell.sigma.to_string(),
                cell.c.to_string(),
                cell.score.to_string(),
                selected.to_string(),
                if selected { f.test_score.to_string() } else { String::new() },
            ])?;
        }
    }
    w.flush()?;
    write_json(&args.out.join("cv.json"), res)?;
    manifest(
        &args.out,
        "train-filter",
        json!({
            "candidates": args.candidates,
            "ground_truth": args.ground_truth,
            "scene": args.scene,
            "grid": grid,
            "n_positive": record.n_positive,
            "n_negative": record.n_negative,
            "best_sigma": res.best_sigma,
            "best_c": res.best_c,
            "cv_score": res.cv_score,
        }),
        &["model.json", "cv.csv", "cv.json"],
    )?;
    Ok(res.cv_score)
}

fn write_run(dir: &Path, run: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_history_jsonl(&run.state.history, dir.join("history.jsonl"))?;
    objdisc_core::engine::Checkpoint::new(run.state.clone()).write(dir.join("checkpoint.json"))?;
    write_json(&dir.join("report.json"), &run.report)?;
    write_report_csv(&run.report, dir)?;
    run.split.write(dir.join("split.json"))?;
    write_json(
        &dir.join("run.json"),
        &json!({
            "run_id": run.run_id,
            "seeds": run.seeds,
            "filter_training": run.filter_training,
            "filter": run.state.filter.as_ref().map(|f| json!({
                "sigma": f.sigma, "c": f.c, "n_input": f.n_input, "n_kept": f.n_kept,
            })),
            "pool_no_fraction_initial": run.pool_no_fraction_initial,
            "pool_no_fraction_filtered": run.pool_no_fraction_filtered,
        }),
    )
}

fn write_aggregate_curve(path: &Path, agg: &AggregateReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "f_mean", "f_std", "runs"])?;
    for (i, s) in agg.iteration_curve.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.values.len().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The experiment configuration `args` describes.
pub fn run_config(paths: &Paths, args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = match &args.config {
        Some(p) => read_json(&paths.resolve(p))?,
        None => ExperimentConfig::default(),
    };
    cfg.setting = args.setting;
    cfg.runs = args.runs;
    cfg.seed = args.seed;
    if let Some(v) = args.holdout {
        cfg.class_holdout_frac = v;
    }
    if let Some(v) = args.refill_frac {
        cfg.refill_frac = v;
    }
    if let Some(v) = args.max_iterations {
        cfg.engine.max_iterations = v;
    }
    if let Some(p) = &args.filter_model {
        let file = ModelFile::read(paths.resolve(p))?;
        let model = file.binary().cloned().context("filter model must be a binary SVM")?;
        cfg.filter = FilterTraining::Pretrained(model);
    } else if args.filter_grid {
        cfg.filter = FilterTraining::GridSearch(GridSearchConfig::default());
    }
    Ok(cfg)
}

pub fn cmd_run(paths: &Paths, args: &RunArgs) -> Result<AggregateReport> {
    let cfg = run_config(paths, args)?;
    let ds = load_dataset(paths, &args.candidates, Some(&args.ground_truth))?;
    if ds.ground_truth().is_empty() {
        bail!("run needs ground truth for the simulated oracle");
    }
    let out = run_experiment(&Arc::new(ds), &cfg)?;
    fs::create_dir_all(args.out.join("runs"))?;
    let mut files = vec!["aggregate.json".to_string(), "aggregate_curve.csv".to_string()];
    for run in &out.runs {
        write_run(&args.out.join("runs").join(&run.run_id), run)?;
        files.push(format!("runs/{}/", run.run_id));
    }
    write_json(&args.out.join("aggregate.json"), &out.aggregate)?;
    write_aggregate_curve(&args.out.join("aggregate_curve.csv"), &out.aggregate)?;
    let files: Vec<&str> = files.iter().map(String::as_str).collect();
    manifest(
        &args.out,
        "run",
        json!({
            "candidates": args.candidates,
            "ground_truth": args.ground_truth,
            "filter_model": args.filter_model,
            "config": out.config,
        }),
        &files,
    )?;
    Ok(out.aggregate)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub detector: String,
    pub top_w: Option<usize>,
    pub n_candidates: usize,
    pub n_gt: usize,
    pub no_pct: Option<f64>,
    pub dr: Option<f64>,
}

pub fn cmd_bench_detections(paths: &Paths, args: &BenchArgs) -> Result<Vec<BenchRow>> {
    let gt_path = paths.resolve(&args.ground_truth);
    if !gt_path.is_file() {
        bail!("ground truth {} does not exist", gt_path.display());
    }
    let gts = read_ground_truth(&gt_path)?;
    let top_w = (!args.all).then_some(args.top_w);
    let mut rows = Vec::new();
    for file in &args.candidates {
        let cands = read_candidates(paths.resolve(file))?;
        let r = detection_metrics(&cands, &gts, &MatchConfig::default(), top_w)?;
        let detector = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| file.display().to_string());
        rows.push(BenchRow {
            detector,
            top_w: r.top_w,
            n_candidates: r.n_candidates,
            n_gt: r.n_gt,
            no_pct: r.no_pct,
            dr: r.dr,
        });
    }
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record(["detector", "top_w", "n_candidates", "n_gt", "no_pct", "dr"])?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.detector.clone(),
            r.top_w.map(|w| w.to_string()).unwrap_or_else(|| "all".into()),
            r.n_candidates.to_string(),
            r.n_gt.to_string(),
            opt(r.no_pct),
            opt(r.dr),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

pub fn cmd_report(paths: &Paths, args: &ReportArgs) -> Result<()> {
    let history = read_history_jsonl(paths.resolve(&args.history))?;
    let ds = load_dataset(paths, &args.candidates, args.ground_truth.as_deref())?;
    let report = if args.ground_truth.is_some() {
        let universe: Vec<String> = match &args.split {
            Some(p) => objdisc_core::dataset::DatasetSplit::read(paths.resolve(p))?.unlabeled_pool_ids,
            None => ds.candidates().iter().map(|c| c.id.clone()).collect(),
        };
        let truth = TruthTable::from_dataset(&ds, &universe, &MatchConfig::default())?;
        discovery_report(&history, &truth)?
    } else {
        label_report(&history)?
    };
    fs::create_dir_all(&args.out)?;
    write_json(&args.out.join("report.json"), &report)?;
    write_report_csv(&report, &args.out)?;
    manifest(
        &args.out,
        "report",
        json!({
            "history": args.history,
            "candidates": args.candidates,
            "ground_truth": args.ground_truth,
            "split": args.split,
        }),
        &["report.json", "per_class.csv", "iterations.csv"],
    )
}

pub fn cmd_serve(paths: &Paths, args: &ServeArgs) -> Result<()> {
    let dir = paths.data_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(objdisc_service::serve(args.addr, &dir))?;
    Ok(())
}

/// Execute a parsed command line; returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    let paths = Paths {
        data_dir: cli.data_dir,
    };
    match cli.command {
        Command::Validate(a) => {
            let summaries = cmd_validate(&paths, &a)?;
            let mut clean = true;
            for s in &summaries {
                for d in &s.diagnostics {
                    eprintln!("{}:{d}", s.path.display());
                }
                clean &= s.is_clean();
            }
            println!("{}", serde_json::to_string_pretty(&summaries)?);
            Ok(if clean { 0 } else { 1 })
        }
        Command::Synth(a) => cmd_synth(&paths, &a).map(|_| 0),
        Command::Split(a) => cmd_split(&paths, &a).map(|_| 0),
        Command::TrainFilter(a) => {
            let score = cmd_train_filter(&paths, &a)?;
            println!("cv balanced accuracy {score:.4}");
            Ok(0)
        }
        Command::Run(a) => {
            let agg = cmd_run(&paths, &a)?;
            println!(
                "{} runs: F {:.4} ± {:.4}, P {:.4}, R {:.4}, classes {:.1}",
                agg.runs.len(),
                agg.f_measure.mean,
                agg.f_measure.std,
                agg.precision_m.mean,
                agg.recall_m.mean,
                agg.classes_discovered.mean
            );
            Ok(0)
        }
        Command::BenchDetections(a) => {
            for r in cmd_bench_detections(&paths, &a)? {
                println!("{}", serde_json::to_string(&r)?);
            }
            Ok(0)
        }
        Command::Report(a) => cmd_report(&paths, &a).map(|_| 0),
        Command::Serve(a) => cmd_serve(&paths, &a).map(|_| 0),
    }
}

impl Default for RunArgs {
    fn default() -> Self {
        RunArgs {
            candidates: PathBuf::new(),
            ground_truth: PathBuf::new(),
            out: PathBuf::new(),
            setting: Setting::S3,
            runs: 5,
            seed: 0,
            config: None,
            filter_model: None,
            filter_grid: false,
            holdout: None,
            refill_frac: None,
            max_iterations: None,
        }
    }
}

