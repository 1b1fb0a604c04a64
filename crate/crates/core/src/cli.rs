//! The `cockit` command line.
//!
//! Exit codes: 0 success, 1 input error, 2 usage error, 3 a checked
//! property did not hold.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{temperature_scale, CalibrationPercent, CalibrationReport, CalibrationResult, DEFAULT_BINS};
use crate::coc::{empirical_curve, toy_comparison, ToyModelSummary};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_predictions, TauAtAccuracy};
use crate::loss::{grad_check, near_tie_batch, random_batch, GRAD_CHECK_ABS_FLOOR, GRAD_CHECK_REL_TOL};
use crate::ood::{auroc, score_set, ScoreKind};
use crate::predictions::{load_predictions, LoadedPredictions};
use crate::trainer::train::{compare, run_seed, write_history_csv, SeedRun, ACCURACY_MARGIN, AUCOC_MARGIN};
use crate::trainer::TrainConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ASSERTION: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cockit", version, about = "COC curves, AUCOC, calibration and OOD metrics for prediction files")]
pub struct Cli {
    /// Seed for every stochastic step. Defaults to 0, or to the config seed for train-demo.
    #[arg(long, global = true, env = "COCKIT_SEED")]
    pub seed: Option<u64>,

    /// Human-readable text instead of JSON.
    #[arg(long, global = true)]
    pub pretty: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Accuracy, AUCOC, tau at accuracy targets and calibration for prediction files.
    Report(ReportArgs),
    /// AUROC between an in-distribution and an out-of-distribution file.
    Ood(OodArgs),
    /// The five-sample two-model ranking example.
    Toy,
    /// Compare the analytic AUCOC-loss gradient with finite differences.
    GradCheck(GradCheckArgs),
    /// Train the synthetic-data MLP and write history, metrics and predictions.
    TrainDemo(TrainDemoArgs),
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Prediction files (JSONL or CSV).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Inputs hold logits (for CSV; JSONL files declare it by key).
    #[arg(long)]
    pub logits: bool,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.9, 0.95])]
    pub acc_targets: Vec<f64>,
    /// Fit a temperature on --val-input and report calibration after applying it.
    #[arg(long, requires = "val_input")]
    pub temperature_scale: bool,
    #[arg(long)]
    pub val_input: Option<PathBuf>,
    /// Write the empirical COC curve as CSV (single input only).
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    /// Add an OOD block with this file as the out-of-distribution set.
    #[arg(long)]
    pub ood_input: Option<PathBuf>,
    /// Worker threads for several inputs; output order follows the inputs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct OodArgs {
    pub id_input: PathBuf,
    pub ood_input: PathBuf,
    /// Score kinds; default is every kind the files support.
    #[arg(long = "score", value_enum)]
    pub scores: Vec<ScoreKind>,
    /// Temperature for energy and odin_t.
    #[arg(long = "T", default_value_t = 1.0)]
    pub temperature: f64,
    /// Inputs hold logits (for CSV; JSONL files declare it by key).
    #[arg(long)]
    pub logits: bool,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Also check the near-tie fixture.
    #[arg(long)]
    pub near_tie: bool,
}

#[derive(Debug, Args)]
pub struct TrainDemoArgs {
    /// TOML training configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "train-demo-out")]
    pub out_dir: PathBuf,
    /// Number of consecutive seeds starting at the base seed.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// Also train the lambda = 0 twin and check the AUCOC/accuracy margins.
    #[arg(long)]
    pub compare: bool,
}

/// Parse `args`, run, and return the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = sink.write_all(text.as_bytes());
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(Outcome { text, code }) => {
            let _ = out.write_all(text.as_bytes());
            code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::FormatConflict(_) => EXIT_USAGE,
        _ => EXIT_INPUT,
    }
}

struct Outcome {
    text: String,
    code: i32,
}

impl Outcome {
    fn ok(text: String) -> Self {
        Self { text, code: EXIT_OK }
    }

    fn checked(text: String, holds: bool) -> Self {
        Self {
            text,
            code: if holds { EXIT_OK } else { EXIT_ASSERTION },
        }
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Report(args) => cmd_report(cli, args),
        Command::Ood(args) => cmd_ood(cli, args),
        Command::Toy => Ok(cmd_toy()),
        Command::GradCheck(args) => cmd_grad_check(cli, args),
        Command::TrainDemo(args) => cmd_train_demo(cli, args),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn check_finite(report: &impl Serialize) -> Result<()> {
    fn walk(v: &serde_json::Value) -> bool {
        match v {
            // serde_json writes non-finite floats as null; a null float is
            // only legitimate where the field is optional, so probe numbers
            serde_json::Value::Number(n) => n.as_f64().is_some_and(f64::is_finite),
            serde_json::Value::Array(a) => a.iter().all(walk),
            serde_json::Value::Object(o) => o.values().all(walk),
            _ => true,
        }
    }
    if walk(&serde_json::to_value(report)?) {
        Ok(())
    } else {
        Err(Error::invalid("report contains a non-finite value"))
    }
}

// ---- report ----

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub n: usize,
    pub k: usize,
    pub logits: bool,
}

impl InputDigest {
    fn of(loaded: &LoadedPredictions) -> Self {
        Self {
            path: loaded.path.display().to_string(),
            n: loaded.rows,
            k: loaded.num_classes,
            logits: loaded.set.has_logits(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationBlock {
    #[serde(flatten)]
    pub metrics: CalibrationReport,
    pub percent: CalibrationPercent,
}

impl From<CalibrationReport> for CalibrationBlock {
    fn from(metrics: CalibrationReport) -> Self {
        Self {
            percent: metrics.percent(),
            metrics,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationPair {
    pub pre: CalibrationBlock,
    /// After temperature scaling; present only with --temperature-scale.
    pub post: Option<CalibrationBlock>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TemperatureBlock {
    pub val_input: String,
    #[serde(flatten)]
    pub fit: CalibrationResult,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScoreAuroc {
    pub score: ScoreKind,
    pub auroc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OodBlock {
    pub id: InputDigest,
    pub ood: InputDigest,
    pub temperature: f64,
    pub auroc: Vec<ScoreAuroc>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: &'static str,
    pub seed: u64,
    pub input: InputDigest,
    pub accuracy: f64,
    pub aucoc_empirical: f64,
    pub aucoc_kde: f64,
    pub bandwidth: f64,
    pub tau_at_accuracy: Vec<TauAtAccuracy>,
    pub calibration: CalibrationPair,
    pub temperature: Option<TemperatureBlock>,
    pub ood: Option<OodBlock>,
}

fn seed_of(cli: &Cli) -> u64 {
    cli.seed.unwrap_or(0)
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Result<Outcome> {
    if args.inputs.len() > 1 && args.curve_out.is_some() {
        return Err(Error::FormatConflict("--curve-out takes a single input".into()));
    }
    if args.bins == 0 {
        return Err(Error::FormatConflict("--bins must be at least 1".into()));
    }
    if args.jobs == 0 {
        return Err(Error::FormatConflict("--jobs must be at least 1".into()));
    }
    if let Some(t) = args.acc_targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::FormatConflict(format!("accuracy target {t} is outside [0, 1]")));
    }
    let seed = seed_of(cli);
    let reports: Vec<Result<Report>> = if args.jobs > 1 && args.inputs.len() > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(args.jobs)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| args.inputs.par_iter().map(|p| build_report(p, args, seed)).collect())
    } else {
        args.inputs.iter().map(|p| build_report(p, args, seed)).collect()
    };
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let text = if cli.pretty {
        reports.iter().map(render_report).collect::<Vec<_>>().join("\n")
    } else if reports.len() == 1 {
        to_json(&reports[0])?
    } else {
        to_json(&reports)?
    };
    Ok(Outcome::ok(text))
}

/// Report for one prediction file.
pub fn build_report(path: &Path, args: &ReportArgs, seed: u64) -> Result<Report> {
    let loaded = load_predictions(path, None, args.logits)?;
    let preds = &loaded.set;
    let eval = evaluate_predictions(preds, args.bins, &args.acc_targets)?;
    if let Some(out) = &args.curve_out {
        let curve = empirical_curve(&preds.records())?;
        let file = fs::File::create(out).map_err(|e| Error::io(out, e))?;
        curve.write_csv(file)?;
    }

    let mut temperature = None;
    let mut post = None;
    if args.temperature_scale {
        let val_path = args.val_input.as_ref().expect("clap enforces --val-input");
        if !preds.has_logits() {
            return Err(Error::FormatConflict(format!(
                "--temperature-scale needs logits, {} holds probabilities",
                path.display()
            )));
        }
        let val = load_predictions(val_path, None, args.logits)?;
        if !val.set.has_logits() {
            return Err(Error::FormatConflict(format!(
                "--temperature-scale needs logits, {} holds probabilities",
                val_path.display()
            )));
        }
        if val.num_classes != loaded.num_classes {
            return Err(Error::invalid(format!(
                "validation file has K = {}, input has K = {}",
                val.num_classes, loaded.num_classes
            )));
        }
        let fit = temperature_scale(&val.set)?;
        let scaled = preds.with_temperature(fit.temperature)?;
        post = Some(CalibrationReport::compute(&scaled, args.bins)?.into());
        temperature = Some(TemperatureBlock {
            val_input: val_path.display().to_string(),
            fit,
        });
    }

    let ood = match &args.ood_input {
        Some(ood_path) => {
            let ood = load_predictions(ood_path, None, args.logits)?;
            Some(ood_block(&loaded, &ood, &[], 1.0)?)
        }
        None => None,
    };

    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        seed,
        input: InputDigest::of(&loaded),
        accuracy: eval.accuracy,
        aucoc_empirical: eval.aucoc_empirical,
        aucoc_kde: eval.aucoc_kde,
        bandwidth: eval.bandwidth,
        tau_at_accuracy: eval.tau_at_accuracy,
        calibration: CalibrationPair {
            pre: eval.calibration.into(),
            post,
        },
        temperature,
        ood,
    };
    check_finite(&report)?;
    Ok(report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.6}"))
}

fn render_calibration(s: &mut String, label: &str, c: &CalibrationBlock) {
    let m = &c.metrics;
    let _ = writeln!(
        s,
        "  {label}: ECE(em) {}  ECE(ew) {:.6}  cwECE {:.6}  KS {:.6}  Brier {:.6}  NLL {:.6}  ({} bins)",
        fmt_opt(m.ece_em),
        m.ece_ew,
        m.cw_ece,
        m.ks,
        m.brier,
        m.nll,
        m.bins
    );
}

fn render_report(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} (N = {}, K = {})", r.input.path, r.input.n, r.input.k);
    let _ = writeln!(s, "  accuracy          {:.6}", r.accuracy);
    let _ = writeln!(s, "  AUCOC (empirical) {:.6}", r.aucoc_empirical);
    let _ = writeln!(s, "  AUCOC (KDE)       {:.6}  (h = {:.6})", r.aucoc_kde, r.bandwidth);
    for t in &r.tau_at_accuracy {
        let _ = writeln!(s, "  tau @ acc {:.4}    {}", t.target, fmt_opt(t.tau));
    }
    render_calibration(&mut s, "calibration", &r.calibration.pre);
    if let (Some(post), Some(t)) = (&r.calibration.post, &r.temperature) {
        let _ = writeln!(s, "  temperature       {:.6} (fit on {})", t.fit.temperature, t.val_input);
        render_calibration(&mut s, "after scaling", post);
    }
    if let Some(o) = &r.ood {
        render_ood(&mut s, o);
    }
    s
}

// ---- ood ----

fn ood_block(id: &LoadedPredictions, ood: &LoadedPredictions, requested: &[ScoreKind], t: f64) -> Result<OodBlock> {
    if id.num_classes != ood.num_classes {
        return Err(Error::invalid(format!(
            "class counts differ: {} has K = {}, {} has K = {}",
            id.path.display(),
            id.num_classes,
            ood.path.display(),
            ood.num_classes
        )));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::FormatConflict(format!("--T must be positive, got {t}")));
    }
    let both_logits = id.set.has_logits() && ood.set.has_logits();
    let kinds: Vec<ScoreKind> = if requested.is_empty() {
        ScoreKind::ALL
            .into_iter()
            .filter(|k| both_logits || !k.needs_logits())
            .collect()
    } else {
        let mut seen = Vec::new();
        for &k in requested {
            if !seen.contains(&k) {
                seen.push(k);
            }
        }
        seen
    };
    let auroc = kinds
        .into_iter()
        .map(|kind| {
            let a = score_set(&id.set, kind, t)?;
            let b = score_set(&ood.set, kind, t)?;
            Ok(ScoreAuroc {
                score: kind,
                auroc: auroc(&a, &b),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OodBlock {
        id: InputDigest::of(id),
        ood: InputDigest::of(ood),
        temperature: t,
        auroc,
    })
}

#[derive(Debug, Serialize)]
struct OodReport {
    schema_version: u32,
    tool_version: &'static str,
    seed: u64,
    #[serde(flatten)]
    block: OodBlock,
}

fn render_ood(s: &mut String, o: &OodBlock) {
    let _ = writeln!(s, "  OOD: {} vs {} (T = {})", o.id.path, o.ood.path, o.temperature);
    for a in &o.auroc {
        let _ = writeln!(s, "    AUROC {:<9} {:.6}", a.score.name(), a.auroc);
    }
}

fn cmd_ood(cli: &Cli, args: &OodArgs) -> Result<Outcome> {
    let id = load_predictions(&args.id_input, None, args.logits)?;
    let ood = load_predictions(&args.ood_input, None, args.logits)?;
    let block = ood_block(&id, &ood, &args.scores, args.temperature)?;
    let text = if cli.pretty {
        let mut s = String::new();
        render_ood(&mut s, &block);
        s
    } else {
        let report = OodReport {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION,
            seed: seed_of(cli),
            block,
        };
        check_finite(&report)?;
        to_json(&report)?
    };
    Ok(Outcome::ok(text))
}

// ---- toy ----

fn cmd_toy() -> Outcome {
    let report = toy_comparison();
    let mut s = String::new();
    let _ = writeln!(s, "confidences: 0.45 0.55 0.65 0.70 0.75");
    let _ = writeln!(s, "model  correct     accuracy  ECE(5 bins)  KS        AUCOC");
    let row = |s: &mut String, m: &ToyModelSummary| {
        let pattern: String = m.records.iter().map(|r| if r.correct { '1' } else { '0' }).collect();
        let _ = writeln!(
            s,
            "{:<6} {:<11} {:<9.4} {:<12.4} {:<9.4} {:.4}",
            m.name, pattern, m.accuracy, m.ece_5bin, m.ks, m.aucoc
        );
    };
    row(&mut s, &report.a);
    row(&mut s, &report.b);
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(s, "{}  equal accuracy ({:.1})", verdict(report.equal_accuracy), report.a.accuracy);
    let _ = writeln!(s, "{}  equal 5-bin ECE", verdict(report.equal_ece));
    let _ = writeln!(s, "{}  AUCOC(A) > AUCOC(B)", verdict(report.a_beats_b));
    Outcome::checked(s, report.holds())
}

// ---- grad-check ----

#[derive(Debug, Serialize)]
struct GradCheckRow {
    batch: String,
    n: usize,
    worst_error: f64,
    worst_abs: f64,
    passed: bool,
}

#[derive(Debug, Serialize)]
struct GradCheckSummary {
    schema_version: u32,
    tool_version: &'static str,
    seed: u64,
    n: usize,
    k: usize,
    rel_tolerance: f64,
    abs_floor: f64,
    worst_error: f64,
    passed: bool,
    batches: Vec<GradCheckRow>,
}

fn cmd_grad_check(cli: &Cli, args: &GradCheckArgs) -> Result<Outcome> {
    if args.n < 2 {
        return Err(Error::FormatConflict(format!("--n must be at least 2, got {}", args.n)));
    }
    if args.k < 2 {
        return Err(Error::FormatConflict(format!("--k must be at least 2, got {}", args.k)));
    }
    let base = seed_of(cli);
    let mut rows = Vec::new();
    let mut push = |label: String, batch: crate::loss::LossBatch| -> Result<()> {
        let check = grad_check(&batch)?;
        rows.push(GradCheckRow {
            batch: label,
            n: batch.len(),
            worst_error: check.worst_error,
            worst_abs: check.worst_abs,
            passed: check.passes(),
        });
        Ok(())
    };
    for s in 0..args.seeds {
        let seed = base.wrapping_add(s);
        push(format!("seed {seed}"), random_batch(seed, args.n, args.k)?)?;
    }
    if args.near_tie {
        push(format!("near-tie {base}"), near_tie_batch(base, args.n)?)?;
    }
    let worst = rows.iter().map(|r| r.worst_error).fold(0.0, f64::max);
    let passed = rows.iter().all(|r| r.passed);
    let text = if cli.pretty {
        let mut s = String::new();
        for r in &rows {
            let _ = writeln!(
                s,
                "{:<16} N = {:<4} worst scaled error {:.3e}  worst abs {:.3e}  {}",
                r.batch,
                r.n,
                r.worst_error,
                r.worst_abs,
                if r.passed { "PASS" } else { "FAIL" }
            );
        }
        let _ = writeln!(
            s,
            "{}  worst {:.3e} (tolerance: relative {:e}, absolute floor {:e})",
            if passed { "PASS" } else { "FAIL" },
            worst,
            GRAD_CHECK_REL_TOL,
            GRAD_CHECK_ABS_FLOOR
        );
        s
    } else {
        to_json(&GradCheckSummary {
            schema_version: SCHEMA_VERSION,
            tool_version: TOOL_VERSION,
            seed: base,
            n: args.n,
            k: args.k,
            rel_tolerance: GRAD_CHECK_REL_TOL,
            abs_floor: GRAD_CHECK_ABS_FLOOR,
            worst_error: worst,
            passed,
            batches: rows,
        })?
    };
    Ok(Outcome::checked(text, passed))
}

// ---- train-demo ----

#[derive(Debug, Serialize)]
struct RunMetrics<'a> {
    schema_version: u32,
    tool_version: &'static str,
    seed: u64,
    arm: &'a str,
    config: &'a TrainConfig,
    best_epoch: usize,
    test: &'a crate::evaluation::Evaluation,
}

fn write_run(dir: &Path, arm: &str, config: &TrainConfig, run: &SeedRun) -> Result<()> {
    let run_dir = dir.join(arm).join(format!("seed-{}", run.seed));
    fs::create_dir_all(&run_dir).map_err(|e| Error::io(&run_dir, e))?;
    let history = run_dir.join("history.csv");
    let file = fs::File::create(&history).map_err(|e| Error::io(&history, e))?;
    write_history_csv(&run.outcome.history, file)?;
    let metrics_path = run_dir.join("metrics.json");
    let metrics = RunMetrics {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        seed: run.seed,
        arm,
        config: &config.with_seed(run.seed),
        best_epoch: run.outcome.best_epoch,
        test: &run.test,
    };
    fs::write(&metrics_path, to_json(&metrics)?).map_err(|e| Error::io(&metrics_path, e))?;
    run.test_predictions
        .save_jsonl(&run_dir.join("test_predictions.jsonl"), true)
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    best_epoch: usize,
    accuracy: f64,
    aucoc_empirical: f64,
    aucoc_kde: f64,
}

#[derive(Debug, Serialize)]
struct TrainDemoSummary {
    schema_version: u32,
    tool_version: &'static str,
    config: TrainConfig,
    runs: Vec<SeedSummary>,
    comparison: Option<ComparisonSummary>,
}

#[derive(Debug, Serialize)]
struct ComparisonSummary {
    #[serde(flatten)]
    result: crate::trainer::Comparison,
    aucoc_margin: f64,
    accuracy_margin: f64,
    aucoc_holds: bool,
    accuracy_holds: bool,
}

fn load_config(path: Option<&Path>) -> Result<TrainConfig> {
    match path {
        None => Ok(TrainConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            TrainConfig::from_toml_str(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
    }
}

fn cmd_train_demo(cli: &Cli, args: &TrainDemoArgs) -> Result<Outcome> {
    let mut config = load_config(args.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if args.seeds == 0 {
        return Err(Error::FormatConflict("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| config.seed.wrapping_add(i)).collect();
    let out_dir = &args.out_dir;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut runs = Vec::new();
    let comparison = if args.compare {
        let baseline = TrainConfig {
            aucoc_weight: 0.0,
            ..config.clone()
        };
        let result = compare(&config, &seeds, |is_baseline, run| {
            if is_baseline {
                write_run(out_dir, "baseline", &baseline, run)
            } else {
                runs.push(seed_summary(run));
                write_run(out_dir, "aucoc", &config, run)
            }
        })?;
        Some(ComparisonSummary {
            aucoc_holds: result.aucoc_holds(),
            accuracy_holds: result.accuracy_holds(),
            aucoc_margin: AUCOC_MARGIN,
            accuracy_margin: ACCURACY_MARGIN,
            result,
        })
    } else {
        for &seed in &seeds {
            let run = run_seed(&config, seed)?;
            write_run(out_dir, "run", &config, &run)?;
            runs.push(seed_summary(&run));
        }
        None
    };
    let holds = comparison.as_ref().is_none_or(|c| c.aucoc_holds && c.accuracy_holds);
    let summary = TrainDemoSummary {
        schema_version: SCHEMA_VERSION,
        tool_version: TOOL_VERSION,
        config,
        runs,
        comparison,
    };
    let summary_path = out_dir.join("summary.json");
    let json = to_json(&summary)?;
    fs::write(&summary_path, &json).map_err(|e| Error::io(&summary_path, e))?;
    let text = if cli.pretty { render_train_demo(&summary) } else { json };
    Ok(Outcome::checked(text, holds))
}

fn seed_summary(run: &SeedRun) -> SeedSummary {
    SeedSummary {
        seed: run.seed,
        best_epoch: run.outcome.best_epoch,
        accuracy: run.test.accuracy,
        aucoc_empirical: run.test.aucoc_empirical,
        aucoc_kde: run.test.aucoc_kde,
    }
}

fn render_train_demo(summary: &TrainDemoSummary) -> String {
    let mut s = String::new();
    let lambda = summary.config.aucoc_weight;
    let _ = writeln!(s, "seed  best epoch  test accuracy  test AUCOC (lambda = {lambda})");
    for r in &summary.runs {
        let _ = writeln!(s, "{:<5} {:<11} {:<14.4} {:.4}", r.seed, r.best_epoch, r.accuracy, r.aucoc_empirical);
    }
    if let Some(c) = &summary.comparison {
        let r = &c.result;
        let _ = writeln!(s, "                 mean accuracy  mean AUCOC");
        let _ = writeln!(s, "lambda = 0       {:<14.4} {:.4}", r.mean_baseline_accuracy, r.mean_baseline_aucoc);
        let _ = writeln!(s, "lambda = {:<7} {:<14.4} {:.4}", lambda, r.mean_accuracy, r.mean_aucoc);
        let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let _ = writeln!(
            s,
            "{}  mean AUCOC within {} of lambda = 0 or above",
            verdict(c.aucoc_holds),
            c.aucoc_margin
        );
        let _ = writeln!(
            s,
            "{}  mean accuracy within {} of lambda = 0",
            verdict(c.accuracy_holds),
            c.accuracy_margin
        );
    }
    s
}
