//! `co2occ` command line: simulate → ingest → featurize → experiment → report.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 degenerate data
//! (for example a single label class).

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval;
use crate::features::{
    build_features, feature_set_label, parse_feature_list, FeatureKind, FeatureSpec,
};
use crate::ingest::{self, Dataset, IngestConfig, NormStats};
use crate::modelsel::{self, ExperimentOptions, ExperimentReport, GridSpec, SplitPlan, Task};
use crate::simulator::{self, Schedule, SimConfig};
use crate::svm::{self, KernelParams, SolverConfig, SvmModel, TrainingProblem};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_DEGENERATE: i32 = 3;

/// Environment variable overriding the kernel cache size, in MiB.
pub const CACHE_ENV: &str = "CO2OCC_CACHE_MB";

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to reproduce an artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub inputs: Vec<String>,
    pub output: String,
    pub master_seed: Option<u64>,
    pub feature_sets: Vec<String>,
    pub task: Option<Task>,
    pub interval_s: Option<u32>,
    pub grid: Option<GridSpec>,
    pub tool_version: String,
}

impl RunManifest {
    fn new(subcommand: &str, inputs: &[&Path], output: &Path) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            output: output.display().to_string(),
            master_seed: None,
            feature_sets: Vec::new(),
            task: None,
            interval_s: None,
            grid: None,
            tool_version: crate::TOOL_VERSION.to_string(),
        }
    }
}

/// One row of the fixed-width summary, averaged over rooms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub feature_set: String,
    pub rooms: usize,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub f1_mean: f64,
    pub rmse_mean: f64,
}

/// The JSON document written by `experiment`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub manifest: RunManifest,
    pub summary: Vec<SummaryRow>,
    pub reports: Vec<ExperimentReport>,
}

#[derive(Debug, Parser)]
#[command(
    name = "co2occ",
    version,
    about = "CO2-based occupancy detection toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the two-zone simulator and write sensor, label, room and manifest files.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the default room configs and school-week schedules.
    Presets {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = simulator::DEFAULT_SEED)]
        seed: u64,
    },
    /// Run the split / grid-search / evaluate protocol on one or more rooms.
    Experiment(ExperimentArgs),
    /// Fit one model on all rows of a room and save it.
    Train(TrainArgs),
    /// Permutation importance of a saved model on a room's data.
    Importance(ImportanceArgs),
    /// Export the feature matrix of a room as CSV.
    Features {
        data: PathBuf,
        #[arg(long)]
        features: String,
        #[command(flatten)]
        grid: IntervalArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct IntervalArgs {
    /// Aggregation interval in seconds.
    #[arg(long, default_value_t = 300)]
    pub interval: u32,
    /// Native sampling interval of the sensor files in seconds.
    #[arg(long, default_value_t = 15)]
    pub native_interval: u32,
}

impl IntervalArgs {
    fn ingest(&self) -> IngestConfig {
        IngestConfig {
            native_interval_s: self.native_interval,
            target_interval_s: self.interval,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Room directories, each holding sensors.csv, labels.csv and room.json.
    #[arg(required = true)]
    pub data: Vec<PathBuf>,
    /// Comma list over avg,fd,vd,fdvd,hd,vent; repeat for several sets.
    #[arg(long, required = true)]
    pub features: Vec<String>,
    #[arg(long, default_value = "state")]
    pub task: Task,
    #[command(flatten)]
    pub grid_args: IntervalArgs,
    #[arg(long, default_value_t = 3)]
    pub rounds: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Exponent bounds `clo:chi,glo:ghi` (base 2).
    #[arg(long)]
    pub grid: Option<String>,
    /// Permutation repeats per round (0 disables importance).
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    pub data: PathBuf,
    #[arg(long)]
    pub features: String,
    #[arg(long, default_value = "state")]
    pub task: Task,
    #[command(flatten)]
    pub grid_args: IntervalArgs,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    pub data: PathBuf,
    /// Feature set the data should be featurized with; defaults to the model's.
    #[arg(long)]
    pub features: Option<String>,
    #[arg(long, default_value = "state")]
    pub task: Task,
    #[command(flatten)]
    pub grid_args: IntervalArgs,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn solver_config() -> Result<SolverConfig> {
    let mut cfg = SolverConfig::default();
    if let Ok(v) = std::env::var(CACHE_ENV) {
        let mb: usize = v.trim().parse().map_err(|_| {
            Error::invalid(CACHE_ENV, format!("`{v}` is not a whole number of MiB"))
        })?;
        cfg.cache_bytes = mb << 20;
    }
    Ok(cfg)
}

fn grid_spec(s: &Option<String>) -> Result<GridSpec> {
    match s {
        Some(s) => GridSpec::parse_bounds(s),
        None => Ok(GridSpec::default()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        field: "json".into(),
        msg: e.to_string(),
    })
}

/// Sidecar manifest path for artifacts that cannot embed one (CSV).
pub fn sidecar_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(OsString::from).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

pub fn cmd_simulate(config: &Path, schedule: &Path, out: &Path) -> Result<()> {
    let cfg: SimConfig = read_json(config)?;
    cfg.validate()?;
    let sched: Schedule = read_json(schedule)?;
    sched.validate()?;
    let run = simulator::simulate(&cfg, &sched)?;
    run.write_dir(out)?;
    let mut manifest = RunManifest::new("simulate", &[config, schedule], out);
    manifest.master_seed = Some(cfg.seed);
    manifest.interval_s = Some(cfg.sample_interval_s);
    write_json(&out.join(MANIFEST_FILE), &manifest)
}

pub fn cmd_presets(out: &Path, seed: u64) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for s in simulator::default_scenarios(seed) {
        let dir = out.join(&s.name);
        write_json(&dir.join("config.json"), &s.config)?;
        s.schedule.save(&dir.join("schedule.json"))?;
        written.push(dir);
    }
    Ok(written)
}

fn load(dir: &Path, args: &IntervalArgs) -> Result<Dataset> {
    ingest::load_dataset_dir(dir, &args.ingest())
}

pub fn summarize(reports: &[ExperimentReport]) -> Vec<SummaryRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in reports {
        if !order.contains(&r.feature_set.as_str()) {
            order.push(&r.feature_set);
        }
    }
    order
        .into_iter()
        .map(|set| {
            let rs: Vec<&ExperimentReport> =
                reports.iter().filter(|r| r.feature_set == set).collect();
            let (accuracy_mean, accuracy_sd) =
                eval::mean_sd(&rs.iter().map(|r| r.mean.accuracy).collect::<Vec<_>>());
            let (f1_mean, _) = eval::mean_sd(&rs.iter().map(|r| r.mean.f1).collect::<Vec<_>>());
            let (rmse_mean, _) = eval::mean_sd(&rs.iter().map(|r| r.mean.rmse).collect::<Vec<_>>());
            SummaryRow {
                feature_set: set.to_string(),
                rooms: rs.len(),
                accuracy_mean,
                accuracy_sd,
                f1_mean,
                rmse_mean,
            }
        })
        .collect()
}

pub fn format_summary(rows: &[SummaryRow], task: Task) -> String {
    let mut s = format!(
        "{:<32} {:>5} {:>10} {:>8} {:>8} {:>8}\n",
        format!("features ({task})"),
        "rooms",
        "accuracy",
        "sd",
        "F1",
        "RMSE"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<32} {:>5} {:>9.2}% {:>7.2}% {:>7.2}% {:>8.3}\n",
            r.feature_set,
            r.rooms,
            100.0 * r.accuracy_mean,
            100.0 * r.accuracy_sd,
            100.0 * r.f1_mean,
            r.rmse_mean
        ));
    }
    s
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<ReportBundle> {
    let grid = grid_spec(&args.grid)?;
    let sets = args
        .features
        .iter()
        .map(|f| parse_feature_list(f))
        .collect::<Result<Vec<BTreeSet<FeatureKind>>>>()?;
    let plan = SplitPlan {
        rounds: args.rounds,
        seed: args.seed,
        ..SplitPlan::default()
    };
    plan.validate()?;
    let opts = ExperimentOptions {
        solver: solver_config()?,
        importance_repeats: args.repeats,
        ..ExperimentOptions::default()
    };
    let datasets = args
        .data
        .iter()
        .map(|d| load(d, &args.grid_args))
        .collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::new();
    for kinds in &sets {
        for ds in &datasets {
            reports.push(modelsel::run_experiment(
                ds, kinds, args.task, &plan, &grid, &opts,
            )?);
        }
    }
    let inputs: Vec<&Path> = args.data.iter().map(PathBuf::as_path).collect();
    let mut manifest = RunManifest::new("experiment", &inputs, &args.out);
    manifest.master_seed = Some(args.seed);
    manifest.feature_sets = sets.iter().map(feature_set_label).collect();
    manifest.task = Some(args.task);
    manifest.interval_s = Some(args.grid_args.interval);
    manifest.grid = Some(grid);
    let bundle = ReportBundle {
        manifest,
        summary: summarize(&reports),
        reports,
    };
    write_json(&args.out, &bundle)?;
    Ok(bundle)
}

pub fn cmd_train(args: &TrainArgs) -> Result<SvmModel> {
    let grid = grid_spec(&args.grid)?;
    let kinds = parse_feature_list(&args.features)?;
    let ds = load(&args.data, &args.grid_args)?;
    let (spec, _) = modelsel::resolve_features(&ds, &kinds)?;
    let fm = build_features(&ds, &spec)?;
    let y = args.task.labels(&fm.occupants);
    if svm::classes_of(&y).len() < 2 {
        return Err(Error::SingleClass(format!(
            "{} labels have a single class",
            args.task
        )));
    }
    let rows: Vec<usize> = (0..fm.n_rows()).collect();
    let norm = NormStats::fit(&fm.x, &rows, "all rows")?;
    let xn = norm.apply(&fm.x)?;
    let solver = solver_config()?;
    let outcome = modelsel::grid_search(
        &xn,
        &y,
        &grid,
        ExperimentOptions::default().folds,
        args.seed,
        &solver,
    )?;
    let params = KernelParams::new(outcome.gamma(), outcome.c())?;
    let mut model = svm::train_multiclass_path(
        &TrainingProblem::balanced(xn, y)?,
        params.gamma,
        &outcome.c_path(),
        &solver,
    )?;
    model.feature_names = fm.columns;
    model.norm = Some(norm);

    let mut manifest = RunManifest::new("train", &[&args.data], &args.out);
    manifest.master_seed = Some(args.seed);
    manifest.feature_sets = vec![feature_set_label(&spec.kinds)];
    manifest.task = Some(args.task);
    manifest.interval_s = Some(args.grid_args.interval);
    manifest.grid = Some(grid);
    model.manifest = Some(serde_json::to_value(&manifest)?);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    model.save(&args.out)?;
    Ok(model)
}

fn model_kinds(model: &SvmModel) -> Result<BTreeSet<FeatureKind>> {
    model
        .feature_names
        .iter()
        .map(|n| n.parse::<FeatureKind>())
        .collect::<Result<BTreeSet<_>>>()
        .map_err(|e| Error::Schema(format!("model feature names: {e}")))
}

pub fn cmd_importance(args: &ImportanceArgs) -> Result<eval::ImportanceReport> {
    let model = SvmModel::load(&args.model)?;
    let model_set = model_kinds(&model)?;
    let kinds = match &args.features {
        Some(f) => parse_feature_list(f)?,
        None => model_set.clone(),
    };
    if kinds != model_set {
        return Err(Error::Schema(format!(
            "model was trained on [{}] but the data was featurized as [{}]",
            feature_set_label(&model_set),
            feature_set_label(&kinds)
        )));
    }
    let ds = load(&args.data, &args.grid_args)?;
    let spec = FeatureSpec::for_room(kinds, &ds.room)?;
    let fm = build_features(&ds, &spec)?;
    if fm.columns != model.feature_names {
        return Err(Error::Schema(format!(
            "columns {:?} do not match the model's {:?}",
            fm.columns, model.feature_names
        )));
    }
    let x = match &model.norm {
        Some(norm) => norm.apply(&fm.x)?,
        None => fm.x.clone(),
    };
    let y = args.task.labels(&fm.occupants);
    let report =
        eval::permutation_importance(&model, &x, &y, &fm.columns, args.repeats, args.seed)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    report.write_csv(&args.out)?;
    let mut manifest = RunManifest::new("importance", &[&args.model, &args.data], &args.out);
    manifest.master_seed = Some(args.seed);
    manifest.feature_sets = vec![feature_set_label(&spec.kinds)];
    manifest.task = Some(args.task);
    manifest.interval_s = Some(args.grid_args.interval);
    write_json(&sidecar_manifest(&args.out), &manifest)?;
    Ok(report)
}

pub fn cmd_features(
    data: &Path,
    features: &str,
    grid_args: &IntervalArgs,
    out: &Path,
) -> Result<()> {
    let kinds = parse_feature_list(features)?;
    let ds = load(data, grid_args)?;
    let (spec, _) = modelsel::resolve_features(&ds, &kinds)?;
    let fm = build_features(&ds, &spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fm.write_csv(out)?;
    let mut manifest = RunManifest::new("features", &[data], out);
    manifest.feature_sets = vec![feature_set_label(&spec.kinds)];
    manifest.interval_s = Some(grid_args.interval);
    write_json(&sidecar_manifest(out), &manifest)
}

pub fn exit_code(err: &Error) -> i32 {
    if err.is_degenerate_data() {
        EXIT_DEGENERATE
    } else {
        EXIT_INVALID
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let stdout = std::io::stdout();
    match cli.command {
        Command::Simulate {
            config,
            schedule,
            out,
        } => {
            cmd_simulate(&config, &schedule, &out)?;
            let _ = writeln!(stdout.lock(), "wrote {}", out.display());
        }
        Command::Presets { out, seed } => {
            for dir in cmd_presets(&out, seed)? {
                let _ = writeln!(stdout.lock(), "wrote {}", dir.display());
            }
        }
        Command::Experiment(args) => {
            let bundle = cmd_experiment(&args)?;
            let _ = write!(
                stdout.lock(),
                "{}",
                format_summary(&bundle.summary, args.task)
            );
        }
        Command::Train(args) => {
            let model = cmd_train(&args)?;
            let _ = writeln!(
                stdout.lock(),
                "C = {} gamma = {} classes = {:?}",
                model.params.c,
                model.params.gamma,
                model.classes
            );
        }
        Command::Importance(args) => {
            let report = cmd_importance(&args)?;
            let mut out = stdout.lock();
            for f in &report.features {
                let _ = writeln!(out, "{:<6} {:>8.4} ± {:.4}", f.feature, f.mean, f.sd);
            }
        }
        Command::Features {
            data,
            features,
            grid,
            out,
        } => cmd_features(&data, &features, &grid, &out)?,
    }
    Ok(())
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
