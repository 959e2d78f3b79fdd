//! Command-line front end: `fit`, `experiment`, `analyze`, `synth` and
//! `validate`.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 data error, 3
//! numerical failure. Every error is printed to stderr as one JSON line,
//! `{"error": "<kind>", "message": "..."}`.

pub mod analysis;
pub mod config;
pub mod experiment;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use self::analysis::{run_bias_analysis, AnalysisError};
use self::config::RunConfig;
use self::experiment::{run_experiment, ExperimentError};
use crate::dataset::{Condition, DatasetError, RatingDataset};
use crate::inference::{best_by_objective, fit_restarts, InferenceError};
use crate::models::ModelKind;
use crate::synth::{sample, sample_paired, sidecar_path, SynthError};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Env var capping the worker threads used for restarts and trials.
pub const THREADS_ENV: &str = "CROWDAGG_THREADS";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    /// The one-line JSON printed on stderr.
    pub fn to_json_line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Usage(m) => ("usage", m),
            CliError::Data(m) => ("data", m),
            CliError::Numerical(m) => ("numerical", m),
        };
        json!({ "error": kind, "message": msg }).to_string()
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) | SynthError::UnsupportedKind(_) => CliError::Usage(e.to_string()),
            SynthError::Dataset(_) | SynthError::Io { .. } => CliError::Data(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::NonFiniteObjective { .. } => CliError::Numerical(e.to_string()),
            InferenceError::EmptyData | InferenceError::Model(_) => CliError::Data(e.to_string()),
            InferenceError::InvalidConfig(_) | InferenceError::LengthMismatch { .. } => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            ExperimentError::Synth(s) => s.into(),
            ExperimentError::Dataset(_) | ExperimentError::Stats(_) | ExperimentError::MissingTruth(_) => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "crowdagg", version, about = "Bias-aware aggregation of multi-criteria crowd ratings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed override (synth seed, fit base seed or experiment base seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when omitted (required by `synth`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model with restarts and print the best FitResult.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_model)]
        model: Option<ModelKind>,
        /// Dataset CSV; overrides `[data] path`.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Run the trial protocol and report Spearman correlations.
    Experiment {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// INDV-vs-SIMUL bias statistics.
    Analyze {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        indv: Option<PathBuf>,
        #[arg(long)]
        simul: Option<PathBuf>,
    },
    /// Sample a synthetic dataset from the `[synth]` section.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_model)]
        model: Option<ModelKind>,
        /// Write INDV and SIMUL arms (one file) instead of a single SIMUL arm.
        #[arg(long)]
        paired: bool,
    },
    /// Check a config and its datasets without running anything.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV to check in addition to the configured ones.
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p).map_err(CliError::Usage),
        None => Ok(RunConfig::default()),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Data(format!("failed to write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            writeln!(stdout, "{text}").map_err(|e| CliError::Data(format!("failed to write stdout: {e}")))
        }
    }
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn cmd_fit(common: &Common, model: Option<ModelKind>, data: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(common.config.as_deref())?;
    let model = model
        .or(cfg.fit.model)
        .ok_or_else(|| CliError::Usage("no model given (use --model or [fit] model)".into()))?;
    let path = data
        .or(cfg.data.path.clone())
        .or(cfg.data.simul.clone())
        .ok_or_else(|| CliError::Usage("no dataset given (use --data or [data] path)".into()))?;
    let mut ds = RatingDataset::load_csv(&path)?;
    let has_indv = ds.responses_for(Condition::Indv).next().is_some();
    if has_indv {
        if let Some(simul) = ds.filter_condition(Condition::Simul) {
            log::info!("{} holds both conditions; fitting its SIMUL responses", path.display());
            ds = simul;
        }
    }
    let seed = common.seed.unwrap_or(cfg.fit.seed);
    let results = fit_restarts(model, &ds, &cfg.priors, &cfg.optimizer, seed);
    for (k, r) in results.iter().enumerate() {
        if let Err(e) = r {
            log::warn!("restart {k} failed: {e}");
        }
    }
    let best = match best_by_objective(&results) {
        Some(b) => b,
        None => {
            let first = results.into_iter().next().expect("at least one restart");
            return Err(first.expect_err("no successful restart").into());
        }
    };
    emit(
        common.out.as_deref(),
        &serde_json::to_string_pretty(best).expect("fit result serializes"),
    )
}

fn cmd_experiment(common: &Common, format: Format) -> Result<(), CliError> {
    let path = common
        .config
        .as_deref()
        .ok_or_else(|| CliError::Usage("experiment needs --config".into()))?;
    let cfg = load_config(Some(path))?;
    let source = cfg
        .data_source()
        .ok_or_else(|| CliError::Usage("config has neither [data] files nor a [synth] section".into()))?;
    let mut ex = cfg.experiment_config(source);
    if let Some(seed) = common.seed {
        ex.base_seed = seed;
    }
    let mut report = run_experiment(&ex)?;
    let text = match format {
        Format::Json => {
            report.metadata.generated_at = Some(unix_now());
            report.to_json()
        }
        Format::Csv => report.to_csv(),
    };
    emit(common.out.as_deref(), text.trim_end())
}

fn cmd_analyze(common: &Common, indv: Option<PathBuf>, simul: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(common.config.as_deref())?;
    let indv = indv.or(cfg.data.indv.clone()).or(cfg.data.path.clone());
    let simul = simul.or(cfg.data.simul.clone()).or(cfg.data.path.clone());
    let (Some(indv), Some(simul)) = (indv, simul) else {
        return Err(CliError::Usage("analyze needs INDV and SIMUL files (--indv/--simul or [data])".into()));
    };
    let report = run_bias_analysis(&indv, &simul, None)?;
    emit(
        common.out.as_deref(),
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )
}

fn cmd_synth(common: &Common, model: Option<ModelKind>, paired: bool) -> Result<(), CliError> {
    let cfg = load_config(common.config.as_deref())?;
    let mut sc = cfg
        .synth
        .ok_or_else(|| CliError::Usage("synth needs a [synth] section in --config".into()))?;
    if let Some(seed) = common.seed {
        sc.seed = seed;
    }
    if let Some(kind) = model {
        sc.kind = kind;
    }
    let out = common
        .out
        .as_deref()
        .ok_or_else(|| CliError::Usage("synth needs --out".into()))?;
    if !paired {
        return Ok(sample(&sc)?.save(out)?);
    }
    let pair = sample_paired(&sc)?;
    pair.indv.merge(&pair.simul)?.save_csv(out)?;
    let doc = json!({
        "indv_truth": pair.indv_truth,
        "simul_truth": pair.simul_truth,
        "discretize": sc.discretize,
    });
    let sidecar = sidecar_path(out);
    std::fs::write(&sidecar, serde_json::to_string_pretty(&doc).expect("truth serializes"))
        .map_err(|e| CliError::Data(format!("failed to write {}: {e}", sidecar.display())))
}

fn summarize(path: &Path) -> Result<serde_json::Value, CliError> {
    let ds = RatingDataset::load_csv(path)?;
    let count = |c| ds.responses_for(c).count();
    Ok(json!({
        "path": path.display().to_string(),
        "responses": ds.len(),
        "workers": ds.n_workers(),
        "targets": ds.n_targets(),
        "criteria": ds.n_criteria(),
        "indv_responses": count(Condition::Indv),
        "simul_responses": count(Condition::Simul),
        "eligible_simul_workers": ds.eligible_workers(Condition::Simul).len(),
    }))
}

fn cmd_validate(common: &Common, data: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(common.config.as_deref())?;
    cfg.optimizer.validate()?;
    cfg.priors.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(s) = &cfg.synth {
        s.validate()?;
    }
    if let Some(source) = cfg.data_source() {
        cfg.experiment_config(source).validate()?;
    }
    let mut paths: Vec<PathBuf> = [cfg.data.path.clone(), cfg.data.indv.clone(), cfg.data.simul.clone(), data]
        .into_iter()
        .flatten()
        .collect();
    paths.dedup();
    let datasets = paths.iter().map(|p| summarize(p)).collect::<Result<Vec<_>, _>>()?;
    emit(
        common.out.as_deref(),
        &serde_json::to_string_pretty(&json!({ "status": "ok", "datasets": datasets })).expect("json"),
    )
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Fit { common, model, data } => cmd_fit(&common, model, data),
        Command::Experiment { common, format } => cmd_experiment(&common, format),
        Command::Analyze { common, indv, simul } => cmd_analyze(&common, indv, simul),
        Command::Synth { common, model, paired } => cmd_synth(&common, model, paired),
        Command::Validate { common, data } => cmd_validate(&common, data),
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.render().to_string();
            let msg = msg.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
            eprintln!("{}", CliError::Usage(msg).to_json_line());
            return EXIT_USAGE;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            e.exit_code()
        }
    }
}
