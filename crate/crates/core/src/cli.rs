//! Command-line front end. Values are entered and printed in GHz and mm;
//! everything below this layer works in SI units.

use crate::antenna::{patch_model, DesignInput, STANDARD_HEIGHT_M};
use crate::benchmark::{self, BenchConfig, BenchData, BenchError, ComboSpec, Parallelism, TrialTrace};
use crate::dataset::{self, Dataset, DatasetError, DEFAULT_CORPUS_SIZE};
use crate::metrics::accuracy_pct;
use crate::networks::{
    deserialize, design_grnn, design_rbr, serialize, ModelMetadata, Network, NetworkError, RbrParams, Topology,
    TopologyKind, DEFAULT_GR_SPREAD, DEFAULT_RBR_SPREAD,
};
use crate::trainers::{train, AlgorithmKind, StopReason, TrainConfig, TrainError};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "PATCHNET_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Io(_) => EXIT_IO,
            Self::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io(_) => Self::Io(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<NetworkError> for CliError {
    fn from(e: NetworkError) -> Self {
        match e {
            NetworkError::Linalg(_) => Self::Numeric(e.to_string()),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Io(_) => Self::Io(e.to_string()),
            TrainError::Linalg(_) => Self::Numeric(e.to_string()),
            TrainError::Network(n) => n.into(),
            _ => Self::Usage(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io(_) | BenchError::Csv(_) => Self::Io(e.to_string()),
            BenchError::Dataset(d) => d.into(),
            BenchError::Train(t) => t.into(),
            BenchError::Network(n) => n.into(),
            _ => Self::Usage(e.to_string()),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "patchnet", version, about = "Neural-network models of microstrip patch antenna dimensions")]
pub struct Cli {
    /// Seed for corpus sampling, splits, initialization and trial seeds.
    #[arg(long, global = true, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Patch dimensions from the transmission-line model.
    Oracle(OracleArgs),
    /// Write the training corpus as CSV.
    GenData(GenDataArgs),
    /// Train or design one network and save it.
    Train(TrainArgs),
    /// Predict dimensions with a saved model and compare with the model equations.
    Predict(PredictArgs),
    /// Run the comparison matrix.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub f_ghz: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub eps: f64,
    #[arg(long, default_value_t = 1.5, allow_negative_numbers = true)]
    pub h_mm: f64,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// Use all 10,000 grid points instead of a seeded sample.
    #[arg(long)]
    pub full_grid: bool,
    /// Sample size drawn from the grid.
    #[arg(long, default_value_t = DEFAULT_CORPUS_SIZE)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// ff, cf, el, lr, rbr or gr.
    #[arg(long)]
    pub net: String,
    /// Training algorithm for ff/cf/el/lr networks.
    #[arg(long)]
    pub algo: Option<String>,
    /// MSE goal in mm²; required for rbr.
    #[arg(long)]
    pub goal: Option<f64>,
    /// Gaussian spread for rbr/gr.
    #[arg(long)]
    pub spread: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Dataset CSV; the default corpus is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output directory for model.json and trace.csv.
    #[arg(long, default_value = "train-out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub f_ghz: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub eps: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated combinations, e.g. "CF+LM,GR,0.001 RBR"; all 22 by default.
    #[arg(long)]
    pub combos: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    /// Run trials one after another for uncontended timings.
    #[arg(long, conflicts_with = "jobs")]
    pub serial: bool,
    /// Worker threads; 0 uses one per core.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, default_value = "bench-out")]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Human-readable output goes to `out`, diagnostics to
/// standard error.
pub fn main_with<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Oracle(a) => cmd_oracle(&a, out),
        Command::GenData(a) => cmd_gen_data(&a, cli.seed, out),
        Command::Train(a) => cmd_train(&a, cli.seed, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Bench(a) => cmd_bench(&a, cli.seed, out),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> CliResult {
    let input = DesignInput::from_ghz_mm(a.f_ghz, a.eps, a.h_mm).map_err(|e| usage(e.to_string()))?;
    let (dims, m) = patch_model(&input).map_err(|e| usage(e.to_string()))?;
    writeln!(out, "f_r = {:.3} GHz, eps_r = {:.3}, h = {:.3} mm", a.f_ghz, a.eps, a.h_mm)?;
    writeln!(out, "W       = {:.3} mm", dims.w_mm())?;
    writeln!(out, "L       = {:.3} mm", dims.l_mm())?;
    writeln!(out, "eps_eff = {:.3}", m.eps_eff)?;
    writeln!(out, "L_eff   = {:.3} mm", m.l_eff * 1e3)?;
    writeln!(out, "dL      = {:.3} mm", m.delta_l * 1e3)?;
    Ok(())
}

fn corpus(args: &CorpusArgs, seed: u64) -> CliResult<Dataset<f64>> {
    if !args.full_grid && args.samples == 0 {
        return Err(usage("--samples must be at least 1"));
    }
    Ok(dataset::default_corpus(args.full_grid, args.samples, seed)?)
}

pub fn cmd_gen_data(a: &GenDataArgs, seed: u64, out: &mut dyn Write) -> CliResult {
    let d = corpus(&a.corpus, seed)?;
    dataset::write_csv(&d, &a.out)?;
    writeln!(out, "wrote {} samples to {}", d.len(), a.out.display())?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> CliResult {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn now_unix() -> Option<u64> {
    SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs())
}

pub fn cmd_train(a: &TrainArgs, seed: u64, out: &mut dyn Write) -> CliResult {
    let kind: TopologyKind = a.net.parse()?;
    let algorithm = match (&a.algo, kind.is_differentiable()) {
        (Some(name), true) => Some(name.parse::<AlgorithmKind>()?),
        (None, true) => return Err(usage(format!("--algo is required for {kind} networks"))),
        (Some(_), false) => {
            return Err(usage(format!(
                "{kind} networks are designed from data, not trained; drop --algo"
            )))
        }
        (None, false) => None,
    };
    if kind == TopologyKind::RadialBasisReduced && a.goal.is_none() {
        return Err(usage("rbr networks need --goal"));
    }
    if kind == TopologyKind::GeneralizedRegression && a.goal.is_some() {
        return Err(usage("gr networks take no --goal"));
    }
    if kind.is_differentiable() && a.spread.is_some() {
        return Err(usage("--spread applies to rbr and gr networks only"));
    }
    if !kind.is_differentiable() && a.max_epochs.is_some() {
        return Err(usage("--max-epochs applies to trained networks only"));
    }
    let data = match &a.data {
        Some(path) => dataset::read_csv(path)?,
        None => corpus(&a.corpus, seed)?,
    };
    let bench = BenchData::new(data, seed)?;
    let scaler = bench.scaler.clone();
    let scale = scaler.output_scale_mm();
    let mut meta = ModelMetadata {
        seed: Some(seed),
        created_unix_s: now_unix(),
        tool_version: Some(env!("CARGO_PKG_VERSION").to_string()),
        ..ModelMetadata::default()
    };

    let (network, trace_csv, wall, reason) = match algorithm {
        Some(alg) => {
            let net = Network::init(&Topology::new(kind), seed)?;
            let mut cfg = TrainConfig::new(alg).with_seed(seed);
            if let Some(n) = a.max_epochs {
                cfg = cfg.with_max_epochs(n);
            }
            if let Some(g) = a.goal {
                cfg = cfg.with_goal(g);
            }
            let outcome = train(&net, &bench.training, &cfg)?;
            let mut csv = Vec::new();
            outcome.trace.write_csv_to(&mut csv)?;
            meta.algorithm = Some(alg.code().to_string());
            meta.diverged = outcome.trace.stop_reason == StopReason::Diverged;
            (
                outcome.network,
                csv,
                outcome.trace.wall_time_s,
                outcome.trace.stop_reason.as_str().to_string(),
            )
        }
        None => {
            let start = Instant::now();
            let (net, trace, reason) = if kind == TopologyKind::RadialBasisReduced {
                let goal = a.goal.expect("checked above");
                let params = RbrParams::new(goal, scale.clone(), bench.normalized.len())
                    .with_spread(a.spread.unwrap_or(DEFAULT_RBR_SPREAD));
                let design = design_rbr(&bench.normalized, &params)?;
                let reason = if design.goal_met { "goal_met" } else { "neuron_budget" };
                (Network::from(design.net), design.trace, reason)
            } else {
                let net = Network::from(design_grnn(&bench.normalized, a.spread.unwrap_or(DEFAULT_GR_SPREAD))?);
                let mse = benchmark::corpus_mse(&net, &bench.normalized, &scaler)?;
                (net, vec![mse], "designed")
            };
            let wall = start.elapsed().as_secs_f64();
            let mut csv = Vec::new();
            benchmark::write_trace(&TrialTrace::Neurons(trace), &mut csv)?;
            (net, csv, wall, reason.to_string())
        }
    };
    let mse = benchmark::corpus_mse(&network, &bench.normalized, &scaler)?;
    let train_mse = match algorithm {
        Some(_) => benchmark::corpus_mse(&network, &bench.training.train, &scaler)?,
        None => mse,
    };
    meta.final_train_mse_mm2 = Some(train_mse);
    meta.stop_reason = Some(reason.clone());

    fs::create_dir_all(&a.out)?;
    let model_path = a.out.join("model.json");
    let trace_path = a.out.join("trace.csv");
    write_file(&model_path, &serialize(&network, Some(&scaler), &meta)?)?;
    fs::write(&trace_path, trace_csv)?;

    writeln!(out, "network      {}", kind.label())?;
    if let Some(alg) = algorithm {
        writeln!(out, "algorithm    {}", alg.label())?;
    }
    writeln!(out, "train MSE    {train_mse:.6} mm²")?;
    writeln!(out, "corpus MSE   {mse:.6} mm²")?;
    writeln!(out, "stop reason  {reason}")?;
    writeln!(out, "wall time    {wall:.3} s")?;
    writeln!(out, "model        {}", model_path.display())?;
    writeln!(out, "trace        {}", trace_path.display())?;
    if meta.diverged {
        return Err(CliError::Numeric(format!(
            "training diverged; last finite weights saved to {}",
            model_path.display()
        )));
    }
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> CliResult {
    let text = fs::read_to_string(&a.model)?;
    let model = deserialize::<f64>(&text)?;
    let scaler = model
        .scaler
        .ok_or_else(|| usage(format!("{} carries no input/output scaling", a.model.display())))?;
    let input =
        DesignInput::from_ghz_mm(a.f_ghz, a.eps, STANDARD_HEIGHT_M * 1e3).map_err(|e| usage(e.to_string()))?;
    let (truth, _) = patch_model(&input).map_err(|e| usage(e.to_string()))?;
    let u = scaler.scale_input(&input);
    let row = crate::linalg::Matrix::from_rows(&[u.to_vec()]).map_err(NetworkError::from)?;
    let y = model.network.predict(&row)?;
    let pred = scaler.invert(y.row(0));
    if !(pred.w_mm().is_finite() && pred.l_mm().is_finite()) {
        return Err(CliError::Numeric("model produced a non-finite prediction".into()));
    }
    let acc_w = accuracy_pct(truth.w_mm(), pred.w_mm()).map_err(|e| CliError::Numeric(e.to_string()))?;
    let acc_l = accuracy_pct(truth.l_mm(), pred.l_mm()).map_err(|e| CliError::Numeric(e.to_string()))?;
    writeln!(
        out,
        "f_r = {:.3} GHz, eps_r = {:.3}, h = {:.3} mm",
        a.f_ghz,
        a.eps,
        STANDARD_HEIGHT_M * 1e3
    )?;
    writeln!(out, "{:<3}{:>12}{:>12}{:>12}", "", "predicted", "oracle", "accuracy")?;
    writeln!(out, "{:<3}{:>9.3} mm{:>9.3} mm{:>11.3}%", "W", pred.w_mm(), truth.w_mm(), acc_w)?;
    writeln!(out, "{:<3}{:>9.3} mm{:>9.3} mm{:>11.3}%", "L", pred.l_mm(), truth.l_mm(), acc_l)?;
    if u.iter().any(|v| v.abs() > 1.0 + 1e-12) {
        writeln!(out, "note: input lies outside the training range; the prediction is an extrapolation")?;
    }
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs, seed: u64, out: &mut dyn Write) -> CliResult {
    let combos: Vec<ComboSpec> = match &a.combos {
        Some(list) => benchmark::parse_combos(list)?,
        None => benchmark::default_matrix(),
    };
    let parallelism = match (a.serial, a.jobs) {
        (true, _) => Parallelism::Serial,
        (false, Some(n)) => Parallelism::Jobs(n),
        (false, None) => Parallelism::Jobs(0),
    };
    let config = BenchConfig {
        trials: a.trials,
        master_seed: seed,
        parallelism,
        corpus_size: a.corpus.samples,
        full_grid: a.corpus.full_grid,
        max_epochs: a.max_epochs,
        ..BenchConfig::default()
    };
    config.validate()?;
    let report = benchmark::run_matrix(&combos, &config)?;
    let files = benchmark::write_all(&report, &a.out)?;
    writeln!(out, "{}", benchmark::emit_report(&report, benchmark::ReportFormat::Markdown)?)?;
    writeln!(out, "wrote {} files under {}", files.len(), a.out.display())?;
    for row in report.rows.iter().filter(|r| r.failed_trials > 0) {
        let flag = if row.degraded { "DEGRADED" } else { "partial" };
        writeln!(out, "{flag}: {} ({} of {} trials failed)", row.combo.label, row.failed_trials, row.trials.len())?;
    }
    Ok(())
}
