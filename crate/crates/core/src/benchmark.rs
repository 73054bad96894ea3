//! The comparison matrix: every network/algorithm combination trained several
//! times on one shared corpus, scored on the five catalog use cases, and
//! written out as a report, raw per-trial records and per-trial traces.

use crate::antenna::catalog;
use crate::dataset::{self, Dataset, DatasetError, NormalizedData, Scaler, SplitSpec};
use crate::linalg::Matrix;
use crate::metrics::{self, EvalRecord, MetricsError};
use crate::networks::{
    design_grnn, design_rbr, Network, NetworkError, RbrParams, Topology, TopologyKind, DEFAULT_GR_SPREAD,
    DEFAULT_RBR_SPREAD,
};
use crate::trainers::{train, AlgorithmKind, EpochRecord, StopReason, TrainConfig, TrainError, TrainingData};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown combination `{0}`")]
    UnknownCombo(String),
    #[error("invalid benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("scaler mismatch: network trained under {trained:016x}, scaler is {given:016x}")]
    ScalerMismatch { trained: u64, given: u64 },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

/// How a combination obtains its network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// Iterative training of a layered network.
    Train(AlgorithmKind),
    /// Reduced radial basis design down to an MSE goal in mm².
    Rbr { goal_mse_mm2: f64 },
    /// One-pass generalized regression.
    Grnn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComboSpec {
    pub topology: TopologyKind,
    pub method: Method,
    pub label: String,
}

impl ComboSpec {
    pub fn trained(topology: TopologyKind, algorithm: AlgorithmKind) -> Result<Self> {
        if !topology.is_differentiable() {
            return Err(BenchError::InvalidConfig(format!("{topology} networks are not trained by {algorithm}")));
        }
        Ok(Self {
            topology,
            method: Method::Train(algorithm),
            label: format!("{} + {}", topology.label(), algorithm.label()),
        })
    }

    pub fn rbr(goal_mse_mm2: f64) -> Result<Self> {
        if !(goal_mse_mm2 > 0.0 && goal_mse_mm2.is_finite()) {
            return Err(BenchError::InvalidConfig(format!("RBR goal must be positive, got {goal_mse_mm2}")));
        }
        Ok(Self {
            topology: TopologyKind::RadialBasisReduced,
            method: Method::Rbr { goal_mse_mm2 },
            label: format!("{goal_mse_mm2} RBR"),
        })
    }

    pub fn grnn() -> Self {
        Self {
            topology: TopologyKind::GeneralizedRegression,
            method: Method::Grnn,
            label: "GR".into(),
        }
    }

    /// Directory-safe identifier, e.g. `cf_lm`, `gr`, `rbr_0.0006`.
    pub fn slug(&self) -> String {
        match self.method {
            Method::Train(a) => format!("{}_{}", self.topology.code(), a.code()),
            Method::Rbr { goal_mse_mm2 } => format!("rbr_{goal_mse_mm2}"),
            Method::Grnn => "gr".into(),
        }
    }
}

impl fmt::Display for ComboSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Accepts report labels (`CF + LM`, `0.001 RBR`), compact forms
/// (`CF+LM`, `cf_lm`, `GR`) and slugs (`rbr_0.001`).
impl FromStr for ComboSpec {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || BenchError::UnknownCombo(s.to_string());
        let compact: String = s.split_whitespace().collect::<Vec<_>>().join(" ").to_ascii_lowercase();
        if compact == "gr" {
            return Ok(Self::grnn());
        }
        let goal = compact
            .strip_suffix(" rbr")
            .or_else(|| compact.strip_prefix("rbr_"))
            .or_else(|| compact.strip_prefix("rbr "));
        if let Some(g) = goal {
            let g: f64 = g.trim().parse().map_err(|_| unknown())?;
            return Self::rbr(g);
        }
        let (net, alg) = compact.split_once(['+', '_']).ok_or_else(unknown)?;
        let topology: TopologyKind = net.trim().parse().map_err(|_| unknown())?;
        let algorithm: AlgorithmKind = alg.trim().parse().map_err(|_| unknown())?;
        Self::trained(topology, algorithm)
    }
}

/// The 22 rows of the published comparison, in its row order.
pub fn default_matrix() -> Vec<ComboSpec> {
    use AlgorithmKind::*;
    use TopologyKind::*;
    let rows: [(TopologyKind, &[AlgorithmKind]); 2] = [
        (CascadeForward, &[Lm, Rp, Scg, Cgf, Cgp]),
        (Elman, &[Lm, Rp, Scg, Cgp, Oss]),
    ];
    let later: [(TopologyKind, &[AlgorithmKind]); 2] = [
        (FeedForward, &[Lm, Rp, Scg, Cgb, Cgp]),
        (LayerRecurrent, &[Rp, Scg, Cgf, Cgp]),
    ];
    let expand = |rows: &[(TopologyKind, &[AlgorithmKind])]| -> Vec<ComboSpec> {
        rows.iter()
            .flat_map(|(t, algs)| algs.iter().map(move |a| ComboSpec::trained(*t, *a).expect("layered topology")))
            .collect()
    };
    let mut out = expand(&rows);
    out.push(ComboSpec::grnn());
    out.extend(expand(&later));
    out.push(ComboSpec::rbr(0.001).expect("positive goal"));
    out.push(ComboSpec::rbr(0.0006).expect("positive goal"));
    out
}

/// Parses a comma-separated combination list.
pub fn parse_combos(list: &str) -> Result<Vec<ComboSpec>> {
    let combos: Vec<ComboSpec> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if combos.is_empty() {
        return Err(BenchError::InvalidConfig("empty combination list".into()));
    }
    Ok(combos)
}

/// Independent seed for one trial of one combination.
pub fn trial_seed(master_seed: u64, label: &str, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update((trial as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Serial,
    /// Worker count; 0 lets the pool pick one per core.
    Jobs(usize),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub trials: usize,
    pub master_seed: u64,
    pub parallelism: Parallelism,
    pub corpus_size: usize,
    pub full_grid: bool,
    pub max_epochs: usize,
    pub rbr_spread: f64,
    pub gr_spread: f64,
    /// Neuron budget of the RBR designs; `None` allows one per sample.
    pub rbr_max_neurons: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            trials: 5,
            master_seed: 0,
            parallelism: Parallelism::Jobs(0),
            corpus_size: dataset::DEFAULT_CORPUS_SIZE,
            full_grid: false,
            max_epochs: 1000,
            rbr_spread: DEFAULT_RBR_SPREAD,
            gr_spread: DEFAULT_GR_SPREAD,
            rbr_max_neurons: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(BenchError::InvalidConfig("at least one trial is required".into()));
        }
        if self.max_epochs == 0 {
            return Err(BenchError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        for (name, s) in [("RBR spread", self.rbr_spread), ("GR spread", self.gr_spread)] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(BenchError::InvalidConfig(format!("{name} must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!(
            "trials={};master_seed={};corpus={};full_grid={};max_epochs={};rbr_spread={};gr_spread={};rbr_max_neurons={:?}",
            self.trials,
            self.master_seed,
            self.corpus_size,
            self.full_grid,
            self.max_epochs,
            self.rbr_spread,
            self.gr_spread,
            self.rbr_max_neurons
        )
    }
}

/// The immutable data every trial shares: corpus, scaler and split.
#[derive(Debug, Clone)]
pub struct BenchData {
    pub corpus: Dataset<f64>,
    pub scaler: Scaler<f64>,
    pub normalized: NormalizedData<f64>,
    pub training: TrainingData<f64>,
}

impl BenchData {
    pub fn new(corpus: Dataset<f64>, split_seed: u64) -> Result<Self> {
        let scaler = Scaler::fit(&corpus)?;
        let normalized = scaler.apply(&corpus);
        let parts = dataset::split(corpus.len(), &SplitSpec::with_seed(split_seed))?;
        let nonempty = |idx: &[usize]| (!idx.is_empty()).then(|| normalized.select(idx));
        let training = TrainingData {
            train: normalized.select(&parts.train),
            validation: nonempty(&parts.validation),
            test: nonempty(&parts.test),
            output_scale: scaler.output_scale_mm(),
        };
        Ok(Self {
            corpus,
            scaler,
            normalized,
            training,
        })
    }

    /// The configured corpus, split under the master seed.
    pub fn from_config(config: &BenchConfig) -> Result<Self> {
        let corpus = dataset::default_corpus(config.full_grid, config.corpus_size, config.master_seed)?;
        Self::new(corpus, config.master_seed)
    }
}

/// Mean squared error in mm² of `net` over normalized data, every row
/// evaluated from a zero context.
pub fn corpus_mse(net: &Network<f64>, data: &NormalizedData<f64>, scaler: &Scaler<f64>) -> Result<f64> {
    let preds = net.predict(&data.inputs)?;
    let to_mm = |m: &Matrix<f64>| -> Result<Matrix<f64>> {
        let rows: Vec<Vec<f64>> = m
            .iter_rows()
            .map(|r| {
                let d = scaler.invert(r);
                vec![d.w_mm(), d.l_mm()]
            })
            .collect();
        Ok(Matrix::from_rows(&rows).map_err(NetworkError::from)?)
    };
    Ok(metrics::mse(&to_mm(&data.targets)?, &to_mm(&preds)?)?)
}

/// Predictions for the five catalog designs paired with their references.
///
/// `trained_fingerprint` identifies the scaler the network was fitted
/// under; it must match `scaler`.
pub fn predict_use_cases(net: &Network<f64>, scaler: &Scaler<f64>, trained_fingerprint: u64) -> Result<Vec<EvalRecord>> {
    let given = scaler.fingerprint();
    if given != trained_fingerprint {
        return Err(BenchError::ScalerMismatch {
            trained: trained_fingerprint,
            given,
        });
    }
    let cases = catalog();
    let rows: Vec<Vec<f64>> = cases
        .iter()
        .map(|u| scaler.scale_input(&u.design_input()).to_vec())
        .collect();
    let preds = net.predict(&Matrix::from_rows(&rows).map_err(NetworkError::from)?)?;
    cases
        .iter()
        .zip(preds.iter_rows())
        .map(|(u, p)| {
            let d = scaler.invert(p);
            Ok(EvalRecord::new(
                u.label,
                (d.w_mm(), d.l_mm()),
                (u.target.w_mm(), u.target.l_mm()),
            )?)
        })
        .collect()
}

/// Per-step history of one trial.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialTrace {
    Epochs(Vec<EpochRecord>),
    /// Training MSE after 0, 1, 2, … basis neurons.
    Neurons(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Counted from 1.
    pub trial: usize,
    pub seed: u64,
    /// MSE in mm² over the whole corpus.
    pub mse_mm2: f64,
    pub train_mse_mm2: f64,
    pub val_mse_mm2: Option<f64>,
    pub test_mse_mm2: Option<f64>,
    pub wall_time_s: f64,
    /// Epochs run, or neurons placed by a radial design.
    pub steps: usize,
    pub stop_reason: String,
    pub predictions: Vec<EvalRecord>,
    pub average_accuracy: f64,
    pub trace: TrialTrace,
}

/// Outcome of one trial: a record, or the error that prevented one.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Completed(TrialRecord),
    Failed { trial: usize, seed: u64, error: String },
}

impl TrialOutcome {
    pub fn record(&self) -> Option<&TrialRecord> {
        match self {
            Self::Completed(r) => Some(r),
            Self::Failed { .. } => None,
        }
    }

    pub fn trial(&self) -> usize {
        match self {
            Self::Completed(r) => r.trial,
            Self::Failed { trial, .. } => *trial,
        }
    }

    /// Hard errors and diverged training both count as failures.
    pub fn is_failure(&self) -> bool {
        match self {
            Self::Completed(r) => r.stop_reason == StopReason::Diverged.as_str(),
            Self::Failed { .. } => true,
        }
    }
}

/// Runs one trial of one combination on shared data.
pub fn run_trial(combo: &ComboSpec, trial: usize, data: &BenchData, config: &BenchConfig) -> TrialOutcome {
    let seed = trial_seed(config.master_seed, &combo.label, trial);
    match run_trial_inner(combo, trial, seed, data, config) {
        Ok(r) => TrialOutcome::Completed(r),
        Err(e) => TrialOutcome::Failed {
            trial,
            seed,
            error: e.to_string(),
        },
    }
}

fn run_trial_inner(combo: &ComboSpec, trial: usize, seed: u64, data: &BenchData, config: &BenchConfig) -> Result<TrialRecord> {
    let scale = data.scaler.output_scale_mm();
    let (network, wall_time_s, steps, stop_reason, trace, split_mse) = match combo.method {
        Method::Train(algorithm) => {
            let net = Network::init(&Topology::new(combo.topology), seed)?;
            let cfg = TrainConfig::new(algorithm)
                .with_seed(seed)
                .with_max_epochs(config.max_epochs);
            let out = train(&net, &data.training, &cfg)?;
            let t = out.trace;
            (
                out.network,
                t.wall_time_s,
                t.records.len(),
                t.stop_reason.as_str().to_string(),
                TrialTrace::Epochs(t.records),
                Some((t.final_train_mse, t.final_val_mse, t.final_test_mse)),
            )
        }
        Method::Rbr { goal_mse_mm2 } => {
            let max = config.rbr_max_neurons.unwrap_or(data.normalized.len()).min(data.normalized.len());
            let params = RbrParams::new(goal_mse_mm2, scale.clone(), max).with_spread(config.rbr_spread);
            let start = Instant::now();
            let design = design_rbr(&data.normalized, &params)?;
            let elapsed = start.elapsed().as_secs_f64();
            let reason = if design.goal_met { "goal_met" } else { "neuron_budget" };
            (
                Network::from(design.net.clone()),
                elapsed,
                design.trace.len() - 1,
                reason.to_string(),
                TrialTrace::Neurons(design.trace),
                None,
            )
        }
        Method::Grnn => {
            let start = Instant::now();
            let net = design_grnn(&data.normalized, config.gr_spread)?;
            let elapsed = start.elapsed().as_secs_f64();
            let neurons = net.neurons();
            let network = Network::from(net);
            let mse = corpus_mse(&network, &data.normalized, &data.scaler)?;
            (network, elapsed, neurons, "designed".to_string(), TrialTrace::Neurons(vec![mse]), None)
        }
    };
    let mse_mm2 = corpus_mse(&network, &data.normalized, &data.scaler)?;
    // Radial designs see the whole corpus, so every split error is the corpus error.
    let (train_mse_mm2, val_mse_mm2, test_mse_mm2) = split_mse.unwrap_or((mse_mm2, None, None));
    let predictions = predict_use_cases(&network, &data.scaler, data.scaler.fingerprint())?;
    let average_accuracy = metrics::average_accuracy(&predictions)?;
    Ok(TrialRecord {
        trial,
        seed,
        mse_mm2,
        train_mse_mm2,
        val_mse_mm2,
        test_mse_mm2,
        wall_time_s,
        steps,
        stop_reason,
        predictions,
        average_accuracy,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub combo: ComboSpec,
    /// Means over completed trials.
    pub mse_mm2: f64,
    pub wall_time_s: f64,
    /// Mean predicted (W, L) in mm per use case, catalog order.
    pub mean_dims_mm: Vec<(f64, f64)>,
    pub average_accuracy: f64,
    pub trials: Vec<TrialOutcome>,
    pub stop_reasons: Vec<String>,
    pub failed_trials: usize,
    /// Every trial failed.
    pub degraded: bool,
}

impl BenchmarkRow {
    fn aggregate(combo: ComboSpec, trials: Vec<TrialOutcome>) -> Self {
        let done: Vec<&TrialRecord> = trials.iter().filter_map(TrialOutcome::record).collect();
        let n = done.len() as f64;
        let mean = |f: &dyn Fn(&TrialRecord) -> f64| {
            if done.is_empty() {
                f64::NAN
            } else {
                done.iter().map(|r| f(r)).sum::<f64>() / n
            }
        };
        let cases = catalog().len();
        let mean_dims_mm = (0..cases)
            .map(|k| (mean(&|r| r.predictions[k].predicted_w_mm), mean(&|r| r.predictions[k].predicted_l_mm)))
            .collect();
        let stop_reasons = trials
            .iter()
            .map(|t| match t {
                TrialOutcome::Completed(r) => r.stop_reason.clone(),
                TrialOutcome::Failed { .. } => "error".to_string(),
            })
            .collect();
        let failed_trials = trials.iter().filter(|t| t.is_failure()).count();
        Self {
            mse_mm2: mean(&|r| r.mse_mm2),
            wall_time_s: mean(&|r| r.wall_time_s),
            average_accuracy: mean(&|r| r.average_accuracy),
            mean_dims_mm,
            stop_reasons,
            degraded: failed_trials == trials.len(),
            failed_trials,
            combo,
            trials,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub provenance: String,
    pub config_fingerprint: String,
    pub timing_note: String,
    pub trials: usize,
    pub master_seed: u64,
}

impl BenchmarkReport {
    /// The report with every timing value zeroed, for comparisons.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.timing_note.clear();
        for row in &mut r.rows {
            row.wall_time_s = 0.0;
            for t in &mut row.trials {
                if let TrialOutcome::Completed(rec) = t {
                    rec.wall_time_s = 0.0;
                }
            }
        }
        r
    }

    pub fn row(&self, label: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.combo.label == label)
    }
}

fn fingerprint(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every combination `config.trials` times on the configured corpus.
pub fn run_matrix(combos: &[ComboSpec], config: &BenchConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let data = BenchData::from_config(config)?;
    run_matrix_on(combos, &data, config)
}

/// As [`run_matrix`], on prepared data.
pub fn run_matrix_on(combos: &[ComboSpec], data: &BenchData, config: &BenchConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    if combos.is_empty() {
        return Err(BenchError::InvalidConfig("no combinations requested".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..combos.len())
        .flat_map(|c| (1..=config.trials).map(move |t| (c, t)))
        .collect();
    let run = |&(c, t): &(usize, usize)| run_trial(&combos[c], t, data, config);
    let (outcomes, timing_note): (Vec<TrialOutcome>, String) = match config.parallelism {
        Parallelism::Serial => (
            tasks.iter().map(run).collect(),
            "serial run: trials timed one at a time".into(),
        ),
        Parallelism::Jobs(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BenchError::InvalidConfig(e.to_string()))?;
            let workers = pool.current_num_threads();
            let outcomes = pool.install(|| tasks.par_iter().map(run).collect());
            let note = if workers > 1 {
                format!("parallel run on {workers} workers: concurrent trials contend for the CPU, so times are inflated")
            } else {
                "single worker: trials timed one at a time".into()
            };
            (outcomes, note)
        }
    };
    let mut by_combo: Vec<Vec<TrialOutcome>> = vec![Vec::new(); combos.len()];
    for ((c, _), o) in tasks.iter().zip(outcomes) {
        by_combo[*c].push(o);
    }
    let rows = combos
        .iter()
        .cloned()
        .zip(by_combo)
        .map(|(combo, trials)| BenchmarkRow::aggregate(combo, trials))
        .collect();
    let provenance = format!(
        "{} samples; grid {:?}; subsample {:?}; split 70/15/15 seed {}",
        data.corpus.len(),
        data.corpus.provenance.grid,
        data.corpus.provenance.subsample,
        config.master_seed
    );
    let labels: Vec<&str> = combos.iter().map(|c| c.label.as_str()).collect();
    let config_fingerprint = fingerprint(&format!("{};combos={}", config.describe(), labels.join("|")));
    Ok(BenchmarkReport {
        rows,
        provenance,
        config_fingerprint,
        timing_note: format!("{timing_note}. Wall times depend on the machine and are not comparable across hosts."),
        trials: config.trials,
        master_seed: config.master_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Column names of the CSV report.
pub fn report_header() -> Vec<String> {
    let mut h = vec!["combo".to_string(), "MSE".into(), "ATT_s".into()];
    for u in catalog() {
        h.push(format!("W_{}", u.slug));
        h.push(format!("L_{}", u.slug));
    }
    h.push("AA".into());
    h
}

fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = 3 - x.abs().log10().floor() as i32;
    if (0..=8).contains(&digits) {
        format!("{:.*}", digits as usize, x)
    } else {
        format!("{x:.3e}")
    }
}

fn row_cells(row: &BenchmarkRow) -> Vec<String> {
    let mut cells = vec![row.combo.label.clone(), sig4(row.mse_mm2), format!("{:.3}", row.wall_time_s)];
    for (w, l) in &row.mean_dims_mm {
        cells.push(format!("{w:.2}"));
        cells.push(format!("{l:.2}"));
    }
    cells.push(format!("{:.3}", row.average_accuracy));
    cells
}

pub fn emit_report(report: &BenchmarkReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut wr = csv::Writer::from_writer(Vec::new());
            wr.write_record(report_header())?;
            for row in &report.rows {
                wr.write_record(row_cells(row))?;
            }
            let bytes = wr.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => Ok(markdown(report)),
    }
}

fn markdown(report: &BenchmarkReport) -> String {
    let cases = catalog();
    let mut out = String::from("# Benchmark report\n\n");
    out.push_str(&format!(
        "{} trial(s) per combination, master seed {}, config fingerprint `{}`.\n\n",
        report.trials, report.master_seed, report.config_fingerprint
    ));
    out.push_str(&format!("Corpus: {}.\n\n", report.provenance));
    out.push_str("MSE in mm² over the whole corpus; W and L are mean predictions in mm.\n\n");
    let mut head = vec!["Network + Training Algo.".to_string(), "MSE (mm²)".into(), "ATT (s)".into()];
    for u in &cases {
        head.push(format!("{} W (mm)", u.label));
        head.push(format!("{} L (mm)", u.label));
    }
    head.push("AA (%)".into());
    out.push_str(&format!("| {} |\n", head.join(" | ")));
    out.push_str(&format!("|{}\n", "---|".repeat(head.len())));
    for row in &report.rows {
        out.push_str(&format!("| {} |\n", row_cells(row).join(" | ")));
    }
    out.push_str("\nReference dimensions (mm):\n\n");
    for u in &cases {
        out.push_str(&format!("- {}: W {:.3}, L {:.3}\n", u.label, u.target.w_mm(), u.target.l_mm()));
    }
    let flagged: Vec<&BenchmarkRow> = report.rows.iter().filter(|r| r.failed_trials > 0).collect();
    if !flagged.is_empty() {
        out.push_str("\nFailed trials:\n\n");
        for r in flagged {
            let note = if r.degraded { " (degraded: no usable trial)" } else { "" };
            out.push_str(&format!("- {}: {} of {}{}\n", r.combo.label, r.failed_trials, r.trials.len(), note));
        }
    }
    out.push_str(&format!("\nTiming: {}\n", report.timing_note));
    out
}

/// Every trial as one CSV line, for auditing the row means.
pub fn emit_trials(report: &BenchmarkReport) -> Result<String> {
    let mut wr = csv::Writer::from_writer(Vec::new());
    let mut head: Vec<String> = [
        "combo", "trial", "seed", "mse", "train_mse", "val_mse", "test_mse", "time_s", "steps", "stop_reason",
    ]
    .map(String::from)
    .to_vec();
    for u in catalog() {
        head.push(format!("W_{}", u.slug));
        head.push(format!("L_{}", u.slug));
    }
    head.extend(["AA".to_string(), "error".to_string()]);
    wr.write_record(&head)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in &report.rows {
        for t in &row.trials {
            let mut cells = vec![row.combo.label.clone(), t.trial().to_string()];
            match t {
                TrialOutcome::Completed(r) => {
                    cells.extend([
                        r.seed.to_string(),
                        r.mse_mm2.to_string(),
                        r.train_mse_mm2.to_string(),
                        opt(r.val_mse_mm2),
                        opt(r.test_mse_mm2),
                        r.wall_time_s.to_string(),
                        r.steps.to_string(),
                        r.stop_reason.clone(),
                    ]);
                    for p in &r.predictions {
                        cells.push(p.predicted_w_mm.to_string());
                        cells.push(p.predicted_l_mm.to_string());
                    }
                    cells.push(r.average_accuracy.to_string());
                    cells.push(String::new());
                }
                TrialOutcome::Failed { seed, error, .. } => {
                    cells.push(seed.to_string());
                    cells.extend(std::iter::repeat(String::new()).take(head.len() - 4));
                    cells.push(error.clone());
                }
            }
            wr.write_record(&cells)?;
        }
    }
    let bytes = wr.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Path of one trial trace below `dir`.
pub fn trace_path(dir: &Path, combo: &ComboSpec, trial: usize) -> PathBuf {
    dir.join("traces").join(combo.slug()).join(format!("trial{trial}.csv"))
}

pub fn write_trace<W: Write>(trace: &TrialTrace, mut out: W) -> std::io::Result<()> {
    match trace {
        TrialTrace::Epochs(records) => {
            writeln!(out, "{}", crate::trainers::TRACE_HEADER)?;
            for r in records {
                let val = r.val_mse.map(|v| v.to_string()).unwrap_or_default();
                writeln!(out, "{},{},{},{},{}", r.epoch, r.train_mse, val, r.grad_norm, r.internal)?;
            }
        }
        TrialTrace::Neurons(mse) => {
            writeln!(out, "neurons,train_mse")?;
            for (k, m) in mse.iter().enumerate() {
                writeln!(out, "{k},{m}")?;
            }
        }
    }
    Ok(())
}

/// Writes `traces/<slug>/trial<k>.csv` below `dir` for every completed
/// trial; returns the files written.
pub fn emit_traces(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for row in &report.rows {
        for t in &row.trials {
            let TrialOutcome::Completed(r) = t else { continue };
            let path = trace_path(dir, &row.combo, r.trial);
            fs::create_dir_all(path.parent().expect("trace path has a parent"))?;
            let mut f = std::io::BufWriter::new(fs::File::create(&path)?);
            write_trace(&r.trace, &mut f)?;
            f.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Writes `report.csv`, `report.md`, `trials.csv` and the traces below `dir`.
pub fn write_all(report: &BenchmarkReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, text) in [
        ("report.csv", emit_report(report, ReportFormat::Csv)?),
        ("report.md", emit_report(report, ReportFormat::Markdown)?),
        ("trials.csv", emit_trials(report)?),
    ] {
        let path = dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    written.extend(emit_traces(report, dir)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::antenna::patch_dimensions;

    fn small_data() -> BenchData {
        let corpus = dataset::default_corpus::<f64>(false, 120, 3).unwrap();
        BenchData::new(corpus, 3).unwrap()
    }

    fn quick(trials: usize) -> BenchConfig {
        BenchConfig {
            trials,
            master_seed: 11,
            parallelism: Parallelism::Serial,
            max_epochs: 4,
            rbr_max_neurons: Some(10),
            ..BenchConfig::default()
        }
    }

    #[test]
    fn default_matrix_has_the_22_rows() {
        let m = default_matrix();
        assert_eq!(m.len(), 22);
        assert_eq!(m[0].label, "CF + LM");
        assert_eq!(m[10].label, "GR");
        assert_eq!(m[19].label, "LR + CGP");
        assert_eq!(m[20].label, "0.001 RBR");
        assert_eq!(m[21].label, "0.0006 RBR");
        let mut slugs: Vec<String> = m.iter().map(ComboSpec::slug).collect();
        slugs.sort();
        slugs.dedup();
        assert_eq!(slugs.len(), 22);
        let trained = m.iter().filter(|c| matches!(c.method, Method::Train(_))).count();
        assert_eq!(trained, 19);
        assert!(m.iter().all(|c| !matches!(c.method, Method::Train(AlgorithmKind::Gd | AlgorithmKind::Gdm | AlgorithmKind::Gdx))));
    }

    #[test]
    fn combo_parsing() {
        for text in ["CF+LM", "cf + lm", "cf_lm", "CF + LM"] {
            assert_eq!(text.parse::<ComboSpec>().unwrap().label, "CF + LM");
        }
        assert_eq!("GR".parse::<ComboSpec>().unwrap(), ComboSpec::grnn());
        assert_eq!("0.0006 RBR".parse::<ComboSpec>().unwrap().method, Method::Rbr { goal_mse_mm2: 0.0006 });
        assert_eq!("rbr_0.001".parse::<ComboSpec>().unwrap().label, "0.001 RBR");
        assert_eq!("FF+GDX".parse::<ComboSpec>().unwrap().label, "FF + GDX");
        for bad in ["RBR+LM", "GR+SCG", "XX+LM", "CF+ZZ", "", "-1 RBR"] {
            assert!(bad.parse::<ComboSpec>().is_err(), "{bad}");
        }
        assert_eq!(parse_combos("CF+LM, GR").unwrap().len(), 2);
        assert!(parse_combos(" , ").is_err());
        for c in default_matrix() {
            assert_eq!(c.label.parse::<ComboSpec>().unwrap(), c);
            assert_eq!(c.slug().parse::<ComboSpec>().unwrap(), c);
        }
    }

    #[test]
    fn trial_seeds_are_distinct_and_stable() {
        let a = trial_seed(1, "CF + LM", 1);
        assert_eq!(a, trial_seed(1, "CF + LM", 1));
        assert_ne!(a, trial_seed(1, "CF + LM", 2));
        assert_ne!(a, trial_seed(2, "CF + LM", 1));
        assert_ne!(a, trial_seed(1, "EL + LM", 1));
    }

    #[test]
    fn oracle_network_scores_one_hundred() {
        // GR with a tiny spread reproduces a training sample exactly; place the
        // catalog designs themselves in the corpus
        let samples: Vec<_> = catalog()
            .iter()
            .map(|u| dataset::Sample::from_model(u.design_input()).unwrap())
            .collect();
        let corpus = Dataset::new(samples, Default::default()).unwrap();
        let scaler = Scaler::fit(&corpus).unwrap();
        let net: Network<f64> = design_grnn(&scaler.apply(&corpus), 1e-3).unwrap().into();
        let recs = predict_use_cases(&net, &scaler, scaler.fingerprint()).unwrap();
        for (r, u) in recs.iter().zip(catalog()) {
            let truth = patch_dimensions(&u.design_input::<f64>()).unwrap();
            assert!((r.predicted_w_mm - truth.w_mm()).abs() < 1e-9);
            assert!((r.predicted_l_mm - truth.l_mm()).abs() < 1e-9);
        }
        let mut perfect = recs.clone();
        for r in &mut perfect {
            *r = EvalRecord::new(&r.label, (r.target_w_mm, r.target_l_mm), (r.target_w_mm, r.target_l_mm)).unwrap();
        }
        assert_eq!(metrics::average_accuracy(&perfect).unwrap(), 100.0);
    }

    #[test]
    fn scaler_mismatch_is_reported() {
        let data = small_data();
        let net: Network<f64> = design_grnn(&data.normalized, 0.1).unwrap().into();
        let err = predict_use_cases(&net, &data.scaler, data.scaler.fingerprint() ^ 1).unwrap_err();
        assert!(matches!(err, BenchError::ScalerMismatch { .. }));
    }

    #[test]
    fn matrix_rows_average_their_trials() {
        let data = small_data();
        let combos = parse_combos("CF+LM,GR,0.5 RBR").unwrap();
        let report = run_matrix_on(&combos, &data, &quick(2)).unwrap();
        assert_eq!(report.rows.len(), 3);
        for row in &report.rows {
            assert_eq!(row.trials.len(), 2);
            assert!(!row.degraded);
            let recs: Vec<&TrialRecord> = row.trials.iter().filter_map(TrialOutcome::record).collect();
            let mean_mse = recs.iter().map(|r| r.mse_mm2).sum::<f64>() / 2.0;
            let mean_aa = recs.iter().map(|r| r.average_accuracy).sum::<f64>() / 2.0;
            assert!((row.mse_mm2 - mean_mse).abs() <= 1e-12 * mean_mse.max(1.0));
            assert!((row.average_accuracy - mean_aa).abs() < 1e-12);
            let w0 = recs.iter().map(|r| r.predictions[0].predicted_w_mm).sum::<f64>() / 2.0;
            assert!((row.mean_dims_mm[0].0 - w0).abs() < 1e-12);
        }
        let lm = report.row("CF + LM").unwrap();
        let TrialOutcome::Completed(r) = &lm.trials[0] else { panic!() };
        assert!(matches!(&r.trace, TrialTrace::Epochs(e) if e.len() == r.steps));
        assert!(r.val_mse_mm2.is_some() && r.test_mse_mm2.is_some());
    }

    #[test]
    fn serial_and_parallel_runs_agree() {
        let data = small_data();
        let combos = parse_combos("FF+SCG,LR+RP,GR").unwrap();
        let serial = run_matrix_on(&combos, &data, &quick(2)).unwrap();
        let parallel = run_matrix_on(
            &combos,
            &data,
            &BenchConfig {
                parallelism: Parallelism::Jobs(3),
                ..quick(2)
            },
        )
        .unwrap();
        assert_eq!(serial.without_timing(), parallel.without_timing());
    }

    #[test]
    fn report_layout() {
        let data = small_data();
        let report = run_matrix_on(&parse_combos("CF+LM,GR").unwrap(), &data, &quick(1)).unwrap();
        let csv_text = emit_report(&report, ReportFormat::Csv).unwrap();
        let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
        let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, report_header());
        assert_eq!(header.len(), 3 + 10 + 1);
        let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 2);
        for (rec, row) in rows.iter().zip(&report.rows) {
            assert_eq!(&rec[0], row.combo.label);
            let mse: f64 = rec[1].parse().unwrap();
            assert!((mse - row.mse_mm2).abs() <= 1e-3 * row.mse_mm2);
            let aa: f64 = rec[13].parse().unwrap();
            assert!((aa - row.average_accuracy).abs() <= 5e-4);
        }
        let md = emit_report(&report, ReportFormat::Markdown).unwrap();
        assert!(md.lines().any(|l| l.starts_with("| CF + LM |")));
        assert!(md.contains("not comparable across hosts"));
    }

    #[test]
    fn four_significant_digits() {
        assert_eq!(sig4(0.03456789), "0.03457");
        assert_eq!(sig4(5.1712), "5.171");
        assert_eq!(sig4(1234.5), "1234");
        assert_eq!(sig4(0.0006), "0.0006000");
        assert_eq!(sig4(1.5e-9), "1.500e-9");
        assert_eq!(sig4(52345.0), "5.234e4");
    }

    #[test]
    fn traces_are_written_per_trial() {
        let data = small_data();
        let report = run_matrix_on(&parse_combos("EL+OSS,0.5 RBR,GR").unwrap(), &data, &quick(2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_all(&report, dir.path()).unwrap();
        assert_eq!(files.len(), 3 + 6);
        let rbr = fs::read_to_string(trace_path(dir.path(), &"0.5 RBR".parse().unwrap(), 2)).unwrap();
        assert!(rbr.starts_with("neurons,train_mse\n0,"));
        let mse: Vec<f64> = rbr.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        assert!(mse.windows(2).all(|w| w[1] <= w[0]));
        let el = fs::read_to_string(trace_path(dir.path(), &"EL+OSS".parse().unwrap(), 1)).unwrap();
        assert!(el.starts_with(crate::trainers::TRACE_HEADER));
        let trials = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
        assert_eq!(trials.lines().count(), 1 + 6);
    }

    #[test]
    fn invalid_configs() {
        let data = small_data();
        assert!(run_matrix_on(&[], &data, &quick(1)).is_err());
        assert!(run_matrix_on(&default_matrix()[..1], &data, &quick(0)).is_err());
        let bad = BenchConfig {
            gr_spread: 0.0,
            ..quick(1)
        };
        assert!(bad.validate().is_err());
    }
}
