//! Training algorithms for the layered networks behind one contract: an
//! [`Optimizer`] advances a [`Point`] on an [`Objective`] by one epoch, and
//! [`train`] runs the epoch loop with its stop conditions.

mod conjugate;
mod gradient_descent;
mod line_search;
mod lm;
mod objective;
mod rprop;
mod scg;

pub use conjugate::{cg_beta, oss_direction, powell_beale_restart, CgVariant, DirectionRule, LineSearchMethod};
pub use gradient_descent::{AdaptiveMomentum, AdaptiveParams, GradientDescent, Momentum};
pub use line_search::{cubic_minimizer, line_search, LineSearchError, LineSearchParams, LineSearchResult};
pub use lm::{LevenbergMarquardt, LmParams};
pub use objective::{LeastSquaresObjective, NetworkObjective, Objective, QuadraticObjective};
pub use rprop::{Rprop, RpropParams};
pub use scg::{Scg, ScgParams};

use crate::dataset::NormalizedData;
use crate::linalg::LinalgError;
use crate::networks::{Network, NetworkError};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("objective does not provide {0}")]
    Unsupported(&'static str),
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Why an optimizer could not complete an epoch.
#[derive(Debug, Error)]
pub enum StepError {
    #[error("line search failed along steepest descent")]
    LineSearchFailure,
    #[error("numerical divergence: {0}")]
    Diverged(String),
    #[error(transparent)]
    Objective(#[from] TrainError),
}

/// Weights with the objective value and gradient there.
#[derive(Debug, Clone, PartialEq)]
pub struct Point<T> {
    pub w: Vec<T>,
    pub f: T,
    pub g: Vec<T>,
}

impl<T: Scalar> Point<T> {
    pub fn evaluate(obj: &mut dyn Objective<T>, w: Vec<T>) -> Result<Self, TrainError> {
        let mut g = vec![T::zero(); w.len()];
        let f = obj.value_and_gradient(&w, &mut g)?;
        Ok(Self { w, f, g })
    }

    /// Recomputes value and gradient at the current weights.
    pub fn refresh(&mut self, obj: &mut dyn Objective<T>) -> Result<(), TrainError> {
        self.f = obj.value_and_gradient(&self.w, &mut self.g)?;
        Ok(())
    }

    pub fn grad_norm(&self) -> T {
        crate::linalg::norm2(&self.g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Algorithm-specific scalar: damping, scale, step length or rate.
    pub internal: f64,
    /// False when the epoch left the weights unchanged.
    pub accepted: bool,
    pub restarted: bool,
}

impl StepReport {
    pub fn accepted(internal: f64) -> Self {
        Self {
            internal,
            accepted: true,
            restarted: false,
        }
    }
}

pub trait Optimizer<T: Scalar> {
    /// Performs one epoch, leaving `point` at the new weights.
    fn step(&mut self, obj: &mut dyn Objective<T>, point: &mut Point<T>) -> Result<StepReport, StepError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmKind {
    Gd,
    Gdm,
    Gdx,
    Rp,
    Scg,
    Cgf,
    Cgp,
    Cgb,
    Oss,
    Lm,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 10] = [
        Self::Gd,
        Self::Gdm,
        Self::Gdx,
        Self::Rp,
        Self::Scg,
        Self::Cgf,
        Self::Cgp,
        Self::Cgb,
        Self::Oss,
        Self::Lm,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Self::Gd => "gd",
            Self::Gdm => "gdm",
            Self::Gdx => "gdx",
            Self::Rp => "rp",
            Self::Scg => "scg",
            Self::Cgf => "cgf",
            Self::Cgp => "cgp",
            Self::Cgb => "cgb",
            Self::Oss => "oss",
            Self::Lm => "lm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Gd => "GD",
            Self::Gdm => "GDM",
            Self::Gdx => "GDX",
            Self::Rp => "RP",
            Self::Scg => "SCG",
            Self::Cgf => "CGF",
            Self::Cgp => "CGP",
            Self::Cgb => "CGB",
            Self::Oss => "OSS",
            Self::Lm => "LM",
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for AlgorithmKind {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.code() == lower)
            .ok_or_else(|| TrainError::UnknownAlgorithm(s.to_string()))
    }
}

/// An algorithm with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Algorithm {
    Gd { lr: f64 },
    Gdm { lr: f64, momentum: f64 },
    Gdx(AdaptiveParams<f64>),
    Rp(RpropParams<f64>),
    Scg(ScgParams<f64>),
    Cg(CgVariant),
    Oss,
    Lm(LmParams<f64>),
}

impl Algorithm {
    /// Hyperparameters used when nothing else is configured.
    pub fn default_for(kind: AlgorithmKind) -> Self {
        match kind {
            AlgorithmKind::Gd => Self::Gd { lr: 0.01 },
            AlgorithmKind::Gdm => Self::Gdm { lr: 0.01, momentum: 0.9 },
            AlgorithmKind::Gdx => Self::Gdx(AdaptiveParams {
                lr: 0.01,
                momentum: 0.9,
                increase: 1.05,
                decrease: 0.7,
                max_perf_increase: 1.04,
            }),
            AlgorithmKind::Rp => Self::Rp(RpropParams {
                delta0: 0.07,
                increase: 1.2,
                decrease: 0.5,
                delta_max: 50.0,
                delta_min: 1e-6,
            }),
            AlgorithmKind::Scg => Self::Scg(ScgParams {
                sigma: 5e-5,
                lambda0: 5e-7,
            }),
            AlgorithmKind::Cgf => Self::Cg(CgVariant::FletcherReeves),
            AlgorithmKind::Cgp => Self::Cg(CgVariant::PolakRibiere),
            AlgorithmKind::Cgb => Self::Cg(CgVariant::PowellBeale),
            AlgorithmKind::Oss => Self::Oss,
            AlgorithmKind::Lm => Self::Lm(LmParams {
                mu0: 1e-3,
                factor: 10.0,
                mu_min: 1e-12,
                mu_max: 1e10,
            }),
        }
    }

    pub fn kind(&self) -> AlgorithmKind {
        match self {
            Self::Gd { .. } => AlgorithmKind::Gd,
            Self::Gdm { .. } => AlgorithmKind::Gdm,
            Self::Gdx(_) => AlgorithmKind::Gdx,
            Self::Rp(_) => AlgorithmKind::Rp,
            Self::Scg(_) => AlgorithmKind::Scg,
            Self::Cg(CgVariant::FletcherReeves) => AlgorithmKind::Cgf,
            Self::Cg(CgVariant::PolakRibiere) => AlgorithmKind::Cgp,
            Self::Cg(CgVariant::PowellBeale) => AlgorithmKind::Cgb,
            Self::Oss => AlgorithmKind::Oss,
            Self::Lm(_) => AlgorithmKind::Lm,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(TrainError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            Self::Gd { lr } => positive("learning rate", lr),
            Self::Gdm { lr, momentum } => {
                positive("learning rate", lr)?;
                if (0.0..1.0).contains(&momentum) {
                    Ok(())
                } else {
                    Err(TrainError::InvalidConfig(format!("momentum must lie in [0, 1), got {momentum}")))
                }
            }
            Self::Gdx(p) => {
                positive("learning rate", p.lr)?;
                positive("rate increase", p.increase)?;
                positive("rate decrease", p.decrease)?;
                positive("max performance increase", p.max_perf_increase)
            }
            Self::Rp(p) => {
                positive("initial step", p.delta0)?;
                positive("step increase", p.increase)?;
                positive("step decrease", p.decrease)?;
                positive("minimum step", p.delta_min)?;
                if p.delta_max < p.delta_min {
                    return Err(TrainError::InvalidConfig("maximum step below minimum".into()));
                }
                Ok(())
            }
            Self::Scg(p) => {
                positive("sigma", p.sigma)?;
                positive("lambda", p.lambda0)
            }
            Self::Lm(p) => {
                positive("initial damping", p.mu0)?;
                positive("damping factor", p.factor - 1.0)?;
                positive("minimum damping", p.mu_min)?;
                positive("maximum damping", p.mu_max)
            }
            Self::Cg(_) | Self::Oss => Ok(()),
        }
    }

    /// Fresh optimizer state for a problem of `dim` parameters.
    pub fn build<T: Scalar>(&self, dim: usize) -> Box<dyn Optimizer<T>> {
        let c = |v: f64| T::lit(v);
        match *self {
            Self::Gd { lr } => Box::new(GradientDescent { lr: c(lr) }),
            Self::Gdm { lr, momentum } => Box::new(Momentum::new(c(lr), c(momentum), dim)),
            Self::Gdx(p) => Box::new(AdaptiveMomentum::new(
                AdaptiveParams {
                    lr: c(p.lr),
                    momentum: c(p.momentum),
                    increase: c(p.increase),
                    decrease: c(p.decrease),
                    max_perf_increase: c(p.max_perf_increase),
                },
                dim,
            )),
            Self::Rp(p) => Box::new(Rprop::new(
                RpropParams {
                    delta0: c(p.delta0),
                    increase: c(p.increase),
                    decrease: c(p.decrease),
                    delta_max: c(p.delta_max),
                    delta_min: c(p.delta_min),
                },
                dim,
            )),
            Self::Scg(p) => Box::new(Scg::new(ScgParams {
                sigma: c(p.sigma),
                lambda0: c(p.lambda0),
            })),
            Self::Cg(v) => Box::new(LineSearchMethod::new(DirectionRule::Conjugate(v))),
            Self::Oss => Box::new(LineSearchMethod::new(DirectionRule::OneStepSecant)),
            Self::Lm(p) => Box::new(LevenbergMarquardt::new(LmParams {
                mu0: c(p.mu0),
                factor: c(p.factor),
                mu_min: c(p.mu_min),
                mu_max: c(p.mu_max),
            })),
        }
    }
}

impl From<AlgorithmKind> for Algorithm {
    fn from(kind: AlgorithmKind) -> Self {
        Self::default_for(kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub max_epochs: usize,
    /// Training MSE in mm² at or below which training stops.
    pub mse_goal: f64,
    pub min_gradient: f64,
    pub max_validation_failures: usize,
    /// Fixes the presentation order of the training samples.
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(algorithm: impl Into<Algorithm>) -> Self {
        Self {
            algorithm: algorithm.into(),
            max_epochs: 1000,
            mse_goal: 0.0,
            min_gradient: 1e-7,
            max_validation_failures: 6,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_epochs(mut self, n: usize) -> Self {
        self.max_epochs = n;
        self
    }

    pub fn with_goal(mut self, goal: f64) -> Self {
        self.mse_goal = goal;
        self
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidConfig("max_epochs must be at least 1".into()));
        }
        if !(self.mse_goal >= 0.0) {
            return Err(TrainError::InvalidConfig(format!("mse_goal must be ≥ 0, got {}", self.mse_goal)));
        }
        if !(self.min_gradient >= 0.0) {
            return Err(TrainError::InvalidConfig(format!("min_gradient must be ≥ 0, got {}", self.min_gradient)));
        }
        if self.max_validation_failures == 0 {
            return Err(TrainError::InvalidConfig("max_validation_failures must be at least 1".into()));
        }
        self.algorithm.validate()
    }
}

/// Normalized splits plus the millimetre scale of each output.
#[derive(Debug, Clone)]
pub struct TrainingData<T> {
    pub train: NormalizedData<T>,
    pub validation: Option<NormalizedData<T>>,
    pub test: Option<NormalizedData<T>>,
    pub output_scale: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopReason {
    GoalMet,
    MaxEpochs,
    MinGradient,
    ValidationStop,
    LineSearchFailure,
    Diverged,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::GoalMet => "goal_met",
            Self::MaxEpochs => "max_epochs",
            Self::MinGradient => "min_gradient",
            Self::ValidationStop => "validation_stop",
            Self::LineSearchFailure => "line_search_failure",
            Self::Diverged => "diverged",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
    pub grad_norm: f64,
    pub internal: f64,
}

pub const TRACE_HEADER: &str = "epoch,train_mse,val_mse,grad_norm,internal";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// One record per completed epoch, numbered from 0.
    pub records: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    pub wall_time_s: f64,
    /// Training MSE (mm²) of the initial weights.
    pub initial_train_mse: f64,
    /// Epoch whose weights were returned after a validation stop.
    pub best_epoch: Option<usize>,
    /// Training, validation and test MSE (mm²) of the returned weights.
    pub final_train_mse: f64,
    pub final_val_mse: Option<f64>,
    pub final_test_mse: Option<f64>,
}

impl TrainTrace {
    pub fn epochs(&self) -> usize {
        self.records.len()
    }

    pub fn write_csv_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            let val = r.val_mse.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(out, "{},{:e},{},{:e},{:e}", r.epoch, r.train_mse, val, r.grad_norm, r.internal)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub network: Network<T>,
    pub trace: TrainTrace,
}

/// Trains a copy of `net` on `data.train` until a stop condition holds.
///
/// Stop conditions are checked after every epoch: goal met, gradient below
/// the minimum, too many consecutive validation increases (weights of the
/// best validation epoch are restored), epoch budget, line-search failure
/// and numerical divergence (last finite weights kept). A vanishing
/// gradient at the initial weights stops before any epoch.
pub fn train<T: Scalar>(net: &Network<T>, data: &TrainingData<T>, config: &TrainConfig) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    let layered = net.as_layered().ok_or_else(|| {
        TrainError::UnsupportedTopology(format!("{} networks are designed from data, not trained", net.kind()))
    })?;

    let mut order: Vec<usize> = (0..data.train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut obj = NetworkObjective::new(layered, data.train.select(&order), &data.output_scale)?;
    let mut val_obj = match &data.validation {
        Some(v) if !v.is_empty() => Some(NetworkObjective::new(layered, v.clone(), &data.output_scale)?),
        _ => None,
    };
    let mut optimizer = config.algorithm.build::<T>(obj.dim());

    let start = Instant::now();
    let mut point = Point::evaluate(&mut obj, layered.params())?;
    let initial_train_mse = obj.mse_mm2(point.f).as_f64();
    let goal = config.mse_goal;
    let min_grad = T::lit(config.min_gradient);

    let mut records = Vec::new();
    let mut best: Option<(f64, Vec<T>, usize)> = None;
    let mut failures = 0;
    let mut restore_best = false;
    let stop_reason = if !point.f.is_finite() {
        StopReason::Diverged
    } else if point.grad_norm() <= min_grad {
        StopReason::MinGradient
    } else {
        let mut reason = StopReason::MaxEpochs;
        for epoch in 0..config.max_epochs {
            let previous = point.clone();
            let report = match optimizer.step(&mut obj, &mut point) {
                Ok(r) => r,
                Err(StepError::LineSearchFailure) => {
                    point = previous;
                    reason = StopReason::LineSearchFailure;
                    break;
                }
                Err(StepError::Diverged(_)) => {
                    point = previous;
                    reason = StopReason::Diverged;
                    break;
                }
                Err(StepError::Objective(e)) => return Err(e),
            };
            if !point.f.is_finite() || point.w.iter().any(|w| !w.is_finite()) {
                point = previous;
                reason = StopReason::Diverged;
                break;
            }
            let train_mse = obj.mse_mm2(point.f).as_f64();
            let val_mse = match &mut val_obj {
                Some(v) => {
                    let loss = v.value(&point.w)?;
                    Some(v.mse_mm2(loss).as_f64())
                }
                None => None,
            };
            let grad_norm = point.grad_norm();
            records.push(EpochRecord {
                epoch,
                train_mse,
                val_mse,
                grad_norm: grad_norm.as_f64(),
                internal: report.internal,
            });
            if train_mse <= goal {
                reason = StopReason::GoalMet;
                break;
            }
            if grad_norm <= min_grad {
                reason = StopReason::MinGradient;
                break;
            }
            if let Some(v) = val_mse {
                match &best {
                    Some((b, _, _)) if v >= *b => {
                        if v > *b {
                            failures += 1;
                        }
                    }
                    _ => {
                        best = Some((v, point.w.clone(), epoch));
                        failures = 0;
                    }
                }
                if failures >= config.max_validation_failures {
                    reason = StopReason::ValidationStop;
                    restore_best = true;
                    break;
                }
            }
        }
        reason
    };
    let wall_time_s = start.elapsed().as_secs_f64();

    let (weights, best_epoch) = match (restore_best, best) {
        (true, Some((_, w, e))) => (w, Some(e)),
        _ => (point.w, None),
    };
    let mut network = net.clone();
    network.set_params(&weights)?;
    let final_loss = obj.value(&weights)?;
    let final_train_mse = obj.mse_mm2(final_loss).as_f64();
    let final_val_mse = match &mut val_obj {
        Some(v) => {
            let loss = v.value(&weights)?;
            Some(v.mse_mm2(loss).as_f64())
        }
        None => None,
    };
    let final_test_mse = match &data.test {
        Some(t) if !t.is_empty() => {
            let mut o = NetworkObjective::new(layered, t.clone(), &data.output_scale)?;
            let loss = o.value(&weights)?;
            Some(o.mse_mm2(loss).as_f64())
        }
        _ => None,
    };
    Ok(TrainOutcome {
        network,
        trace: TrainTrace {
            records,
            stop_reason,
            wall_time_s,
            initial_train_mse,
            best_epoch,
            final_train_mse,
            final_val_mse,
            final_test_mse,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::networks::{Topology, TopologyKind};
    use rand::Rng;

    fn toy(n: usize, seed: u64) -> NormalizedData<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let targets = Matrix::from_vec(
            n,
            2,
            inputs
                .iter_rows()
                .flat_map(|x: &[f64]| [0.5 * x[0] - 0.3 * x[1] * x[0], (x[0] + x[1]).tanh() * 0.7])
                .collect(),
        )
        .unwrap();
        NormalizedData { inputs, targets }
    }

    fn data() -> TrainingData<f64> {
        TrainingData {
            train: toy(60, 1),
            validation: Some(toy(20, 2)),
            test: Some(toy(20, 3)),
            output_scale: vec![80.0, 60.0],
        }
    }

    fn ff(seed: u64) -> Network<f64> {
        Network::init(&Topology::new(TopologyKind::FeedForward), seed).unwrap()
    }

    #[test]
    fn parse_algorithms() {
        assert_eq!("LM".parse::<AlgorithmKind>().unwrap(), AlgorithmKind::Lm);
        assert_eq!("cgb".parse::<AlgorithmKind>().unwrap(), AlgorithmKind::Cgb);
        assert!("adam".parse::<AlgorithmKind>().is_err());
        for k in AlgorithmKind::ALL {
            assert_eq!(Algorithm::default_for(k).kind(), k);
            Algorithm::default_for(k).validate().unwrap();
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::new(AlgorithmKind::Lm).with_max_epochs(0).validate().is_err());
        assert!(TrainConfig::new(AlgorithmKind::Lm).with_goal(-1.0).validate().is_err());
        assert!(TrainConfig::new(Algorithm::Gd { lr: 0.0 }).validate().is_err());
    }

    #[test]
    fn single_epoch_budget() {
        for kind in AlgorithmKind::ALL {
            let out = train(&ff(1), &data(), &TrainConfig::new(kind).with_max_epochs(1)).unwrap();
            assert_eq!(out.trace.epochs(), 1, "{kind}");
            assert_eq!(out.trace.stop_reason, StopReason::MaxEpochs, "{kind}");
        }
    }

    #[test]
    fn huge_goal_met_after_first_epoch() {
        let out = train(&ff(1), &data(), &TrainConfig::new(AlgorithmKind::Rp).with_goal(1e30)).unwrap();
        assert_eq!(out.trace.epochs(), 1);
        assert_eq!(out.trace.stop_reason, StopReason::GoalMet);
        assert!(out.trace.records[0].train_mse <= 1e30);
    }

    #[test]
    fn zero_gradient_stops_immediately() {
        let net = ff(1);
        let mut d = data();
        d.train.targets = net.predict(&d.train.inputs).unwrap();
        let out = train(&net, &d, &TrainConfig::new(AlgorithmKind::Scg)).unwrap();
        assert_eq!(out.trace.stop_reason, StopReason::MinGradient);
        assert_eq!(out.trace.epochs(), 0);
    }

    #[test]
    fn radial_networks_are_rejected() {
        let d = data();
        let gr: Network<f64> = crate::networks::design_grnn(&d.train, 0.1).unwrap().into();
        assert!(matches!(
            train(&gr, &d, &TrainConfig::new(AlgorithmKind::Lm)),
            Err(TrainError::UnsupportedTopology(_))
        ));
    }

    #[test]
    fn lm_accepted_epochs_strictly_decrease() {
        let out = train(&ff(2), &data(), &TrainConfig::new(AlgorithmKind::Lm).with_max_epochs(60)).unwrap();
        let mut last = out.trace.initial_train_mse;
        for r in &out.trace.records {
            assert!(r.train_mse < last, "epoch {}", r.epoch);
            last = r.train_mse;
        }
        assert!(out.trace.final_train_mse < out.trace.initial_train_mse / 10.0);
    }

    #[test]
    fn validation_stop_restores_best_weights() {
        // tiny noisy training set against a different validation target
        let mut d = data();
        d.train = toy(12, 9);
        d.validation = Some(NormalizedData {
            inputs: toy(20, 2).inputs,
            targets: toy(20, 2).targets.map(|v| -v),
        });
        let mut cfg = TrainConfig::new(AlgorithmKind::Rp);
        cfg.min_gradient = 0.0;
        let out = train(&ff(3), &d, &cfg).unwrap();
        assert_eq!(out.trace.stop_reason, StopReason::ValidationStop);
        assert!(out.trace.records.len() > cfg.max_validation_failures);
        let min = out
            .trace
            .records
            .iter()
            .filter_map(|r| r.val_mse)
            .fold(f64::INFINITY, f64::min);
        let returned = out.trace.final_val_mse.unwrap();
        assert!((returned - min).abs() <= 1e-12 * min.max(1.0), "{returned} vs {min}");
        let best = out.trace.best_epoch.unwrap();
        assert_eq!(out.trace.records[best].val_mse, Some(min));
    }

    #[test]
    fn training_is_deterministic() {
        for kind in [AlgorithmKind::Lm, AlgorithmKind::Scg, AlgorithmKind::Cgb, AlgorithmKind::Oss] {
            let cfg = TrainConfig::new(kind).with_max_epochs(25).with_seed(4);
            let net = Network::init(&Topology::new(TopologyKind::LayerRecurrent), 8).unwrap();
            let a = train(&net, &data(), &cfg).unwrap();
            let b = train(&net, &data(), &cfg).unwrap();
            assert_eq!(a.network.params().unwrap(), b.network.params().unwrap(), "{kind}");
            assert_eq!(a.trace.records, b.trace.records);
            assert_eq!(a.trace.stop_reason, b.trace.stop_reason);
        }
    }

    #[test]
    fn every_algorithm_reduces_the_loss() {
        for kind in AlgorithmKind::ALL {
            let out = train(&ff(5), &data(), &TrainConfig::new(kind).with_max_epochs(40)).unwrap();
            assert!(
                out.trace.final_train_mse < out.trace.initial_train_mse,
                "{kind}: {} → {}",
                out.trace.initial_train_mse,
                out.trace.final_train_mse
            );
        }
    }

    pub(crate) fn spd_quadratic(dim: usize, seed: u64) -> QuadraticObjective<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = Matrix::from_vec(dim, dim, (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut a = m.gram();
        for i in 0..dim {
            for j in 0..dim {
                a[(i, j)] /= dim as f64;
            }
            a[(i, i)] += 1.0;
        }
        QuadraticObjective {
            a,
            b: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    #[test]
    fn quadratic_oracle_convergence() {
        // exact-arithmetic conjugate methods finish a 10-dimensional quadratic
        // in 10 steps; allow two more for rounding
        for kind in [AlgorithmKind::Cgf, AlgorithmKind::Cgp, AlgorithmKind::Cgb, AlgorithmKind::Scg, AlgorithmKind::Oss] {
            for seed in 0..5 {
                let mut obj = spd_quadratic(10, seed);
                let mut opt = Algorithm::default_for(kind).build::<f64>(10);
                let mut p = Point::evaluate(&mut obj, vec![0.0; 10]).unwrap();
                let mut steps = 0;
                while p.grad_norm() >= 1e-8 && steps < 12 {
                    opt.step(&mut obj, &mut p).unwrap_or_else(|e| panic!("{kind} seed {seed}: {e}"));
                    steps += 1;
                }
                assert!(p.grad_norm() < 1e-8, "{kind} seed {seed}: ‖g‖ = {:e}", p.grad_norm());
            }
        }
    }

    #[test]
    fn trace_csv_layout() {
        let out = train(&ff(1), &data(), &TrainConfig::new(AlgorithmKind::Rp).with_max_epochs(3)).unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,"));
        assert_eq!(lines[3].split(',').count(), 5);
    }
}
