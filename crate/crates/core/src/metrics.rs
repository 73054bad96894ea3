//! Evaluation formulas: mean squared error and the per-value accuracy score
//! aggregated into a report's average-accuracy column.

use crate::linalg::Matrix;
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("target must be positive, got {0}")]
    InvalidTarget(f64),
    #[error("empty input")]
    EmptyInput,
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

/// Mean of squared elementwise errors over all `N × outputs` entries.
pub fn mse<T: Scalar>(targets: &Matrix<T>, preds: &Matrix<T>) -> Result<T> {
    if targets.rows() != preds.rows() || targets.cols() != preds.cols() {
        return Err(MetricsError::ShapeMismatch(format!(
            "targets {}x{} vs predictions {}x{}",
            targets.rows(),
            targets.cols(),
            preds.rows(),
            preds.cols()
        )));
    }
    if targets.rows() == 0 || targets.cols() == 0 {
        return Err(MetricsError::EmptyInput);
    }
    let n = T::from_usize(targets.as_slice().len()).unwrap();
    let sum: T = targets
        .as_slice()
        .iter()
        .zip(preds.as_slice())
        .map(|(&t, &p)| (t - p) * (t - p))
        .sum();
    Ok(sum / n)
}

/// Accuracy score `|y_o − |y_o − y_p|| / y_o × 100`.
///
/// Over- and under-prediction by the same margin score the same. Nothing is
/// clamped: because of the outer absolute value, an error larger than the
/// target itself raises the score again (|10 − 25| / 10 → 150 % for
/// `y_o = 10, y_p = 35`).
pub fn accuracy_pct<T: Scalar>(y_o: T, y_p: T) -> Result<T> {
    if !(y_o > T::zero()) {
        return Err(MetricsError::InvalidTarget(y_o.as_f64()));
    }
    Ok((y_o - (y_o - y_p).abs()).abs() / y_o * T::lit(100.0))
}

/// Conventional relative error `|y_o − y_p| / y_o × 100`. Not part of the
/// reported score; exported for sanity dashboards.
pub fn relative_error_pct<T: Scalar>(y_o: T, y_p: T) -> Result<T> {
    if !(y_o > T::zero()) {
        return Err(MetricsError::InvalidTarget(y_o.as_f64()));
    }
    Ok((y_o - y_p).abs() / y_o * T::lit(100.0))
}

/// Prediction vs reference for one use case, in millimeters.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub label: String,
    pub predicted_w_mm: f64,
    pub predicted_l_mm: f64,
    pub target_w_mm: f64,
    pub target_l_mm: f64,
    pub accuracy_w: f64,
    pub accuracy_l: f64,
}

impl EvalRecord {
    pub fn new(label: impl Into<String>, predicted: (f64, f64), target: (f64, f64)) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            predicted_w_mm: predicted.0,
            predicted_l_mm: predicted.1,
            target_w_mm: target.0,
            target_l_mm: target.1,
            accuracy_w: accuracy_pct(target.0, predicted.0)?,
            accuracy_l: accuracy_pct(target.1, predicted.1)?,
        })
    }
}

/// Arithmetic mean of both per-output accuracies over all records.
pub fn average_accuracy(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let sum: f64 = records.iter().map(|r| r.accuracy_w + r.accuracy_l).sum();
    Ok(sum / (2 * records.len()) as f64)
}
