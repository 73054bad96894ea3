//! Gaussian radial networks built directly from data: the greedy reduced
//! radial basis design and the generalized regression (kernel average)
//! network.

use super::{NetworkError, Result, Topology, TopologyKind};
use crate::dataset::NormalizedData;
use crate::linalg::{least_squares, Matrix};
use crate::scalar::Scalar;

/// Default spread of the reduced radial basis design, in normalized units.
pub const DEFAULT_RBR_SPREAD: f64 = 0.2;
/// Default spread of the generalized regression network, in normalized units.
pub const DEFAULT_GR_SPREAD: f64 = 0.05;

/// `b` such that `exp(−(b·spread)²) = 0.5`.
pub fn gaussian_coefficient<T: Scalar>(spread: T) -> T {
    T::lit(std::f64::consts::LN_2).sqrt() / spread
}

#[derive(Debug, Clone, PartialEq)]
pub enum RadialOutput<T> {
    /// `y = Σ_i w_i φ_i(x) + bias`; `weights` is `centers × outputs`.
    Linear { weights: Matrix<T>, bias: Vec<T> },
    /// `y = Σ_i t_i φ_i(x) / Σ_i φ_i(x)`; `targets` is `centers × outputs`.
    Normalized { targets: Matrix<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialNet<T> {
    topology: Topology,
    pub centers: Matrix<T>,
    pub spread: T,
    pub output: RadialOutput<T>,
}

impl<T: Scalar> RadialNet<T> {
    pub fn new(kind: TopologyKind, centers: Matrix<T>, spread: T, output: RadialOutput<T>) -> Result<Self> {
        if !(spread > T::zero()) || !spread.is_finite() {
            return Err(NetworkError::InvalidParameter(format!("spread must be positive, got {spread}")));
        }
        let out_cols = match (&output, kind) {
            (RadialOutput::Linear { weights, bias }, TopologyKind::RadialBasisReduced) => {
                if weights.rows() != centers.rows() || bias.len() != weights.cols() {
                    return Err(NetworkError::ShapeMismatch("linear output weights vs centers".into()));
                }
                weights.cols()
            }
            (RadialOutput::Normalized { targets }, TopologyKind::GeneralizedRegression) => {
                if targets.rows() != centers.rows() || centers.rows() == 0 {
                    return Err(NetworkError::ShapeMismatch("kernel targets vs centers".into()));
                }
                targets.cols()
            }
            _ => {
                return Err(NetworkError::UnsupportedTopology(format!(
                    "{kind} does not match the radial output layer"
                )))
            }
        };
        let topology = Topology {
            kind,
            input_size: centers.cols(),
            hidden_sizes: Vec::new(),
            output_size: out_cols,
        };
        Ok(Self {
            topology,
            centers,
            spread,
            output,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn neurons(&self) -> usize {
        self.centers.rows()
    }

    pub fn param_count(&self) -> usize {
        let c = self.centers.rows() * self.centers.cols();
        match &self.output {
            RadialOutput::Linear { weights, bias } => c + weights.rows() * weights.cols() + bias.len(),
            RadialOutput::Normalized { targets } => c + targets.rows() * targets.cols(),
        }
    }

    /// Squared-distance exponents `(b·‖x − c_i‖)²` for one query.
    fn exponents(&self, x: &[T], out: &mut Vec<T>) {
        let b = gaussian_coefficient(self.spread);
        out.clear();
        out.extend(self.centers.iter_rows().map(|c| {
            let d2: T = c.iter().zip(x).map(|(&ci, &xi)| (xi - ci) * (xi - ci)).sum();
            b * b * d2
        }));
    }

    pub fn forward(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        if inputs.cols() != self.topology.input_size {
            return Err(NetworkError::ShapeMismatch(format!(
                "inputs have {} columns, network expects {}",
                inputs.cols(),
                self.topology.input_size
            )));
        }
        let m = self.topology.output_size;
        let mut out = Matrix::zeros(inputs.rows(), m);
        let mut z = Vec::with_capacity(self.neurons());
        for (n, x) in inputs.iter_rows().enumerate() {
            self.exponents(x, &mut z);
            let y = out.row_mut(n);
            match &self.output {
                RadialOutput::Linear { weights, bias } => {
                    y.copy_from_slice(bias);
                    for (&zi, w) in z.iter().zip(weights.iter_rows()) {
                        let phi = (-zi).exp();
                        for (yk, &wk) in y.iter_mut().zip(w) {
                            *yk += phi * wk;
                        }
                    }
                }
                RadialOutput::Normalized { targets } => {
                    // Shift by the smallest exponent so the dominant kernel is 1
                    // even when every raw kernel underflows.
                    let zmin = z.iter().copied().fold(T::infinity(), T::min);
                    let mut total = T::zero();
                    for (&zi, t) in z.iter().zip(targets.iter_rows()) {
                        let k = (zmin - zi).exp();
                        total += k;
                        for (yk, &tk) in y.iter_mut().zip(t) {
                            *yk += k * tk;
                        }
                    }
                    y.iter_mut().for_each(|v| *v /= total);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbrParams<T> {
    /// Stop once the training MSE in mm² is at or below this.
    pub goal_mse_mm2: T,
    pub spread: T,
    pub max_neurons: usize,
    /// Millimetres per normalized unit, per output.
    pub output_scale: Vec<T>,
}

impl<T: Scalar> RbrParams<T> {
    pub fn new(goal_mse_mm2: T, output_scale: Vec<T>, max_neurons: usize) -> Self {
        Self {
            goal_mse_mm2,
            spread: T::lit(DEFAULT_RBR_SPREAD),
            max_neurons,
            output_scale,
        }
    }

    pub fn with_spread(mut self, spread: T) -> Self {
        self.spread = spread;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RbrDesign<T> {
    pub net: RadialNet<T>,
    /// Training MSE in mm² after 0, 1, 2, … neurons.
    pub trace: Vec<T>,
    /// False when the neuron budget ran out first.
    pub goal_met: bool,
}

impl<T: Scalar> RbrDesign<T> {
    pub fn final_mse(&self) -> T {
        *self.trace.last().expect("trace always holds the bias-only fit")
    }
}

/// Per-sample squared error in mm² summed over outputs, and the mean over
/// all entries.
fn errors_mm<T: Scalar>(pred: &Matrix<T>, targets: &Matrix<T>, scale: &[T], per_sample: &mut [T]) -> T {
    let mut total = T::zero();
    for ((e, p), t) in per_sample.iter_mut().zip(pred.iter_rows()).zip(targets.iter_rows()) {
        *e = p
            .iter()
            .zip(t)
            .zip(scale)
            .map(|((&pk, &tk), &s)| {
                let d = (pk - tk) * s;
                d * d
            })
            .sum();
        total += *e;
    }
    total / T::from_usize(targets.as_slice().len()).unwrap()
}

/// Greedy reduced radial basis design.
///
/// Starting from a bias-only fit, each round centers a new Gaussian on the
/// not-yet-used training input with the largest current error and refits
/// every output weight (plus bias) by least squares.
pub fn design_rbr<T: Scalar>(data: &NormalizedData<T>, params: &RbrParams<T>) -> Result<RbrDesign<T>> {
    let n = data.len();
    if n == 0 {
        return Err(NetworkError::EmptyDataset);
    }
    let m = data.targets.cols();
    if !(params.goal_mse_mm2 > T::zero()) {
        return Err(NetworkError::InvalidParameter(format!("goal must be positive, got {}", params.goal_mse_mm2)));
    }
    if params.max_neurons > n {
        return Err(NetworkError::InvalidParameter(format!(
            "max_neurons {} exceeds training size {n}",
            params.max_neurons
        )));
    }
    if params.output_scale.len() != m {
        return Err(NetworkError::ShapeMismatch("one output scale per target column required".into()));
    }
    let b = gaussian_coefficient(params.spread);
    if !b.is_finite() || !(params.spread > T::zero()) {
        return Err(NetworkError::InvalidParameter(format!("spread must be positive, got {}", params.spread)));
    }

    // Column 0 is the bias; column i+1 the basis centered on chosen[i].
    let mut design: Vec<Vec<T>> = vec![vec![T::one(); n]];
    let mut chosen: Vec<usize> = Vec::new();
    let mut used = vec![false; n];
    let mut per_sample = vec![T::zero(); n];

    let fit = |design: &[Vec<T>], chosen: &[usize]| -> Result<RadialNet<T>> {
        let cols = design.len();
        let mut phi = Matrix::zeros(n, cols);
        for (j, col) in design.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                phi[(i, j)] = v;
            }
        }
        let coef = least_squares(&phi, &data.targets)?;
        let bias = coef.row(0).to_vec();
        let weights = Matrix::from_vec(cols - 1, m, coef.as_slice()[m..].to_vec())?;
        RadialNet::new(
            TopologyKind::RadialBasisReduced,
            data.inputs.select_rows(chosen),
            params.spread,
            RadialOutput::Linear { weights, bias },
        )
    };

    let mut net = fit(&design, &chosen)?;
    let mut trace = vec![errors_mm(&net.forward(&data.inputs)?, &data.targets, &params.output_scale, &mut per_sample)];
    while *trace.last().unwrap() > params.goal_mse_mm2 && chosen.len() < params.max_neurons {
        let Some(worst) = (0..n)
            .filter(|&i| !used[i])
            .max_by(|&a, &c| per_sample[a].partial_cmp(&per_sample[c]).unwrap_or(std::cmp::Ordering::Equal))
        else {
            break;
        };
        used[worst] = true;
        chosen.push(worst);
        let c = data.inputs.row(worst);
        design.push(
            data.inputs
                .iter_rows()
                .map(|x| {
                    let d2: T = x.iter().zip(c).map(|(&xi, &ci)| (xi - ci) * (xi - ci)).sum();
                    (-(b * b * d2)).exp()
                })
                .collect(),
        );
        net = fit(&design, &chosen)?;
        trace.push(errors_mm(&net.forward(&data.inputs)?, &data.targets, &params.output_scale, &mut per_sample));
    }
    let goal_met = *trace.last().unwrap() <= params.goal_mse_mm2;
    Ok(RbrDesign { net, trace, goal_met })
}

/// Generalized regression network: one kernel per training sample, output
/// the kernel-weighted average of the training targets.
pub fn design_grnn<T: Scalar>(data: &NormalizedData<T>, spread: T) -> Result<RadialNet<T>> {
    if data.is_empty() {
        return Err(NetworkError::EmptyDataset);
    }
    RadialNet::new(
        TopologyKind::GeneralizedRegression,
        data.inputs.clone(),
        spread,
        RadialOutput::Normalized {
            targets: data.targets.clone(),
        },
    )
}
