//! The six network topologies: layered tanh networks (feed-forward,
//! cascade-forward, Elman, layer-recurrent) and the data-driven radial
//! networks (reduced radial basis, generalized regression).

mod layered;
mod model_io;
mod radial;

pub(crate) use layered::weighted_loss;
pub use layered::{Activation, Connection, ContextTape, Layer, LayeredNet, Source};
pub use model_io::{deserialize, serialize, ModelFile, ModelMetadata, MODEL_FORMAT, MODEL_VERSION};
pub use radial::{
    design_grnn, design_rbr, gaussian_coefficient, RadialNet, RadialOutput, RbrDesign, RbrParams, DEFAULT_GR_SPREAD,
    DEFAULT_RBR_SPREAD,
};

use crate::linalg::{LinalgError, Matrix};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("unsupported topology: {0}")]
    UnsupportedTopology(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("model version mismatch: {0}")]
    VersionMismatch(String),
    #[error("corrupt model: {0}")]
    CorruptModel(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T, E = NetworkError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TopologyKind {
    FeedForward,
    CascadeForward,
    Elman,
    LayerRecurrent,
    RadialBasisReduced,
    GeneralizedRegression,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 6] = [
        Self::FeedForward,
        Self::CascadeForward,
        Self::Elman,
        Self::LayerRecurrent,
        Self::RadialBasisReduced,
        Self::GeneralizedRegression,
    ];

    /// Short lowercase tag used on the command line and in model files.
    pub fn code(self) -> &'static str {
        match self {
            Self::FeedForward => "ff",
            Self::CascadeForward => "cf",
            Self::Elman => "el",
            Self::LayerRecurrent => "lr",
            Self::RadialBasisReduced => "rbr",
            Self::GeneralizedRegression => "gr",
        }
    }

    /// Report label.
    pub fn label(self) -> &'static str {
        match self {
            Self::FeedForward => "FF",
            Self::CascadeForward => "CF",
            Self::Elman => "EL",
            Self::LayerRecurrent => "LR",
            Self::RadialBasisReduced => "RBR",
            Self::GeneralizedRegression => "GR",
        }
    }

    /// Layered tanh networks trained by gradient-based algorithms.
    pub fn is_differentiable(self) -> bool {
        matches!(
            self,
            Self::FeedForward | Self::CascadeForward | Self::Elman | Self::LayerRecurrent
        )
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Self::Elman | Self::LayerRecurrent)
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TopologyKind {
    type Err = NetworkError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|k| k.code() == s)
            .ok_or_else(|| NetworkError::UnsupportedTopology(format!("unknown network `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    pub input_size: usize,
    /// Hidden layer widths; ignored by the radial kinds.
    pub hidden_sizes: Vec<usize>,
    pub output_size: usize,
}

impl Topology {
    /// Two inputs, hidden layers of 8 and 4 tanh units, two linear outputs.
    pub fn new(kind: TopologyKind) -> Self {
        Self {
            kind,
            input_size: 2,
            hidden_sizes: if kind.is_differentiable() { vec![8, 4] } else { vec![] },
            output_size: 2,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden_sizes = hidden;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 {
            return Err(NetworkError::InvalidParameter("input and output sizes must be positive".into()));
        }
        if self.kind.is_differentiable() && (self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0)) {
            return Err(NetworkError::InvalidParameter(format!(
                "{} needs non-empty, non-zero hidden sizes, got {:?}",
                self.kind, self.hidden_sizes
            )));
        }
        Ok(())
    }
}

/// Recurrent state carried between consecutive samples: one vector per
/// layer (empty for layers without feedback).
#[derive(Debug, Clone, PartialEq)]
pub struct EvalContext<T> {
    pub layers: Vec<Vec<T>>,
}

impl<T: Scalar> EvalContext<T> {
    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Context for networks without recurrence.
    pub fn empty() -> Self {
        Self { layers: Vec::new() }
    }
}

/// Jacobian of the weighted residuals `e = ω_k (y − t)`, one row per
/// (sample, output) pair in sample-major order.
///
/// Convention: with `E = (1/N) Σ‖ω ⊙ (y − t)‖²`, the gradient of `E` is
/// `(2/N)·Jᵀe`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearization<T> {
    pub jacobian: Matrix<T>,
    pub residuals: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Body<T> {
    Layered(LayeredNet<T>),
    Radial(RadialNet<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub(crate) body: Body<T>,
    /// Fingerprint of the scaler the network was trained under, if known.
    pub scaler_fingerprint: Option<u64>,
}

impl<T: Scalar> From<LayeredNet<T>> for Network<T> {
    fn from(net: LayeredNet<T>) -> Self {
        Self {
            body: Body::Layered(net),
            scaler_fingerprint: None,
        }
    }
}

impl<T: Scalar> From<RadialNet<T>> for Network<T> {
    fn from(net: RadialNet<T>) -> Self {
        Self {
            body: Body::Radial(net),
            scaler_fingerprint: None,
        }
    }
}

impl<T: Scalar> Network<T> {
    /// Seeded initialization of a layered topology. Radial networks come
    /// from [`design_rbr`] / [`design_grnn`].
    pub fn init(topology: &Topology, seed: u64) -> Result<Self> {
        if !topology.kind.is_differentiable() {
            return Err(NetworkError::UnsupportedTopology(format!(
                "{} is constructed from data, not initialized",
                topology.kind
            )));
        }
        Ok(LayeredNet::init(topology, seed)?.into())
    }

    pub fn topology(&self) -> &Topology {
        match &self.body {
            Body::Layered(n) => n.topology(),
            Body::Radial(n) => n.topology(),
        }
    }

    pub fn kind(&self) -> TopologyKind {
        self.topology().kind
    }

    pub fn as_layered(&self) -> Option<&LayeredNet<T>> {
        match &self.body {
            Body::Layered(n) => Some(n),
            Body::Radial(_) => None,
        }
    }

    pub fn as_layered_mut(&mut self) -> Option<&mut LayeredNet<T>> {
        match &mut self.body {
            Body::Layered(n) => Some(n),
            Body::Radial(_) => None,
        }
    }

    pub fn as_radial(&self) -> Option<&RadialNet<T>> {
        match &self.body {
            Body::Radial(n) => Some(n),
            Body::Layered(_) => None,
        }
    }

    fn layered(&self, what: &str) -> Result<&LayeredNet<T>> {
        self.as_layered().ok_or_else(|| {
            NetworkError::UnsupportedTopology(format!("{what} is not defined for {}", self.kind()))
        })
    }

    pub fn param_count(&self) -> usize {
        match &self.body {
            Body::Layered(n) => n.param_count(),
            Body::Radial(n) => n.param_count(),
        }
    }

    /// Fresh zeroed context sized for this network.
    pub fn new_context(&self) -> EvalContext<T> {
        match &self.body {
            Body::Layered(n) => n.new_context(),
            Body::Radial(_) => EvalContext::empty(),
        }
    }

    /// Evaluates rows of `inputs` in order, carrying recurrent context
    /// from one row to the next.
    pub fn forward(&self, inputs: &Matrix<T>, ctx: &mut EvalContext<T>) -> Result<Matrix<T>> {
        match &self.body {
            Body::Layered(n) => n.forward(inputs, ctx),
            Body::Radial(n) => n.forward(inputs),
        }
    }

    /// Evaluates every row independently, each from a zero context.
    pub fn predict(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        match &self.body {
            Body::Layered(n) => n.predict(inputs),
            Body::Radial(n) => n.forward(inputs),
        }
    }

    /// Gradient of the batch loss `(1/N) Σ‖y − t‖²`, recurrent context
    /// treated as a constant input.
    pub fn gradient(&self, inputs: &Matrix<T>, targets: &Matrix<T>, ctx: &mut EvalContext<T>) -> Result<Vec<T>> {
        let net = self.layered("gradient")?;
        let tape = net.record_tape(inputs, ctx)?;
        let ones = vec![T::one(); net.topology().output_size];
        let mut grad = vec![T::zero(); net.param_count()];
        net.loss_and_gradient(inputs, targets, &tape, &ones, &mut grad)?;
        Ok(grad)
    }

    pub fn jacobian(&self, inputs: &Matrix<T>, targets: &Matrix<T>, ctx: &mut EvalContext<T>) -> Result<Linearization<T>> {
        let net = self.layered("jacobian")?;
        let tape = net.record_tape(inputs, ctx)?;
        let ones = vec![T::one(); net.topology().output_size];
        net.linearize(inputs, targets, &tape, &ones)
    }

    pub fn params(&self) -> Result<Vec<T>> {
        Ok(self.layered("flat parameters")?.params())
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        match &mut self.body {
            Body::Layered(n) => n.set_params(params),
            Body::Radial(_) => Err(NetworkError::UnsupportedTopology("radial networks have no flat parameter vector".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_kinds() {
        assert_eq!("FF".parse::<TopologyKind>().unwrap(), TopologyKind::FeedForward);
        assert_eq!("rbr".parse::<TopologyKind>().unwrap(), TopologyKind::RadialBasisReduced);
        assert!("mlp".parse::<TopologyKind>().is_err());
    }

    #[test]
    fn radial_kinds_cannot_be_initialized() {
        for kind in [TopologyKind::RadialBasisReduced, TopologyKind::GeneralizedRegression] {
            assert!(matches!(
                Network::<f64>::init(&Topology::new(kind), 1),
                Err(NetworkError::UnsupportedTopology(_))
            ));
        }
    }

    #[test]
    fn topology_validation() {
        assert!(Topology::new(TopologyKind::FeedForward).with_hidden(vec![]).validate().is_err());
        assert!(Topology::new(TopologyKind::GeneralizedRegression).validate().is_ok());
    }
}
