//! Self-describing JSON model files.
//!
//! Layered networks are stored as connectivity plus one flat parameter
//! array; radial networks as centers, spread and output block. Values are
//! written as `f64` with round-trip formatting.

use super::layered::{Activation, LayeredNet, Source};
use super::radial::{RadialNet, RadialOutput};
use super::{Body, Network, NetworkError, Result, Topology, TopologyKind};
use crate::dataset::Scaler;
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const MODEL_FORMAT: &str = "patchnet-model";
pub const MODEL_VERSION: u32 = 1;

/// Free-form provenance stored alongside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    #[serde(default)]
    pub algorithm: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub created_unix_s: Option<u64>,
    #[serde(default)]
    pub final_train_mse_mm2: Option<f64>,
    #[serde(default)]
    pub stop_reason: Option<String>,
    #[serde(default)]
    pub diverged: bool,
    #[serde(default)]
    pub tool_version: Option<String>,
}

/// A loaded model: network, the scaler it expects, and its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile<T> {
    pub network: Network<T>,
    pub scaler: Option<Scaler<f64>>,
    pub metadata: ModelMetadata,
}

#[derive(Serialize, Deserialize)]
struct TopologyDoc {
    kind: String,
    input_size: usize,
    hidden_sizes: Vec<usize>,
    output_size: usize,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    size: usize,
    activation: Activation,
    sources: Vec<Source>,
    recurrent: bool,
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum RadialOutputDoc {
    Linear { weights: MatrixDoc, bias: Vec<f64> },
    Normalized { targets: MatrixDoc },
}

#[derive(Serialize, Deserialize)]
struct RadialDoc {
    spread: f64,
    centers: MatrixDoc,
    output: RadialOutputDoc,
}

#[derive(Serialize, Deserialize)]
struct Document {
    format: String,
    version: u32,
    topology: TopologyDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    layers: Option<Vec<LayerDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radial: Option<RadialDoc>,
    #[serde(default)]
    scaler: Option<Scaler<f64>>,
    #[serde(default)]
    scaler_fingerprint: Option<u64>,
    #[serde(default)]
    metadata: ModelMetadata,
}

fn matrix_doc<T: Scalar>(m: &Matrix<T>) -> MatrixDoc {
    MatrixDoc {
        rows: m.rows(),
        cols: m.cols(),
        data: m.as_slice().iter().map(|v| v.as_f64()).collect(),
    }
}

fn matrix_from_doc<T: Scalar>(d: MatrixDoc) -> Result<Matrix<T>> {
    Matrix::from_vec(d.rows, d.cols, d.data.into_iter().map(T::lit).collect())
        .map_err(|e| NetworkError::CorruptModel(e.to_string()))
}

fn corrupt(msg: impl Into<String>) -> NetworkError {
    NetworkError::CorruptModel(msg.into())
}

/// Renders `net` as a model document.
pub fn serialize<T: Scalar>(net: &Network<T>, scaler: Option<&Scaler<f64>>, metadata: &ModelMetadata) -> Result<String> {
    let t = net.topology();
    let mut doc = Document {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        topology: TopologyDoc {
            kind: t.kind.code().into(),
            input_size: t.input_size,
            hidden_sizes: t.hidden_sizes.clone(),
            output_size: t.output_size,
        },
        layers: None,
        params: None,
        radial: None,
        scaler: scaler.cloned(),
        scaler_fingerprint: net.scaler_fingerprint.or_else(|| scaler.map(Scaler::fingerprint)),
        metadata: metadata.clone(),
    };
    match &net.body {
        Body::Layered(n) => {
            doc.layers = Some(
                n.layers()
                    .iter()
                    .map(|l| LayerDoc {
                        size: l.size,
                        activation: l.activation,
                        sources: l.connections.iter().map(|c| c.source).collect(),
                        recurrent: l.recurrent.is_some(),
                    })
                    .collect(),
            );
            doc.params = Some(n.params().iter().map(|v| v.as_f64()).collect());
        }
        Body::Radial(n) => {
            doc.radial = Some(RadialDoc {
                spread: n.spread.as_f64(),
                centers: matrix_doc(&n.centers),
                output: match &n.output {
                    RadialOutput::Linear { weights, bias } => RadialOutputDoc::Linear {
                        weights: matrix_doc(weights),
                        bias: bias.iter().map(|v| v.as_f64()).collect(),
                    },
                    RadialOutput::Normalized { targets } => RadialOutputDoc::Normalized {
                        targets: matrix_doc(targets),
                    },
                },
            });
        }
    }
    serde_json::to_string_pretty(&doc).map_err(|e| corrupt(e.to_string()))
}

/// Parses a model document produced by [`serialize`].
pub fn deserialize<T: Scalar>(text: &str) -> Result<ModelFile<T>> {
    let value: Value = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
    let format = value.get("format").and_then(Value::as_str);
    if format != Some(MODEL_FORMAT) {
        return Err(NetworkError::VersionMismatch(format!("not a {MODEL_FORMAT} document (format {format:?})")));
    }
    match value.get("version").and_then(Value::as_u64) {
        Some(v) if v == MODEL_VERSION as u64 => {}
        other => {
            return Err(NetworkError::VersionMismatch(format!(
                "unsupported model version {other:?}, expected {MODEL_VERSION}"
            )))
        }
    }
    let kind_tag = value
        .pointer("/topology/kind")
        .and_then(Value::as_str)
        .ok_or_else(|| corrupt("missing topology kind"))?;
    let kind: TopologyKind = kind_tag
        .parse()
        .map_err(|_| NetworkError::VersionMismatch(format!("unknown topology tag `{kind_tag}`")))?;
    let doc: Document = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
    let topology = Topology {
        kind,
        input_size: doc.topology.input_size,
        hidden_sizes: doc.topology.hidden_sizes,
        output_size: doc.topology.output_size,
    };
    topology.validate().map_err(|e| corrupt(e.to_string()))?;

    let mut network: Network<T> = if kind.is_differentiable() {
        let mut net = LayeredNet::<T>::zeros(&topology).map_err(|e| corrupt(e.to_string()))?;
        let layers = doc.layers.ok_or_else(|| corrupt("missing layer shapes"))?;
        let consistent = layers.len() == net.layers().len()
            && layers.iter().zip(net.layers()).all(|(d, l)| {
                d.size == l.size
                    && d.activation == l.activation
                    && d.recurrent == l.recurrent.is_some()
                    && d.sources.len() == l.connections.len()
                    && d.sources.iter().zip(&l.connections).all(|(s, c)| *s == c.source)
            });
        if !consistent {
            return Err(corrupt("layer shapes disagree with the topology"));
        }
        let params: Vec<T> = doc
            .params
            .ok_or_else(|| corrupt("missing parameters"))?
            .into_iter()
            .map(T::lit)
            .collect();
        net.set_params(&params).map_err(|e| corrupt(e.to_string()))?;
        net.into()
    } else {
        let r = doc.radial.ok_or_else(|| corrupt("missing radial block"))?;
        let output = match r.output {
            RadialOutputDoc::Linear { weights, bias } => RadialOutput::Linear {
                weights: matrix_from_doc(weights)?,
                bias: bias.into_iter().map(T::lit).collect(),
            },
            RadialOutputDoc::Normalized { targets } => RadialOutput::Normalized {
                targets: matrix_from_doc(targets)?,
            },
        };
        let net = RadialNet::new(kind, matrix_from_doc(r.centers)?, T::lit(r.spread), output)
            .map_err(|e| corrupt(e.to_string()))?;
        if net.topology().input_size != topology.input_size || net.topology().output_size != topology.output_size {
            return Err(corrupt("radial block disagrees with the topology"));
        }
        net.into()
    };
    if let (Some(s), Some(fp)) = (&doc.scaler, doc.scaler_fingerprint) {
        if s.fingerprint() != fp {
            return Err(corrupt("scaler does not match its recorded fingerprint"));
        }
    }
    network.scaler_fingerprint = doc.scaler_fingerprint;
    Ok(ModelFile {
        network,
        scaler: doc.scaler,
        metadata: doc.metadata,
    })
}
