//! Neural-network surrogate models of rectangular microstrip patch antennas.
//!
//! The crate generates training data from the transmission-line model,
//! builds and trains six network topologies with ten training algorithms,
//! and runs a benchmark matrix comparing them on five reference designs.

pub mod antenna;
pub mod benchmark;
pub mod cli;
pub mod dataset;
pub mod linalg;
pub mod metrics;
pub mod networks;
pub mod scalar;
pub mod trainers;

pub use scalar::Scalar;

pub type Matrix = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type DesignInput = antenna::DesignInput<f64>;
pub type PatchDims = antenna::PatchDims<f64>;
pub type Dataset = dataset::Dataset<f64>;
pub type Scaler = dataset::Scaler<f64>;
pub type Network = networks::Network<f64>;
pub type Network32 = networks::Network<f32>;
