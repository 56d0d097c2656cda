//! Railway delay forecasting on station graphs.
//!
//! The pipeline runs: parse running records ([`ingest`]), build the station
//! graph ([`railnet`]), aggregate hourly per-station features
//! ([`ingest::hourly_features`]), cut recent/daily/weekly windows
//! ([`windows`]), then train ([`train`]) and score ([`eval`]) the
//! spatio-temporal graph network in [`model`] against the reference
//! predictors in [`baselines`]. [`synth`] produces deterministic synthetic
//! networks and delay histories for desk-scale experiments.

pub mod baselines;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod railnet;
pub mod synth;
pub mod train;
pub mod windows;

pub use baselines::BaselineKind;
pub use eval::MetricReport;
pub use ingest::{FeatureCube, RunRecord};
pub use model::{ModelConfig, ModelParams};
pub use railnet::{RailGraph, SpatialWeights, Station};
pub use train::{TrainConfig, TrainReport};
pub use windows::{Sample, WindowConfig};

/// Number of station feature channels in a [`FeatureCube`].
pub const NUM_FEATURES: usize = 5;
