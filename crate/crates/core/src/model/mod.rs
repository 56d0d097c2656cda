//! The spatio-temporal graph network.
//!
//! Three components (recent, daily, weekly) each run a stack of blocks:
//! temporal attention, frequency-aware spatial attention, Chebyshev graph
//! convolution with ReLU, and a 1x3 temporal convolution with ReLU. A fully
//! connected map turns each component's output into `N x t_p` predictions,
//! which are fused with learned per-station, per-horizon weights and passed
//! through a final ReLU.
//!
//! Activations inside the network use a node x time x channel layout
//! (`N x T x F`); samples arrive as `N x F x T` and are transposed once per
//! component.

mod network;
pub mod ops;
mod params;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::railnet::{self, GraphError, RailGraph};
use crate::windows::WindowConfig;

pub use network::{backward, forward, forward_cached, ForwardCache};
pub use params::{BlockParams, ComponentKind, ComponentParams, ModelParams, TensorInfo};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("checkpoint header: {0}")]
    Json(#[from] serde_json::Error),
}

/// Input channel subsets used by the feature ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSet {
    /// Average arrival and departure delay.
    Avg,
    /// Averages plus hourly headway.
    AvgHeadway,
    /// Averages plus total arrival and departure delay.
    AvgTot,
    #[default]
    All,
}

impl FeatureSet {
    pub fn channels(self) -> &'static [usize] {
        match self {
            FeatureSet::Avg => &[0, 1],
            FeatureSet::AvgHeadway => &[0, 1, 4],
            FeatureSet::AvgTot => &[0, 1, 2, 3],
            FeatureSet::All => &[0, 1, 2, 3, 4],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureSet::Avg => "avg",
            FeatureSet::AvgHeadway => "avg+headway",
            FeatureSet::AvgTot => "avg+tot",
            FeatureSet::All => "all",
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(' ', "").as_str() {
            "avg" | "avgdelay" => Ok(FeatureSet::Avg),
            "avg+headway" | "avgdelay+headway" => Ok(FeatureSet::AvgHeadway),
            "avg+tot" | "avgdelay+totdelay" => Ok(FeatureSet::AvgTot),
            "all" | "avg+headway+tot" | "avgdelay+headway+totdelay" => Ok(FeatureSet::All),
            other => Err(format!("unknown feature set '{other}' (avg, avg+headway, avg+tot, all)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub window: WindowConfig,
    /// Number of Chebyshev terms.
    pub cheb_order: usize,
    /// Kernels in every graph and temporal convolution.
    pub channels: usize,
    /// Blocks per component.
    pub blocks: usize,
    pub use_frequency_weight: bool,
    pub use_final_relu: bool,
    pub features: FeatureSet,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window: WindowConfig::default(),
            cheb_order: 3,
            channels: 64,
            blocks: 2,
            use_frequency_weight: true,
            use_final_relu: true,
            features: FeatureSet::All,
        }
    }
}

impl ModelConfig {
    /// Configuration equivalent to the inverse-distance attention model
    /// without the output ReLU.
    pub fn tstgcn_equivalent(mut self) -> Self {
        self.use_frequency_weight = false;
        self.use_final_relu = false;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.window.validate().map_err(|e| ModelError::Config(e.to_string()))?;
        if self.cheb_order == 0 || self.channels == 0 || self.blocks == 0 {
            return Err(ModelError::Config("cheb_order, channels and blocks must be positive".into()));
        }
        Ok(())
    }

    pub fn input_channels(&self) -> usize {
        self.features.channels().len()
    }
}

/// Graph-derived constants shared by every forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphContext {
    /// `T_0 .. T_{K-1}` of the scaled Laplacian.
    pub cheb: Vec<Array2<f64>>,
    /// Spatial weight matrix multiplying the attention scores.
    pub weights: Array2<f64>,
}

impl GraphContext {
    pub fn new(graph: &RailGraph, cfg: &ModelConfig) -> Result<Self, ModelError> {
        let weights = if cfg.use_frequency_weight {
            railnet::spatial_weight_matrix(graph)?
        } else {
            railnet::inverse_distance_matrix(graph)?
        };
        let lap = railnet::scaled_laplacian(graph);
        Ok(GraphContext { cheb: ops::chebyshev_polynomials(&lap, cfg.cheb_order), weights: weights.matrix })
    }

    pub fn num_stations(&self) -> usize {
        self.weights.nrows()
    }
}
