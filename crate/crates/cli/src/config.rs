//! Keyed-text run configuration.
//!
//! ```toml
//! [model]            # cheb_order, channels, blocks, use_frequency_weight,
//!                    # use_final_relu, features = "all" | "avg" | "avg+headway" | "avg+tot"
//! [model.window]     # q, t_p, t_h, t_d, t_w, history_prefix
//! [train]            # batch_size, learning_rate, max_epochs, patience, seed,
//!                    # optimizer = "adam" | "sgd", beta1, beta2, epsilon, clip_norm
//! [features]         # headway_source = "actual" | "scheduled", headway_default, standardize
//! [synth]            # seed, stations, days, topology, rho, ... (see SynthConfig)
//! ```
//!
//! Every key is optional; command-line flags override file values.

use std::path::Path;

use anyhow::{Context, Result};
use rstgcn::ingest::FeatureOptions;
use rstgcn::synth::SynthConfig;
use rstgcn::{ModelConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub features: FeatureOptions,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Hex SHA-256 of a serializable value's canonical JSON.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    sha256_hex(&json)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Model and optimizer settings in the notation of the method description:
/// daily and weekly windows are counted in periods of `t_p` slots.
pub fn hyperparameters(model: &ModelConfig, train: &TrainConfig) -> serde_json::Value {
    let w = &model.window;
    serde_json::json!({
        "T_h": w.t_h,
        "T_d": w.t_d / w.t_p.max(1),
        "T_w": w.t_w / w.t_p.max(1),
        "T_p": w.t_p,
        "K": model.cheb_order,
        "kernels": model.channels,
        "blocks": model.blocks,
        "batch_size": train.batch_size,
        "learning_rate": train.learning_rate,
        "features": model.features.name(),
        "use_frequency_weight": model.use_frequency_weight,
        "use_final_relu": model.use_final_relu,
    })
}
