//! Run configuration: one JSON file covering search, model, objective and
//! constraint settings. Every field has a documented default; CLI flags
//! override the loaded values.

use serde::{Deserialize, Serialize};
use symreg_core::guidance::ModelConfig;
use symreg_core::selfsearch::RunConfig;

use crate::error::CliError;

/// Model hyperparameters. Vocabulary-dependent fields (vocab size, arity
/// table, sequence length) are filled in per benchmark.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub l2_coeff: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub entropy_term_enabled: bool,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            layers: 2,
            heads: 4,
            l2_coeff: 1e-4,
            learning_rate: 1e-3,
            momentum: 0.0,
            entropy_term_enabled: true,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub search: RunConfig,
    pub model: ModelParams,
}

impl Config {
    pub fn load(path: &str) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read config {path}: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("bad config {path}: {e}")))
    }

    /// Builds the per-benchmark model config from the hyperparameters.
    pub fn model_config(&self, arities: Vec<u8>, max_length: usize) -> ModelConfig {
        let mut m = ModelConfig::for_vocab_arities(arities, max_length);
        m.embed_dim = self.model.embed_dim;
        m.layers = self.model.layers;
        m.heads = self.model.heads;
        m.l2_coeff = self.model.l2_coeff;
        m.learning_rate = self.model.learning_rate;
        m.momentum = self.model.momentum;
        m.entropy_term_enabled = self.model.entropy_term_enabled;
        m
    }
}
