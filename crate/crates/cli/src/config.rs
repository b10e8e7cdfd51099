use std::path::Path;

use crop_core::harness::dataset::{GenSpec, SynthSpec};
use crop_core::harness::HarnessError;
use crop_core::ilp::ModelConfig;
use crop_core::plc::PlcConfig;
use serde::{Deserialize, Serialize};

/// Model section of the TOML config. `seed` falls back to `--seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layers: usize,
    pub heads: usize,
    pub dim: usize,
    pub mlp: usize,
    pub tie_qk: bool,
    pub seed: Option<u64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = ModelConfig::default();
        ModelSection {
            layers: d.layers,
            heads: d.heads,
            dim: d.dim,
            mlp: d.mlp,
            tie_qk: d.tie_qk,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub plc: PlcConfig,
    pub synth: SynthSpec,
    pub gen: GenSpec,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, HarnessError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model(&self, run_seed: u64) -> ModelConfig {
        ModelConfig {
            layers: self.model.layers,
            heads: self.model.heads,
            dim: self.model.dim,
            mlp: self.model.mlp,
            seed: self.model.seed.unwrap_or(run_seed),
            tie_qk: self.model.tie_qk,
        }
    }
}
