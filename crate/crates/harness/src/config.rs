//! TOML experiment configuration.

use std::path::{Path, PathBuf};

use hamlearn::oracles::BufferInit;
use hamlearn::recovery::OmegaReset;
use hamlearn::{Activation, LossKind, NetSpec, Ordering, SgdConfig};
use serde::{Deserialize, Serialize};

use crate::datasets::SequenceTask;
use crate::error::HarnessError;

/// Optimizer presets. `Custom` takes its values from the `[sgd]` table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "GD-a")]
    GdA,
    #[serde(rename = "GD-b")]
    GdB,
    #[serde(rename = "Mom-a")]
    MomA,
    #[serde(rename = "Mom-b")]
    MomB,
    #[serde(rename = "custom")]
    Custom,
}

/// SGD hyper-parameters and the Hamiltonian step size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdParams {
    pub gamma: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub rho: f64,
    pub tau: f64,
}

impl Scenario {
    pub fn preset(self) -> Option<SgdParams> {
        let p = |gamma, mu, rho, tau| Some(SgdParams { gamma, mu, rho, tau });
        match self {
            Scenario::GdA => p(0.01, 0.0, 0.0, 1.0),
            Scenario::GdB => p(0.001, 0.0, 0.0, 0.5),
            Scenario::MomA => p(0.01, 0.05, 0.6, 1.0),
            Scenario::MomB => p(0.01, 0.1, 0.5, 0.5),
            Scenario::Custom => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::GdA => "GD-a",
            Scenario::GdB => "GD-b",
            Scenario::MomA => "Mom-a",
            Scenario::MomB => "Mom-b",
            Scenario::Custom => "custom",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Online,
    FfOutput,
    FfState,
    RnnUnfold,
    RnnHlBptt,
    RnnTruncated,
}

fn tanh() -> Activation {
    Activation::Tanh
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    /// One dense layer from inputs to outputs.
    Linear,
    /// Dense layers with the given hidden widths and a linear read-out.
    Mlp {
        hidden: Vec<usize>,
        #[serde(default = "tanh")]
        activation: Activation,
    },
    /// Single recurrent cell (sequence modes); the hidden size is the target size.
    Rnn {
        #[serde(default = "tanh")]
        activation: Activation,
    },
    /// A full network description.
    Custom { spec: NetSpec },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Iris {
        #[serde(default)]
        seed: u64,
    },
    Digits {
        #[serde(default)]
        seed: u64,
    },
    Sequences {
        #[serde(default)]
        seed: u64,
        #[serde(default = "task_count")]
        count: usize,
        #[serde(default = "task_length")]
        length: usize,
        #[serde(default = "task_input_dim")]
        input_dim: usize,
        #[serde(default = "task_target_dim")]
        target_dim: usize,
    },
    Csv {
        path: PathBuf,
    },
    Jsonl {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Largest absolute weight difference.
    #[default]
    Max,
    /// Mean absolute weight difference.
    Mean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerance {
    pub value: f64,
    #[serde(default)]
    pub metric: Metric,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { value: 1e-9, metric: Metric::Max }
    }
}

fn task_count() -> usize {
    SequenceTask::default().count
}

fn task_length() -> usize {
    SequenceTask::default().length
}

fn task_input_dim() -> usize {
    SequenceTask::default().input_dim
}

fn task_target_dim() -> usize {
    SequenceTask::default().target_dim
}

fn default_true() -> bool {
    true
}

fn default_buffer_init() -> BufferInit {
    BufferInit::Zero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub scenario: Scenario,
    pub mode: ModeName,
    pub epochs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Required for `custom`; must match the preset otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdParams>,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    /// Defaults to softmax cross-entropy for tables and MSE for sequences.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossKind>,
    #[serde(default = "default_true")]
    pub shuffle: bool,
    /// Momentum-buffer convention of the SGD oracle.
    #[serde(default = "default_buffer_init")]
    pub buffer_init: BufferInit,
    /// Defaults to the mode's own policy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_reset: Option<OmegaReset>,
    /// Only used by `online`; parity modes are always sequential.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Ordering>,
    /// Replay window for `rnn_truncated`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default)]
    pub tolerance: Tolerance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, HarnessError> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::config(path, e.to_string()))?;
        cfg.validate().map_err(|m| HarnessError::config(path, m))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::from_toml(&text, path)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Makes dataset paths relative to the config file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        match &mut self.dataset {
            DatasetConfig::Csv { path } | DatasetConfig::Jsonl { path } if path.is_relative() => {
                *path = base.join(&*path);
            }
            _ => {}
        }
    }

    /// Preset or custom SGD values.
    pub fn sgd_params(&self) -> Result<SgdParams, String> {
        match (self.scenario.preset(), self.sgd) {
            (Some(p), None) => Ok(p),
            (Some(p), Some(s)) if p == s => Ok(p),
            (Some(_), Some(_)) => {
                Err(format!("[sgd] contradicts the {} preset; use scenario = \"custom\"", self.scenario.name()))
            }
            (None, Some(s)) => Ok(s),
            (None, None) => Err("scenario \"custom\" needs an [sgd] table".into()),
        }
    }

    pub fn sgd_config(&self) -> Result<SgdConfig, String> {
        let p = self.sgd_params()?;
        Ok(SgdConfig { gamma: p.gamma, mu: p.mu, rho: p.rho, buffer_init: self.buffer_init })
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err("name must be a non-empty file-name-safe string".into());
        }
        let p = self.sgd_params()?;
        if !(p.tau > 0.0) || !p.tau.is_finite() {
            return Err("tau must be positive".into());
        }
        let sequence_mode = matches!(self.mode, ModeName::RnnUnfold | ModeName::RnnHlBptt | ModeName::RnnTruncated);
        let sequence_data = matches!(self.dataset, DatasetConfig::Sequences { .. } | DatasetConfig::Jsonl { .. });
        if sequence_mode != sequence_data {
            return Err("sequence modes need a sequence dataset and vice versa".into());
        }
        if matches!(self.mode, ModeName::RnnHlBptt | ModeName::RnnTruncated) && (p.mu != 0.0 || p.rho != 0.0) {
            return Err("replay modes compare against plain SGD on BPTT gradients; set mu = rho = 0".into());
        }
        match (self.mode, self.window) {
            (ModeName::RnnTruncated, None) => return Err("rnn_truncated needs window".into()),
            (ModeName::RnnTruncated, Some(0)) => return Err("window must be at least 1".into()),
            (ModeName::RnnTruncated, Some(_)) => {}
            (_, Some(_)) => return Err("window only applies to rnn_truncated".into()),
            _ => {}
        }
        if !(self.tolerance.value >= 0.0) {
            return Err("tolerance must be non-negative".into());
        }
        Ok(())
    }
}
