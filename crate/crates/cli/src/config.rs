//! Declarative experiment configuration.
//!
//! A config is a single TOML file with nested sections:
//!
//! ```toml
//! [model]
//! kind = "flip_flop"
//!
//! [loss]
//! kind = "quadratic"
//! grid = [0.0, 0.5, 1.0]
//! [loss.feature]
//! kind = "value"
//!
//! [[strategies]]
//! kind = "constant"
//! value = 0.5
//!
//! [run]
//! horizon = 100
//! n_seeds = 1
//! master_seed = 0
//! ```
//!
//! Validation failures carry a field diagnostic and map to exit code 2.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use declab::losses::{Loss, LossSpec};
use declab::processes::{build_model, ModelSpec, ProcessModel};
use declab::strategies::{build_policy, StrategySpec};

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed or inconsistent configuration; exit code 2.
    #[error("invalid config: {0}")]
    Config(String),

    /// Failure while running a validated experiment; exit code 1.
    #[error("runtime failure (seed {seed}, strategy {strategy}): {source}")]
    Runtime {
        seed: u64,
        strategy: String,
        #[source]
        source: declab::Error,
    },

    #[error("diagnostics failed: {0}")]
    Diagnostics(#[source] declab::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub loss: LossSpec,
    pub strategies: Vec<StrategySpec>,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsSection>,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Scored horizon T; losses are averaged over k = 1..=T.
    pub horizon: usize,
    pub n_seeds: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Thresholds for the weak-optimality estimates.
    #[serde(default)]
    pub epsilons: Vec<f64>,
    /// Name of the reference strategy for weak-optimality comparisons;
    /// defaults to the first strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Conditioning window W.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Truncation level M; omitted means untruncated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
    /// Largest lag K of the conditional profile.
    #[serde(default = "default_max_lag")]
    pub max_lag: usize,
    /// Number of sampled windows.
    #[serde(default = "default_n_windows")]
    pub n_windows: usize,
    /// Number of absolute-regularity coefficients beta(1)..beta(n_max).
    #[serde(default = "default_beta_lags")]
    pub beta_lags: usize,
}

fn default_window() -> usize {
    64
}

fn default_max_lag() -> usize {
    50
}

fn default_n_windows() -> usize {
    100
}

fn default_beta_lags() -> usize {
    10
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            window: default_window(),
            truncation: None,
            max_lag: default_max_lag(),
            n_windows: default_n_windows(),
            beta_lags: default_beta_lags(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: default_out_dir() }
    }
}

/// Validated, buildable pieces of a config.
pub struct ValidatedExperiment {
    pub model: ProcessModel,
    pub loss: Loss,
    pub strategy_names: Vec<String>,
    pub reference_index: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every field and builds the model, loss, and strategy names.
    pub fn validate(&self) -> Result<ValidatedExperiment, CliError> {
        if self.run.horizon < 1 {
            return Err(CliError::Config("run.horizon: horizon must be >= 1".into()));
        }
        if self.run.n_seeds < 1 {
            return Err(CliError::Config("run.n_seeds: need at least one seed".into()));
        }
        if self.strategies.is_empty() {
            return Err(CliError::Config("strategies: need at least one strategy".into()));
        }
        let model = build_model(&self.model)
            .map_err(|e| CliError::Config(format!("model: {e}")))?;
        let loss = Loss::build(self.loss.clone())
            .map_err(|e| CliError::Config(format!("loss: {e}")))?;
        loss.validate_for(&model)
            .map_err(|e| CliError::Config(format!("loss: {e}")))?;
        let strategy_names: Vec<String> =
            self.strategies.iter().map(|s| s.name()).collect();
        for (i, a) in strategy_names.iter().enumerate() {
            if strategy_names[..i].contains(a) {
                return Err(CliError::Config(format!(
                    "strategies: duplicate strategy {a}"
                )));
            }
        }
        for (spec, name) in self.strategies.iter().zip(&strategy_names) {
            build_policy(spec, &model, &loss, 0, 0)
                .map_err(|e| CliError::Config(format!("strategies.{name}: {e}")))?;
        }
        for &eps in &self.run.epsilons {
            if eps <= 0.0 {
                return Err(CliError::Config(format!(
                    "run.epsilons: eps must be > 0, got {eps}"
                )));
            }
        }
        let reference_index = match &self.run.reference {
            None => 0,
            Some(name) => strategy_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| {
                    CliError::Config(format!("run.reference: no strategy named {name}"))
                })?,
        };
        if let Some(diag) = &self.diagnostics {
            if diag.max_lag > diag.window {
                return Err(CliError::Config(format!(
                    "diagnostics: max_lag {} exceeds window {}",
                    diag.max_lag, diag.window
                )));
            }
            if diag.n_windows == 0 {
                return Err(CliError::Config(
                    "diagnostics.n_windows: need at least one window".into(),
                ));
            }
            model
                .finite_hmm()
                .map_err(|e| CliError::Config(format!("diagnostics: {e}")))?;
            if !loss.is_state_only() {
                return Err(CliError::Config(
                    "diagnostics: the conditional profile needs a state-only loss".into(),
                ));
            }
        }
        Ok(ValidatedExperiment { model, loss, strategy_names, reference_index })
    }
}
