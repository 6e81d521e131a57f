//! Experiment execution and artifact generation.
//!
//! Per-seed work fans out over a rayon pool; results are collected in seed
//! order and aggregated by a single writer, so the reported numbers and the
//! emitted bytes do not depend on the thread count.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use declab::evaluation::{
    beta_mixing_profile, conditional_mixing_profile, time_average_loss, weak_opt_from_diffs,
    MixingParams,
};

use crate::config::{CliError, ExperimentConfig};

/// Profile windows use their own seed streams, away from trajectory paths.
const PROFILE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Prints a float with 17 significant digits, enough to reparse the exact
/// same f64 from the CSV.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeakOptRow {
    pub eps: f64,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategySummary {
    pub name: String,
    pub mean_final_loss: f64,
    pub min_final_loss: f64,
    pub max_final_loss: f64,
    /// P[L_T(this) - L_T(reference) >= -eps] per configured eps; empty for
    /// the reference strategy itself.
    pub weak_opt_vs_reference: Vec<WeakOptRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub window: usize,
    pub truncation: String,
    pub conditional_magnitudes: Vec<f64>,
    pub conditional_cesaro: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Everything `report.json` holds. All statistics are recomputable from the
/// per-path CSV; wall clock and version are metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub reference_strategy: String,
    pub strategies: Vec<StrategySummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsReport>,
    pub config: ExperimentConfig,
}

/// In-memory results of one experiment run.
pub struct RunArtifacts {
    pub report: RunReport,
    pub trajectories_csv: String,
    pub profiles_csv: String,
    /// Final time-average losses, finals[strategy][seed].
    pub finals: Vec<Vec<f64>>,
    pub strategy_names: Vec<String>,
}

/// Runs every (strategy, seed) pair of a validated config.
pub fn execute(config: &ExperimentConfig, threads: usize) -> Result<RunArtifacts, CliError> {
    let started = Instant::now();
    let validated = config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    let model = &validated.model;
    let loss = &validated.loss;
    let horizon = config.run.horizon;
    let master = config.run.master_seed;
    let n_seeds = config.run.n_seeds as u64;

    let mut finals: Vec<Vec<f64>> = Vec::with_capacity(config.strategies.len());
    for (spec, name) in config.strategies.iter().zip(&validated.strategy_names) {
        let per_seed: Vec<Result<f64, CliError>> = pool.install(|| {
            (0..n_seeds)
                .into_par_iter()
                .map(|seed| {
                    time_average_loss(model, spec, loss, horizon, master, seed)
                        .map(|t| t.final_average())
                        .map_err(|e| CliError::Runtime {
                            seed,
                            strategy: name.clone(),
                            source: e,
                        })
                })
                .collect()
        });
        finals.push(per_seed.into_iter().collect::<Result<Vec<f64>, CliError>>()?);
    }

    let diagnostics = match &config.diagnostics {
        None => None,
        Some(diag) => {
            let params = MixingParams {
                window: diag.window,
                truncation: diag.truncation,
                max_lag: diag.max_lag,
                n_windows: diag.n_windows,
                master_seed: master ^ PROFILE_SEED_SALT,
            };
            let profile = conditional_mixing_profile(model, loss, &params)
                .map_err(CliError::Diagnostics)?;
            let beta =
                beta_mixing_profile(model, diag.beta_lags).map_err(CliError::Diagnostics)?;
            Some(DiagnosticsReport {
                window: diag.window,
                truncation: truncation_label(diag.truncation),
                conditional_magnitudes: profile.magnitudes,
                conditional_cesaro: profile.cesaro,
                beta,
            })
        }
    };

    let reference_index = validated.reference_index;
    let strategies: Vec<StrategySummary> = finals
        .iter()
        .enumerate()
        .map(|(si, per_seed)| {
            let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
            let min = per_seed.iter().copied().fold(f64::INFINITY, f64::min);
            let max = per_seed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let weak_opt = if si == reference_index {
                Vec::new()
            } else {
                let diffs: Vec<f64> = per_seed
                    .iter()
                    .zip(&finals[reference_index])
                    .map(|(a, b)| a - b)
                    .collect();
                config
                    .run
                    .epsilons
                    .iter()
                    .map(|&eps| {
                        let est = weak_opt_from_diffs(&diffs, eps);
                        WeakOptRow {
                            eps,
                            estimate: est.estimate,
                            lower: est.lower,
                            upper: est.upper,
                        }
                    })
                    .collect()
            };
            StrategySummary {
                name: validated.strategy_names[si].clone(),
                mean_final_loss: mean,
                min_final_loss: min,
                max_final_loss: max,
                weak_opt_vs_reference: weak_opt,
            }
        })
        .collect();

    let trajectories_csv =
        trajectories_csv(&validated.strategy_names, &finals, horizon);
    let profiles_csv = profiles_csv(diagnostics.as_ref());

    let report = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        reference_strategy: validated.strategy_names[reference_index].clone(),
        strategies,
        diagnostics,
        config: config.clone(),
    };
    Ok(RunArtifacts {
        report,
        trajectories_csv,
        profiles_csv,
        finals,
        strategy_names: validated.strategy_names,
    })
}

fn truncation_label(truncation: Option<f64>) -> String {
    match truncation {
        None => "inf".into(),
        Some(m) => format!("{m}"),
    }
}

/// CSV columns: seed:int, strategy:string, T:int, L_T:float17.
pub fn trajectories_csv(names: &[String], finals: &[Vec<f64>], horizon: usize) -> String {
    let mut out = String::from("seed,strategy,T,L_T\n");
    for (name, per_seed) in names.iter().zip(finals) {
        for (seed, v) in per_seed.iter().enumerate() {
            out.push_str(&format!("{seed},{name},{horizon},{}\n", fmt_f64(*v)));
        }
    }
    out
}

/// CSV columns: kind:string, index:int, value:float17, W:int, M:string.
pub fn profiles_csv(diagnostics: Option<&DiagnosticsReport>) -> String {
    let mut out = String::from("kind,index,value,W,M\n");
    if let Some(diag) = diagnostics {
        for (k, v) in diag.conditional_magnitudes.iter().enumerate() {
            out.push_str(&format!(
                "conditional_m,{k},{},{},{}\n",
                fmt_f64(*v),
                diag.window,
                diag.truncation
            ));
        }
        for (i, v) in diag.conditional_cesaro.iter().enumerate() {
            out.push_str(&format!(
                "conditional_cesaro,{},{},{},{}\n",
                i + 1,
                fmt_f64(*v),
                diag.window,
                diag.truncation
            ));
        }
        for (i, v) in diag.beta.iter().enumerate() {
            out.push_str(&format!("beta,{},{},0,na\n", i + 1, fmt_f64(*v)));
        }
    }
    out
}

/// Writes trajectories.csv, profiles.csv, and report.json into `dir`.
pub fn write_artifacts(dir: &Path, artifacts: &RunArtifacts) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("trajectories.csv"), &artifacts.trajectories_csv)?;
    std::fs::write(dir.join("profiles.csv"), &artifacts.profiles_csv)?;
    let json = serde_json::to_string_pretty(&artifacts.report)
        .map_err(|e| CliError::Config(format!("report serialization: {e}")))?;
    std::fs::write(dir.join("report.json"), json)?;
    Ok(())
}
