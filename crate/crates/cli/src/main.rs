use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use declab_cli::config::{CliError, ExperimentConfig};
use declab_cli::registry::reproduce;
use declab_cli::runner::{execute, fmt_f64, write_artifacts, RunArtifacts};

#[derive(Parser)]
#[command(name = "declab", version, about = "Sequential decisions under partial information: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run {
        /// Path to the experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 picks the number of cores. Does not change
        /// any reported number.
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Run a registered experiment and print its pass/fail table.
    Reproduce {
        /// One of the registered experiment names.
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// List the model catalog.
    ListModels,
    /// List the loss catalog.
    ListLosses,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, seed, threads } => run_command(&config, out, seed, threads),
        Command::Reproduce { name, out, threads } => reproduce_command(&name, out, threads),
        Command::ListModels => {
            print_models();
            Ok(ExitCode::SUCCESS)
        }
        Command::ListLosses => {
            print_losses();
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run_command(
    config_path: &PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    threads: usize,
) -> Result<ExitCode, CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    if let Some(seed) = seed {
        config.run.master_seed = seed;
    }
    if let Some(dir) = out {
        config.output.dir = dir;
    }
    let artifacts = execute(&config, threads)?;
    write_artifacts(&config.output.dir, &artifacts)?;
    print_summary(&artifacts);
    println!("artifacts written to {}", config.output.dir.display());
    Ok(ExitCode::SUCCESS)
}

fn reproduce_command(
    name: &str,
    out: Option<PathBuf>,
    threads: usize,
) -> Result<ExitCode, CliError> {
    let outcome = reproduce(name, threads)?;
    let dir = out.unwrap_or_else(|| PathBuf::from("out").join(name));
    write_artifacts(&dir, &outcome.artifacts)?;
    print_summary(&outcome.artifacts);
    println!("\n{name}: checks");
    let mut all_passed = true;
    for check in &outcome.checks {
        let tag = if check.passed { "PASS" } else { "FAIL" };
        all_passed &= check.passed;
        println!("  [{tag}] {}", check.name);
        println!("         expected: {}", check.expected);
        println!("         measured: {}", check.measured);
    }
    println!("artifacts written to {}", dir.display());
    if all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::FAILURE)
    }
}

fn print_summary(artifacts: &RunArtifacts) {
    println!(
        "{:<32} {:>22} {:>22} {:>22}",
        "strategy", "mean L_T", "min L_T", "max L_T"
    );
    for s in &artifacts.report.strategies {
        println!(
            "{:<32} {:>22} {:>22} {:>22}",
            s.name,
            fmt_f64(s.mean_final_loss),
            fmt_f64(s.min_final_loss),
            fmt_f64(s.max_final_loss)
        );
        for row in &s.weak_opt_vs_reference {
            println!(
                "    P[L_T - L_T({}) >= -{}] = {} (95% CI {} .. {})",
                artifacts.report.reference_strategy,
                row.eps,
                fmt_f64(row.estimate),
                fmt_f64(row.lower),
                fmt_f64(row.upper)
            );
        }
    }
    if let Some(diag) = &artifacts.report.diagnostics {
        println!(
            "diagnostics: W={} M={} m_0={} cesaro[K]={} beta(1)={}",
            diag.window,
            diag.truncation,
            fmt_f64(diag.conditional_magnitudes[0]),
            fmt_f64(*diag.conditional_cesaro.last().unwrap_or(&f64::NAN)),
            fmt_f64(*diag.beta.first().unwrap_or(&f64::NAN)),
        );
    }
}

fn print_models() {
    println!("model kinds (config section [model]):");
    println!("  flip_flop          two-state deterministic alternation, blind observations");
    println!("  xor_pair           paired fair bits observed through their XOR");
    println!("  binary_expansion   dyadic averaging chain driven by fair bits;");
    println!("                     fields: depth (default 32), past_reach (default 8)");
    println!("  lookahead_iid      i.i.d. fair bits, blind observations");
    println!("  doubling_map       bit-shift map on dyadic rationals; field: depth");
    println!("  finite_hmm         fields: transition (d x d row-stochastic),");
    println!("                     observation (d x m row-stochastic)");
    println!("\n{}", EXPERIMENT_NAMES_NOTE);
}

fn print_losses() {
    println!("loss kinds (config section [loss]):");
    println!("  quadratic          (u - f(x))^2; fields: feature, grid");
    println!("  lp_prediction      |u - f(x)|^p; fields: feature, p, grid");
    println!("  log_portfolio      -log<u, returns(x)>; fields: returns, steps");
    println!("  interval           0/1 miss indicator; fields: feature, eps, grid");
    println!("  bit_loss           driving bit at k - u + 1; field: max_offset");
    println!("  lookahead_index    hidden bit at k + u; field: max_offset");
    println!("\nfeatures: value | pair_first | table (per-state values)");
    println!("\n{}", EXPERIMENT_NAMES_NOTE);
}

const EXPERIMENT_NAMES_NOTE: &str =
    "registered experiments for `declab reproduce`: example-1.2, example-1.3,\nexample-2.4, example-2.5, hmm-filter-optimality, particle-approx";
