use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pmorder_cli::{run_experiment, write_outputs, ExperimentConfig, KINDS};

#[derive(Parser)]
#[command(
    name = "pmorder",
    about = "Exact ordering experiments for pseudo-marginal Metropolis-Hastings kernels",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write report.json plus CSV tables.
    Run {
        /// Path to the JSON experiment configuration.
        config: PathBuf,
        /// Output directory (created if missing).
        #[arg(long, default_value = "pmorder-out")]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for the sweep experiments.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
    /// List the available experiment kinds.
    ListKinds,
    /// Validate a config file without running it.
    Validate {
        config: PathBuf,
    },
}

fn load_config(path: &PathBuf, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    let mut config = ExperimentConfig::from_json(&text)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(passed) => {
            if passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, out, seed, threads } => {
            let config = load_config(&config, seed)?;
            let output = run_experiment(&config, threads.max(1))?;
            let report_path = write_outputs(&out, &output)?;
            for v in &output.report.verdicts {
                println!(
                    "{} {}: value {:.12e} vs {:.12e} (tolerance {:.1e}, oracle: {})",
                    if v.passed { "PASS" } else { "FAIL" },
                    v.name,
                    v.value,
                    v.threshold,
                    v.tolerance,
                    v.oracle
                );
            }
            let passed = output.report.all_passed();
            println!(
                "{}: {} verdicts, report at {}",
                if passed { "ok" } else { "FAILED" },
                output.report.verdicts.len(),
                report_path.display()
            );
            Ok(passed)
        }
        Command::ListKinds => {
            for kind in KINDS {
                println!("{kind}");
            }
            Ok(true)
        }
        Command::Validate { config } => {
            let config = load_config(&config, None)?;
            println!("ok: kind={} seed={}", config.kind.name(), config.seed);
            Ok(true)
        }
    }
}
