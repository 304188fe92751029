use std::path::PathBuf;
use std::process::ExitCode;

use bfarl_core::synthetic::{generate, SyntheticConfig};
use bfarl_harness::config::ExperimentConfig;
use bfarl_harness::output::write_outputs;
use bfarl_harness::{oracles, run_experiment, HarnessError};
use clap::{Args, Parser, Subcommand};
use log::{error, info};

#[derive(Parser)]
#[command(name = "bfarl", version, about = "Bias-tolerant fair classification experiments")]
struct Cli {
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a TOML config file.
    Run {
        config: PathBuf,
        /// Override the config's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Parallel runs (0 = one per core).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Parse and validate a config file without running it.
    ValidateConfig { config: PathBuf },
    /// Write a synthetic dataset in the interchange CSV format.
    GenSynthetic(GenArgs),
    /// Run the numerical self-checks.
    CheckOracles {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 15)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    a_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    rarity: f64,
    #[arg(long, default_value_t = 0.0)]
    flip_amount: f64,
    #[arg(long, default_value_t = 1.0)]
    w_sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory to write `synthetic.csv` into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out_dir,
            jobs,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let dir = out_dir
                .or_else(|| cfg.out_dir.clone())
                .unwrap_or_else(|| PathBuf::from("results"));
            info!("running {:?} with {} repetitions", cfg.kind, cfg.repetitions);
            let out = run_experiment(&cfg, jobs)?;
            for path in write_outputs(&cfg, &out, &dir)? {
                info!("wrote {}", path.display());
            }
            for f in &out.failures {
                error!("cell {} rep {}: {}", f.cell, f.rep, f.message);
            }
            if !out.failures.is_empty() {
                return Err(HarnessError::RunsFailed {
                    failed: out.failures.len(),
                    total: out.records.len() + out.intensity.len() + out.failures.len(),
                });
            }
            Ok(true)
        }
        Command::ValidateConfig { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            println!("ok {} ({} cells, hash {})", config.display(), cfg.cells().len(), cfg.hash());
            Ok(true)
        }
        Command::GenSynthetic(a) => {
            let cfg = SyntheticConfig {
                n: a.n,
                k: a.k,
                a_rate: a.a_rate,
                rarity: a.rarity,
                flip_amount: a.flip_amount,
                w_sigma: a.w_sigma,
                seed: a.seed,
            };
            let data = generate(&cfg)?.data;
            std::fs::create_dir_all(&a.out_dir).map_err(|e| HarnessError::io(&a.out_dir, e))?;
            let path = a.out_dir.join("synthetic.csv");
            data.save_csv(&path)?;
            info!("wrote {} rows to {}", data.len(), path.display());
            Ok(true)
        }
        Command::CheckOracles { seed } => {
            let mut all = true;
            for c in oracles::run_all(seed)? {
                println!(
                    "{} {}: {} cases, worst {:e} (tolerance {:e})",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.cases,
                    c.worst,
                    c.tolerance
                );
                all &= c.passed;
            }
            Ok(all)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
