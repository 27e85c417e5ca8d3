use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gosafe::config::ExperimentConfig;
use gosafe::optimizer::Mode;
use gosafe::runner::{compare_modes, comparison_csv, run_experiment};
use gosafe::Error;

/// Globally safe Bayesian optimization experiments.
#[derive(Parser)]
#[command(name = "gosafe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its logs and exports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several modes with a shared seed and print a CSV table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<Mode>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the reachability closure and true optimum of a small grid.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig { .. } | Error::UnknownName { .. } => 2,
        Error::IntegrationDiverged { .. } => 3,
        Error::NoSafeSeed(_) => 4,
        _ => 1,
    }
}

fn load(path: &PathBuf) -> Result<ExperimentConfig, Error> {
    ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Error::config("--config", format!("{}: {io}", path.display())),
        other => other,
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            mode,
            out,
        } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(mode) = mode {
                cfg.optimizer.mode = mode;
            }
            let dir = out
                .or_else(|| cfg.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("gosafe-out"));
            let res = run_experiment(&cfg, Some(&dir))?;
            let s = &res.summary;
            println!(
                "mode={} iterations={} converged={} best_guess={:?} best_guess_reward={:.4} \
                 interruptions={} violations={} safe_set={}",
                s.mode.as_str(),
                s.run.iterations,
                s.run.converged,
                s.run.best_guess_params,
                s.best_guess_reward,
                s.run.interruptions,
                s.violations,
                s.run.safe_set_size
            );
            println!("outputs written to {}", dir.display());
            Ok(())
        }
        Command::Compare { config, modes, seed } => {
            let mut cfg = load(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let rows = compare_modes(&cfg, &modes)?;
            print!("{}", comparison_csv(&rows));
            Ok(())
        }
        Command::Oracle { config } => {
            let cfg = load(&config)?;
            let report = gosafe::oracle::oracle_report(&cfg)?;
            print!("{report}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
