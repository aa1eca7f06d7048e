use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use retstat::harness::{acceptance, radius_sweep, run_experiment, run_induce, ExperimentConfig};
use retstat::Error;

#[derive(Parser)]
#[command(name = "retstat", version, about = "Return-time statistics for interval maps")]
struct Cli {
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses listed in a config file.
    Run { config: PathBuf },
    /// Repeat the return-time analysis over decreasing radii.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        radii: Vec<f64>,
    },
    /// Emit the return-branch partition and the induced-map certificate.
    Induce { config: PathBuf },
    /// Run the acceptance suite.
    Accept {
        /// Where run artifacts go.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Stage { source, .. } => exit_code(source),
        _ => 1,
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable")
}

fn run(cli: &Cli) -> Result<bool, Error> {
    match &cli.command {
        Command::Run { config } => {
            let report = run_experiment(&load(cli, config)?)?;
            println!("{}", json(&report.summary()));
            eprintln!("artifacts in {}", report.output_dir.display());
        }
        Command::Sweep { config, radii } => {
            let table = radius_sweep(&load(cli, config)?, radii)?;
            print!("{}", table.to_csv());
            if let Some(rho) = table.spearman {
                eprintln!("spearman(ks, radius) = {rho:.3}");
            }
        }
        Command::Induce { config } => {
            let (cert, dir) = run_induce(&load(cli, config)?)?;
            println!(
                "{} branches, expansion {:.6}, distortion {:.6}, unresolved {:.3e}",
                cert.branches_checked, cert.expansion_inf, cert.distortion_k, cert.unresolved_length
            );
            eprintln!("artifacts in {}", dir.display());
        }
        Command::Accept { output } => {
            let root = output.clone().unwrap_or_else(acceptance::default_root);
            let outcomes = acceptance::run_acceptance(&root, |o| println!("{o}"));
            let passed = outcomes.iter().filter(|o| o.passed).count();
            println!("{passed} of {} criteria passed", outcomes.len());
            return Ok(passed == outcomes.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers == Some(0) {
        eprintln!("error: --workers must be positive");
        return ExitCode::from(2);
    }
    let result = match cli.workers {
        // accept has no config to carry the worker count
        Some(n) if matches!(cli.command, Command::Accept { .. }) => {
            retstat::harness::with_workers(Some(n), || run(&cli)).unwrap_or_else(Err)
        }
        _ => run(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
