use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use grkbs::harness::{run_experiment, verify_config, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "grkbs",
    version,
    about = "Sparse training over atomic measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Validate a config and its inputs without running it.
    Verify { config: PathBuf },
}

fn load(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    cfg.apply_env_seed()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { config, output_dir } => load(&config).and_then(|mut cfg| {
            if let Some(dir) = output_dir {
                cfg.output_dir = dir.display().to_string();
            }
            let outcome = run_experiment(&cfg)?;
            for a in &outcome.artifacts {
                println!("{}", a.display());
            }
            if outcome.status.exit_code() != 0 {
                eprintln!("grkbs: training did not reach the certificate tolerance");
            }
            Ok(outcome.status.exit_code() as u8)
        }),
        Command::Verify { config } => load(&config).and_then(|cfg| {
            println!("{}", verify_config(&cfg)?);
            Ok(0)
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("grkbs: {e:#}");
            ExitCode::from(1)
        }
    }
}
