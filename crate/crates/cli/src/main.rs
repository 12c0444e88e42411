use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use polaron_cli::{exit_code_for, main_with, Command, Outcome};

/// Landau-Pekar polaron experiments.
#[derive(Debug, Parser)]
#[command(name = "polaron", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("POLARON_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("POLARON_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match main_with(cli.command, &cli.config, cli.out.as_deref(), cli.seed) {
        Ok((outcome, dir)) => {
            match &outcome {
                Outcome::Complete => eprintln!("{} complete: {}", cli.command.name(), dir.display()),
                Outcome::Partial { failures } => {
                    eprintln!("{} incomplete, see {}/MANIFEST", cli.command.name(), dir.display());
                    for f in failures {
                        eprintln!("  failed: {f}");
                    }
                }
                Outcome::ChecksFailed { failed } => {
                    eprintln!("checks failed: {}", failed.join(", "));
                }
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}
