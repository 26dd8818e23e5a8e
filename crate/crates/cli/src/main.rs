use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

#[derive(Parser)]
#[command(name = "voxevo", version, about = "Evolve, transfer, replay and summarize voxel soft-robot runs")]
struct Cli {
    /// Worker threads for episode evaluation (0 = all cores).
    #[arg(long, global = true, env = "VOXEVO_WORKERS", default_value_t = 0)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run evolution (a single run or a battery) from a config file.
    Evolve(EvolveArgs),
    /// Zero- and one-shot transfer of a champion to neighboring bodies.
    Transfer(TransferArgs),
    /// Re-run a champion's episode and export its trajectory.
    Replay(ReplayArgs),
    /// Summarize a finished run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct EvolveArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; must not exist or be empty.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    champion: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    champion: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    run_dir: PathBuf,
    /// Where to write summary files (default: the run directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Evolve(a) => commands::evolve(&a.config, a.seed, &a.out),
        Command::Transfer(a) => commands::transfer(&a.config, &a.champion, a.seed, &a.out),
        Command::Replay(a) => commands::replay(&a.champion, &a.out),
        Command::Report(a) => commands::report(&a.run_dir, a.out.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e
                .downcast_ref::<voxevo_core::Error>()
                .is_some_and(|e| matches!(e, voxevo_core::Error::Config { .. }));
            ExitCode::from(if config_error { 2 } else { 1 })
        }
    }
}
