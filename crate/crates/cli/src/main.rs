use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sncox_cli::{run, ExperimentConfig, Mode, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "sncox", version, about = "Shot-noise driven infinite-server queue experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate occupancy paths.
    Simulate(Common),
    /// Evaluate transforms and moments at the configured queries.
    Analyze(Common),
    /// Run the scaling experiment.
    Fclt(Common),
    /// Compare every formula with simulation.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Simulate(c) => (Mode::Simulate, c),
        Command::Analyze(c) => (Mode::Analyze, c),
        Command::Fclt(c) => (Mode::Fclt, c),
        Command::Verify(c) => (Mode::Verify, c),
    };
    match execute(mode, common) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(mode: Mode, c: Common) -> Result<Vec<PathBuf>, RunError> {
    if let Some(n) = c.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Config(format!("threads: {e}")))?;
    }
    let cfg = ExperimentConfig::load(&c.config)?;
    let opts = RunOptions {
        mode: Some(mode),
        seed: c.seed,
        reps: c.reps,
        out: c.out,
    };
    Ok(run(cfg, &opts)?.files)
}
