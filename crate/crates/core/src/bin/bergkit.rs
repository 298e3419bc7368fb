use std::path::PathBuf;
use std::process::ExitCode;

use bergkit::cli::{self, Command, RunConfig};
use bergkit::Error;
use clap::Parser;

/// Run the bergkit verification suites from a JSON config.
#[derive(Parser, Debug)]
#[command(name = "bergkit", version)]
struct Args {
    /// Suite to run (overrides the config's `command`).
    #[arg(value_enum)]
    command: Command,
    /// Path to the JSON run config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized inputs (overrides `seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("bergkit: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    match cli::run(&cfg, Some(args.command)) {
        Ok(outcome) => {
            let s = &outcome.summary;
            for c in &s.checks {
                println!("{:<4} {:<40} {:.6e}", if c.status == cli::Status::Pass { "ok" } else { "FAIL" }, c.name, c.measured);
            }
            println!("{} passed, {} failed; summary in {}", s.passed, s.failed, cfg.output_dir.join("summary.json").display());
            if s.all_passed() {
                ExitCode::SUCCESS
            } else {
                for c in s.failures() {
                    eprintln!("bergkit: check {} failed: measured {:.6e}, threshold {:?}", c.name, c.measured, c.threshold);
                }
                ExitCode::from(1)
            }
        }
        Err(e @ Error::Config { .. }) => {
            eprintln!("bergkit: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("bergkit: {e}");
            ExitCode::from(3)
        }
    }
}
