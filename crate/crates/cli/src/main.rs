use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fpmeasure_cli::config::Format;
use fpmeasure_cli::run::{failure_summary, output_dir};
use fpmeasure_cli::{load_config, run, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "fpmeasure", version, about = "Stationary densities, sublevel-set profiles and measure bounds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the stationary density.
    Solve(Common),
    /// Density and measure profile.
    Profile(Common),
    /// Density, profile and the flux identity checks.
    Identity(Common),
    /// The full pipeline including the bound checks.
    Bounds(Common),
    /// Same as `bounds`.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Output formats, overriding `output.formats`.
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<Format>>,
    /// Precomputed density CSV to use instead of solving.
    #[arg(long)]
    density: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, c) = match cli.command {
        Command::Solve(c) => (Stage::Solve, c),
        Command::Profile(c) => (Stage::Profile, c),
        Command::Identity(c) => (Stage::Identity, c),
        Command::Bounds(c) | Command::All(c) => (Stage::Bounds, c),
    };
    if let Some(n) = c.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let opts = RunOptions {
        stage,
        out: c.out,
        formats: c.format,
        density: c.density,
    };
    let cfg = match load_config(&c.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            let dir = output_dir(None, &opts);
            failure_summary(&e, stage, opts.out.as_ref().map(|_| dir.as_path()));
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let outcome = run(&cfg, &opts);
    if let Some(err) = outcome.summary.get("error").filter(|e| !e.is_null()) {
        eprintln!("error: {}", err["message"].as_str().unwrap_or("unknown"));
    }
    println!(
        "{}: {} of {} bound checks satisfied, exit {} (summary in {})",
        stage.name(),
        outcome.summary["checks_satisfied"],
        outcome.summary["checks_run"],
        outcome.exit_code,
        outcome.out_dir.join("summary.json").display()
    );
    ExitCode::from(outcome.exit_code as u8)
}
