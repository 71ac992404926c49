mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use crate::commands::Outcome;
use crate::config::{CliError, Overrides, RunConfig, EXIT_CONFIG, EXIT_VIOLATION};

/// Eigenvalue bounds and determinant-based eigenvalue counting for
/// Schrödinger operators with complex potentials.
#[derive(Parser, Debug)]
#[command(name = "eigenbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Potential and run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Decay weight ε (required for exponentially decaying potentials).
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Nyström grid as NRxNA, e.g. 12x38.
    #[arg(long, global = true)]
    grid: Option<String>,
    /// k-plane rectangle RE0,RE1,IM0,IM1.
    #[arg(long, global = true, allow_hyphen_values = true)]
    region: Option<String>,
    /// Directory for JSON and CSV outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Append refined-grid error estimates (scan).
    #[arg(long, global = true)]
    refine: bool,
    /// Seed of the low-discrepancy sampler.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the JSON report instead of the summary.
    #[arg(long, global = true)]
    json: bool,
    /// Corrupt one input of the verify suite (testing hook).
    #[arg(long, global = true, hide = true)]
    fault: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Count and radius bounds with all intermediate constants.
    Bounds,
    /// Determinant values on a rectangular k-grid (CSV).
    Scan,
    /// Locate eigenvalues by the argument principle.
    Count,
    /// Run the inequality suite; exit 2 on a violated check.
    Verify,
    /// Compare 3D counts with the partial-wave oracle (radial potentials).
    CompareOracle,
}

fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::config("--config is required"))?;
    let ov = Overrides {
        eps: cli.eps,
        grid: cli.grid.clone(),
        region: cli.region.clone(),
        out: cli.out.clone(),
        threads: cli.threads,
        refine: cli.refine,
        seed: cli.seed,
        fault: cli.fault.clone(),
    };
    let cfg = RunConfig::load(path, &ov)?;
    if let Some(n) = cfg.threads {
        eigenbound::par::init_global(n).map_err(CliError::config)?;
    }
    info!("{:?} on {} with {} worker(s)", cli.command, cfg.potential.family_name(), eigenbound::par::current_threads());
    let outcome = match cli.command {
        Command::Bounds => commands::bounds(&cfg)?,
        Command::Scan => commands::scan(&cfg)?,
        Command::Count => commands::count(&cfg)?,
        Command::Verify => commands::verify(&cfg)?,
        Command::CompareOracle => commands::compare_oracle(&cfg)?,
    };
    if let Some(dir) = &cfg.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
        for (name, bytes) in &outcome.files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| CliError::config(format!("cannot write {}: {e}", p.display())))?;
        }
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json"));
            } else {
                print!("{}", out.text);
            }
            match out.violation {
                Some(v) => {
                    eprintln!("invariant violated: {v}");
                    ExitCode::from(EXIT_VIOLATION)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
