use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

mod commands;

use commands::{Command, Outcome, EXIT_CONFIG};

#[derive(Parser, Debug)]
#[command(name = "qimeasure", version, about = "Quasi-invariant path measures on subshifts of finite type")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Strongly invariant reference measure ρ_A as CSV.
    Invariant(Opts),
    /// h_V, ν_V and the fixed measure μ₀ = h_V dρ_A.
    Fixpoint(Opts),
    /// Residuals of every identity the configuration supports.
    Verify(Opts),
    /// Exact path samples and a Monte Carlo check of the marginal.
    Sample(Opts),
    /// Relative ergodicity test and decomposition.
    Ergodicity(Opts),
}

#[derive(Args, Debug)]
struct Opts {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Cylinder depth.
    #[arg(long)]
    depth: Option<usize>,
    /// Pass/fail tolerance for residuals.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap for h_V.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Number of sampled paths.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Path steps (sampling) and levels (verify).
    #[arg(long)]
    steps: Option<usize>,
    /// Sampling threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for CSV and JSON outputs.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(command: Command, opts: &Opts) -> Outcome {
    let text = match fs::read(&opts.config) {
        Ok(t) => t,
        Err(e) => return Outcome::error(EXIT_CONFIG, format!("cannot read {}: {e}", opts.config.display())),
    };
    let hash = hex::encode(Sha256::digest(&text));
    let text = match String::from_utf8(text) {
        Ok(t) => t,
        Err(_) => return Outcome::error(EXIT_CONFIG, "config is not UTF-8".into()),
    };
    let mut config = match qimeasure::config::parse_config(&text) {
        Ok(c) => c,
        Err(e) => return Outcome::error(EXIT_CONFIG, e.to_string()),
    };
    let p = &mut config.params;
    p.depth = opts.depth.unwrap_or(p.depth);
    p.tol = opts.tol.unwrap_or(p.tol);
    p.n_max = opts.max_iter.unwrap_or(p.n_max);
    p.samples = opts.samples.unwrap_or(p.samples);
    p.seed = opts.seed.unwrap_or(p.seed);
    p.steps = opts.steps.unwrap_or(p.steps);
    p.workers = opts.workers.unwrap_or(p.workers);
    if let Err(e) = p.validate() {
        return Outcome::error(EXIT_CONFIG, e.to_string());
    }
    commands::run(command, &config, &hash)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Cmd::Invariant(o) => (Command::Invariant, o),
        Cmd::Fixpoint(o) => (Command::Fixpoint, o),
        Cmd::Verify(o) => (Command::Verify, o),
        Cmd::Sample(o) => (Command::Sample, o),
        Cmd::Ergodicity(o) => (Command::Ergodicity, o),
    };
    let outcome = run(command, opts);
    for line in &outcome.warnings {
        eprintln!("warning: {line}");
    }
    if let Some(msg) = &outcome.error {
        eprintln!("error: {msg}");
    }
    if let Some(dir) = &opts.out {
        if let Err(e) = fs::create_dir_all(dir) {
            eprintln!("error: cannot create {}: {e}", dir.display());
            return ExitCode::from(EXIT_CONFIG);
        }
        for (name, contents) in &outcome.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, contents) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    print!("{}", outcome.stdout);
    ExitCode::from(outcome.code)
}
