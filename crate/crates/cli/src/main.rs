//! `sieve-lab`: audits, bias certificates, simulations and rate sweeps.

mod config;
mod plot;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::Mode;
use run::{Artifact, RunError};

#[derive(Parser)]
#[command(name = "sieve-lab", version, about = "Sieve bias audits and experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the condition constants of one or more models.
    Audit(Common),
    /// Assemble bias certificates.
    Certify(Common),
    /// Replicate the profile estimator on simulated data.
    Simulate(Common),
    /// Sweep the bias quantities over sieve dimensions.
    Rates(Common),
    /// Check every bound against the measured quantity on oracle models.
    VerifyBounds(Common),
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    mode: &'static str,
    seed: u64,
    config_sha256: String,
    outputs: Vec<OutputEntry>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_outputs(dir: &Path, mode: Mode, seed: u64, config_text: &str, artifacts: &[Artifact]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut outputs = Vec::new();
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.contents)?;
        outputs.push(OutputEntry {
            file: a.name.clone(),
            sha256: sha256_hex(a.contents.as_bytes()),
        });
    }
    let manifest = Manifest {
        tool: "sieve-lab",
        version: env!("CARGO_PKG_VERSION"),
        mode: mode.name(),
        seed,
        config_sha256: sha256_hex(config_text.as_bytes()),
        outputs,
    };
    let mut json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(dir.join("manifest.json"), json)
}

fn execute(mode: Mode, args: &Common) -> Result<PathBuf, RunError> {
    let loaded = config::load(&args.config)?;
    let cfg = loaded.config;
    let seed = args.seed.unwrap_or(cfg.seed);
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    let artifacts = run::run(mode, &cfg, seed)?;
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    write_outputs(&dir, mode, seed, &loaded.text, &artifacts)?;
    Ok(dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Audit(a) => (Mode::Audit, a),
        Command::Certify(a) => (Mode::Certify, a),
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Rates(a) => (Mode::Rates, a),
        Command::VerifyBounds(a) => (Mode::VerifyBounds, a),
    };
    match execute(mode, args) {
        Ok(dir) => {
            println!("{}: outputs written to {}", mode.name(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                RunError::Config(_) => 2,
                RunError::Numerical(_) => 3,
                RunError::Io(_) => 1,
            })
        }
    }
}
