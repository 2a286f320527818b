//! `weds`: spectral bases, descriptors, matching, evaluation and the MGCN
//! from the command line.
//!
//! Exit codes: 0 success, 1 usage, 2 data or validation error, 3 numerical
//! failure. `WEDS_THREADS` caps the worker threads.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;
use config::PipelineConfig;
use error::{CliError, Result};

pub const THREADS_VAR: &str = "WEDS_THREADS";

#[derive(Debug, Parser)]
#[command(name = "weds", version, about = "Wavelet energy descriptors and multiscale graph convolution on meshes")]
struct Cli {
    /// TOML pipeline configuration; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute or reuse the cached eigenbasis of a mesh.
    Basis(BasisArgs),
    /// Per-vertex WEDS, HKS or WKS descriptors.
    Descriptor(DescriptorArgs),
    /// Nearest-neighbor correspondences between two descriptor files.
    Match(MatchArgs),
    /// Geodesic error, CGE and CMC reports for a correspondence file.
    Eval(EvalArgs),
    /// Train a network on the configured meshes.
    Train(TrainArgs),
    /// Learned descriptors from a checkpoint.
    Infer(InferArgs),
    /// Colored PLY of descriptor distances to one vertex.
    Dissimilarity(DissimilarityArgs),
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_VAR} must be a positive integer, got '{value}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    match cli.command {
        Command::Basis(a) => basis(a, &config),
        Command::Descriptor(a) => descriptor(a, &config),
        Command::Match(a) => match_descriptors(a),
        Command::Eval(a) => eval(a, &config),
        Command::Train(a) => train_model(a, &config),
        Command::Infer(a) => infer(a, &config),
        Command::Dissimilarity(a) => dissimilarity(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let failed = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if failed { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["weds", "basis", "--mesh", "m.off", "--seed", "4", "--k", "9"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert!(matches!(cli.command, Command::Basis(BasisArgs { k: Some(9), .. })));
    }
}
