//! Command-line experiments: synthesize and augment demonstrations,
//! retarget them, train residual policies and evaluate them, with every
//! random draw derived from one seed.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use thiserror::Error;

mod commands;
pub mod config;
pub mod output;

pub use commands::{build_task, eval_seeds, heldout_task, load_demos, parse_method, Split};
pub use config::ExperimentConfig;
pub use output::{Manifest, ManifestEntry, Output, MANIFEST_FILE};

/// A failure tagged with the pipeline stage it came from. Displays as one
/// line: `stage: message`.
#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct CliError {
    pub stage: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(stage: &'static str, message: impl Into<String>) -> Self {
        let message: String = message.into();
        CliError {
            stage,
            message: message.split_whitespace().collect::<Vec<_>>().join(" "),
        }
    }
}

/// Seed of the named random stream `name` under the run seed: the first
/// eight bytes (little-endian) of SHA-256 over the name, a zero byte and
/// the seed's little-endian bytes.
pub fn substream(seed: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([0u8]);
    h.update(seed.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

pub const OUT_ENV: &str = "HANDOFF_OUT";
pub const DEFAULT_OUT: &str = "handoff-out";

#[derive(Debug, Parser)]
#[command(name = "handoff", version, about = "Retarget hand demonstrations and train residual grasp policies")]
pub struct Cli {
    #[command(flatten)]
    pub globals: Globals,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Globals {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; overrides the config and HANDOFF_OUT.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic demonstrations from a synthesis spec.
    Synth {
        /// Synthesis spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        count: usize,
    },
    /// Write randomly re-placed copies of a demonstration.
    Augment {
        #[arg(long)]
        demo: PathBuf,
        /// Workspace box and yaw range (TOML).
        #[arg(long)]
        workspace: PathBuf,
        #[arg(long)]
        count: usize,
    },
    /// Retarget the config's demonstrations with one method.
    Retarget {
        #[arg(long)]
        method: String,
    },
    /// Train a residual policy.
    Train,
    /// Evaluate a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = Split::Seen)]
        split: Split,
    },
    /// Evaluate retargeting baselines and checkpoints side by side.
    Compare {
        /// Comma-separated retargeting methods replayed open loop.
        #[arg(long, value_delimiter = ',', default_value = "position,vector,dexpilot")]
        methods: Vec<String>,
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Split::Seen)]
        split: Split,
    },
}

/// Runs one command inside a thread pool capped at `--jobs`.
pub fn run(cli: Cli) -> Result<Manifest, CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.globals.jobs {
        if j == 0 {
            return Err(CliError::new("config", "--jobs must be at least 1"));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::new("config", e.to_string()))?;
    pool.install(|| commands::dispatch(&cli.globals, &cli.command))
}
