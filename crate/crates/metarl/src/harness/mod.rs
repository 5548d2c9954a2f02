//! Experiment orchestration: config files, checkpoints, CSV/Markdown
//! reports, and the end-to-end train → evaluate → report pipeline.
//!
//! The harness is the only layer that touches the filesystem. Everything
//! below it (trainers, attacks, meta-gradients) is pure given a seed, so an
//! experiment directory is a deterministic function of the effective config:
//! running the same config twice produces byte-identical CSVs, and resuming
//! from a checkpoint lands on the same bits as an uninterrupted run.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::diffcore::DiffError;
use crate::trainers::TrainError;

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod report;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{default_config, eval_grid, load_config, ExperimentConfig};
pub use experiment::{checkpoint_path, run_experiment, ExperimentOutcome};
pub use report::{convergence_csv, eval_csv, report_markdown, report_table_csv};

/// Everything that can go wrong at the orchestration layer.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    /// A config value failed to parse or validate. `location` is the file
    /// line or environment variable it came from.
    #[error("config error at {location}: {detail}")]
    Config { location: String, detail: String },
    /// A key that no config field answers to; typos fail loudly instead of
    /// silently running with defaults.
    #[error("unknown config key `{key}` at {location}")]
    UnknownKey { key: String, location: String },
    #[error("checkpoint version {found} (this build reads {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {detail}")]
    CheckpointCorrupt { detail: String },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`,
/// so readers never observe a half-written file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| HarnessError::Io(e.error))?;
    Ok(())
}
