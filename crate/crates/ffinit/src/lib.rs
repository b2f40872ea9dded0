//! File formats, the convergence experiment and the `ffinit` command line
//! tool, on top of [`ffinit_core`].
//!
//! - [`idx`]: IDX image files (MNIST)
//! - [`checkpoint`]: JSON network checkpoints
//! - [`config`]: TOML experiment configs
//! - [`harness`]: running experiments and writing CSV reports

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod harness;
pub mod idx;

pub use ffinit_core as core;

pub use config::{DatasetSpec, ExperimentSpec, Regime};
pub use error::{Error, Result};
pub use harness::{emit_csv, run_experiment, ExperimentReport, RegimeReport};
