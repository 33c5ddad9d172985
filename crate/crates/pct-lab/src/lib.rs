//! Experiment runner, file formats, and CLI for positive-congruent
//! training studies.
//!
//! The algorithms live in `pct-core`; this crate adds everything that
//! touches the filesystem: the dotted-key config format, checkpoint and CSV
//! artifacts, run manifests with provenance hashes, and the `pctlab`
//! binary with its `train-pool` / `update` / `chain` / `stats` / `report`
//! subcommands.

pub mod artifacts;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod runner;
pub mod textfmt;

pub use error::{LabError, Result};
