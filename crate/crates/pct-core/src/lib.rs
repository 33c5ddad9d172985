//! Core primitives for positive-congruent model updates.
//!
//! This crate trains small fully-connected classifiers and ensembles,
//! applies logit-difference-inhibition style losses during model updates,
//! measures prediction-flip behaviour between model versions, and provides
//! the statistics toolkit for studying logit displacement between
//! independently seeded models.
//!
//! Everything is deterministic: all randomness flows through explicit
//! 64-bit seeds plus stream ids (see [`rng::Rng`]), so any result can be
//! reproduced bit-exactly from its configuration.
//!
//! The crate is `no_std`-compatible (with `alloc`); enable the `libm`
//! feature instead of `std` to build without the standard library.
//! File formats, CSV serialization, and the experiment CLI live in the
//! companion `pct-lab` crate.

#![cfg_attr(not(feature = "std"), no_std)]

#[cfg(all(not(feature = "std"), not(feature = "libm")))]
compile_error!("pct-core requires either the `std` feature or the `libm` feature");

extern crate alloc;

pub mod data;
pub mod displacement;
pub mod ensemble;
pub mod error;
mod fmath;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
