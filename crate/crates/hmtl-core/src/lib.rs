//! Hybrid multi-task learning for fine-grained head pose estimation.
//!
//! The crate couples a supervised pose-regression network with
//! self-supervised auxiliary branches (tile puzzling and per-tile rotation
//! prediction), bin-expectation regression heads, Barlow Twins pretraining,
//! dataset adapters and a deterministic training/evaluation harness.
//!
//! Hot loops are data-parallel via rayon when the default `parallel`
//! feature is enabled and fall back to sequential execution otherwise;
//! both paths produce identical results.

pub mod error;
pub mod exec;
pub mod geometry;
pub mod imageops;
pub mod augment;
pub mod losses;
pub mod pretext;
pub mod rngutil;

pub use error::{Error, Result};
