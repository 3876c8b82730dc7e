//! Supervised learning of the penalty for optimal-partitioning changepoint detection.
//!
//! The pipeline runs in stages: [`segment`] computes optimal segmentations,
//! [`penaltypath`] turns labeled sequences into target intervals of
//! log-penalty, [`features`] describes each sequence by a fixed catalog of
//! statistics, [`learn`] fits interval-regression models, and [`harness`]
//! cross-validates them.

pub mod data;
pub mod error;
pub mod features;
pub mod harness;
pub mod learn;
pub mod model;
pub mod penaltypath;
pub mod seed;
pub mod segment;

pub use error::{Error, Result};

/// Version of the JSON configuration and model-file schemas.
pub const SCHEMA_VERSION: u32 = 1;
