//! Weakly-supervised microorganism counting: synthetic data, dataset
//! adapters, backbone zoo, training protocol and evaluation tables.

pub mod adapters;
pub mod error;
pub mod evaluator;
pub mod manifest;
pub mod models;
pub mod seed;
pub mod synthgen;
pub mod trainer;

pub use error::{Error, Result};
pub use manifest::{Manifest, Record};
