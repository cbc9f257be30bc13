//! ICU mortality prediction from structured first-day data.

pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod harmonize;
pub mod impute;
pub mod ingest;
pub mod manifest;
pub mod model;
pub mod notes;
pub mod pipeline;
pub mod rng;
pub mod scores;
pub mod vitals;

pub use error::{Error, Result};
