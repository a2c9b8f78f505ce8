//! CO₂-based occupancy detection for naturally ventilated rooms.
//!
//! The crate covers the whole pipeline: raw sensor ingestion and gridding
//! ([`ingest`]), temporal and spatial CO₂ features ([`features`]), a weighted
//! RBF-kernel C-SVC trained by sequential minimal optimization ([`svm`]),
//! cross-validated model selection and the repeated split protocol
//! ([`modelsel`]), metrics and permutation importance ([`eval`]), and a
//! two-zone classroom simulator that produces labeled data in the same file
//! formats the ingest layer reads ([`simulator`]).

pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod matrix;
pub mod modelsel;
pub mod rng;
pub mod simulator;
pub mod svm;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Version string embedded in every report and manifest.
pub const TOOL_VERSION: &str = concat!("co2occ ", env!("CARGO_PKG_VERSION"));
