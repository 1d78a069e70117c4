//! Cost-aware tree classifiers for streaming neural signals.
//!
//! Depth-variant boosted ensembles and compressible probabilistic oblique
//! trees, trained with power/latency regularization and evaluated by a
//! streaming simulator that accounts for on-demand feature extraction.

pub mod dataset;
pub mod eval;
pub mod error;
pub mod features;
pub mod gbdt;
pub mod oblique;
pub mod model_io;
pub mod quant;
pub mod runtime;
pub mod signals;

pub use dataset::Dataset;
pub use error::{Error, Result};
