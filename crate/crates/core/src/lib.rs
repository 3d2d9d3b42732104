//! Bias auditing for embedding models and their downstream task models.
//!
//! The crate measures bias before adaptation (retrieval recall disparity and
//! MaxSkew@k on embedding spaces), after adaptation (score disparity,
//! directional bias amplification and caption leakage on predictions),
//! contrasts local and global bias over cluster groups shared between models,
//! correlates the two stages across models, and compares how similar model
//! representation spaces are before and after adaptation. A seeded synthetic
//! generator plants known bias so every metric can be checked end to end.

pub mod audit;
pub mod convergence;
pub mod data;
pub mod divergence;
pub mod downstream;
pub mod error;
pub mod local;
pub mod plot;
pub mod report;
pub mod retrieval;
pub mod rng;
pub mod synth;
pub mod transfer;
mod value;

pub use error::{Error, Result};
pub use value::MetricValue;
