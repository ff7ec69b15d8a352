//! Early-warning dropout prediction fusing tabular engagement features with
//! comment sentiment.
//!
//! Stages: [`data`] loading and validation, [`preprocess`] imputation and scaling,
//! [`sentiment`] scoring and temporal features, [`models`] classifiers,
//! [`ensemble`] averaging and feature fusion, [`explain`] Shapley attributions,
//! [`eval`] grouped cross-validation, and [`synth`] synthetic cohorts with known
//! ground truth.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod explain;
pub mod models;
pub mod optim;
pub mod preprocess;
pub mod rng;
pub mod sentiment;
pub mod synth;

pub use error::{Error, Result};
