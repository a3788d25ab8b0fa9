//! Boosted-tree SHAP attribution, kernel k-means over attribution vectors, and
//! a SHAP-gated feed-forward classifier, with the experiment harness around
//! them.

pub mod dataset;
pub mod error;
pub mod gbm;
pub mod kmeans;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod seed;
pub mod shap;

pub use error::{ForceError, Result};
