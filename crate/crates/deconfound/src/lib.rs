//! Spectral deconfounding and parent-set scoring for causal structure
//! discovery under pervasive latent confounding.
//!
//! The pipeline: generate (or load) observational data from a causal
//! additive model with latent confounders, estimate each node's confounder
//! sufficient statistic by projecting samples onto the top principal
//! components of the sample covariance, then score candidate parent sets
//! either with a Gaussian BIC over a (residual) covariance matrix or with
//! the marginal likelihood of an additive Gaussian-process model that takes
//! the estimated sufficient statistics as extra inputs.

pub mod bench;
pub mod cli;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod pcss;
pub mod scm;
pub mod scores;
pub mod seed;

pub use error::{Error, Result};
