//! Importance-sampling architecture search: an autoregressive graph
//! generator trained by PPO against a pairwise discriminator, with tabular
//! benchmark harnesses, brute-force oracles, reference cross-entropy
//! rare-event algorithms and baseline searchers.

pub mod baselines;
pub mod bench;
pub mod ce;
pub mod discriminator;
pub mod error;
pub mod generator;
pub mod graph;
pub mod report;
pub mod reward;
pub mod search;
pub mod tensor;

pub use error::{Error, Result};
