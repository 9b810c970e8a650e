//! Online hyper-parameter tuning for retrieval-augmented generation
//! pipelines, framed as a multi-armed bandit over a discrete grid.

pub mod bandit;
pub mod env;
pub mod error;
pub mod harness;
pub mod hier;
pub mod learner;
pub mod reward;
pub mod space;
pub mod stats;

pub use error::{Error, Result};
