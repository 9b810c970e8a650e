//! Evaluation backends that stand in for a live RAG pipeline.

mod landscape;
mod remote;
mod replay;

pub use landscape::{gen_landscape, LandscapeModel, LandscapeOptions, Regime, RegimeCheck};
pub use remote::{RemoteEnv, RemoteOptions};
pub use replay::{manifest_path_for, validate_replay, Manifest, ReplayTable, ValidationReport};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::reward::{QueryOutcome, RewardParams};
use crate::space::{Config, HyperParamSpace};

/// Dataset profile: a name and the token normalization constant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub name: String,
    pub t_max: u32,
}

impl Profile {
    pub const ASQA_T_MAX: u32 = 1585;
    pub const NQ_T_MAX: u32 = 2205;

    pub fn asqa_like() -> Self {
        Profile {
            name: "asqa-like".into(),
            t_max: Self::ASQA_T_MAX,
        }
    }

    pub fn nq_like() -> Self {
        Profile {
            name: "nq-like".into(),
            t_max: Self::NQ_T_MAX,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "asqa-like" => Some(Self::asqa_like()),
            "nq-like" => Some(Self::nq_like()),
            _ => None,
        }
    }
}

/// Exact per-configuration mean rewards, indexed by flat configuration index.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMeans {
    pub means: Vec<f64>,
    /// Query evaluations consumed to produce the means (0 for analytic ones).
    pub eval_count: u64,
}

pub trait Environment: Send + Sync {
    fn name(&self) -> &str;

    fn space(&self) -> &HyperParamSpace;

    fn t_max(&self) -> u32;

    /// Evaluate `batch_size` queries under `config`. Must return exactly
    /// `batch_size` outcomes.
    fn evaluate(
        &self,
        config: &Config,
        batch_size: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<QueryOutcome>>;

    /// Exhaustive ground truth, if this backend can provide it.
    fn exact_means(&self, _reward: &RewardParams) -> Option<Result<ExactMeans>> {
        None
    }
}
