//! One interface over the flat and hierarchical learners.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{FlatBanditState, Policy, Ranking};
use crate::error::{Error, Result};
use crate::hier::{HierSelection, HierState, UpdateScope};
use crate::space::{Config, HyperParamSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    HierUcb,
    Ucb,
    Thompson,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::HierUcb,
        Method::Ucb,
        Method::Thompson,
        Method::Random,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::HierUcb => "hier_ucb",
            Method::Ucb => "ucb",
            Method::Thompson => "thompson",
            Method::Random => "random",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hier_ucb" | "hier-ucb" => Ok(Method::HierUcb),
            "ucb" => Ok(Method::Ucb),
            "thompson" | "ts" => Ok(Method::Thompson),
            "random" => Ok(Method::Random),
            other => Err(Error::InvalidRun(format!(
                "unknown method `{other}` (expected hier_ucb, ucb, thompson or random)"
            ))),
        }
    }
}

/// Everything needed to build a fresh learner besides the space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnerSettings {
    pub method: Method,
    /// Exploration weight of flat UCB.
    pub alpha: f64,
    pub alpha_h: f64,
    pub alpha_l: f64,
    pub obs_variance: f64,
    pub update_scope: UpdateScope,
    /// Starting configuration of the hierarchical learner; midpoint if unset.
    pub initial_config: Option<Config>,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        LearnerSettings {
            method: Method::HierUcb,
            alpha: 1.0,
            alpha_h: 1.0,
            alpha_l: 1.0,
            obs_variance: 1.0,
            update_scope: UpdateScope::AllActive,
            initial_config: None,
        }
    }
}

impl LearnerSettings {
    pub fn for_method(method: Method) -> Self {
        LearnerSettings {
            method,
            ..Default::default()
        }
    }

    pub fn build(&self, space: &HyperParamSpace) -> Result<Learner> {
        let flat = |policy| FlatBanditState::new(space.cardinality(), policy).map(Learner::Flat);
        match self.method {
            Method::HierUcb => {
                let initial = self
                    .initial_config
                    .clone()
                    .unwrap_or_else(|| space.midpoint());
                HierState::with_initial(
                    space,
                    self.alpha_h,
                    self.alpha_l,
                    self.update_scope,
                    initial,
                )
                .map(Learner::Hier)
            }
            Method::Ucb => flat(Policy::Ucb { alpha: self.alpha }),
            Method::Thompson => flat(Policy::Thompson {
                obs_variance: self.obs_variance,
            }),
            Method::Random => flat(Policy::Random),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub config_index: usize,
    pub config: Config,
    /// Dimension changed by the hierarchical learner; `None` for flat ones.
    pub pulled_dimension: Option<usize>,
    pub level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "state", rename_all = "snake_case")]
pub enum Learner {
    Flat(FlatBanditState),
    Hier(HierState),
}

impl Learner {
    pub fn select<R: Rng + ?Sized>(
        &self,
        space: &HyperParamSpace,
        rng: &mut R,
    ) -> Result<Selection> {
        match self {
            Learner::Flat(state) => {
                let config_index = state.select(rng)?;
                Ok(Selection {
                    config_index,
                    config: space.config_at(config_index)?,
                    pulled_dimension: None,
                    level: None,
                })
            }
            Learner::Hier(state) => {
                let HierSelection {
                    dimension,
                    level,
                    proposed,
                } = state.select(rng)?;
                Ok(Selection {
                    config_index: space.index_of(&proposed)?,
                    config: proposed,
                    pulled_dimension: Some(dimension),
                    level: Some(level),
                })
            }
        }
    }

    pub fn update(&mut self, selection: &Selection, reward: f64) -> Result<()> {
        match (self, selection.pulled_dimension, selection.level) {
            (Learner::Flat(state), None, None) => state.update_arm(selection.config_index, reward),
            (Learner::Hier(state), Some(d), Some(l)) => {
                state.update(d, l, &selection.config, reward)
            }
            _ => Err(Error::ConfigMismatch),
        }
    }

    pub fn ranking(&self, x: usize, space: &HyperParamSpace) -> Result<Ranking> {
        let cardinality = space.cardinality();
        if x == 0 {
            return Err(Error::RecallZero);
        }
        if x > cardinality {
            return Err(Error::RecallTooLarge { x, cardinality });
        }
        match self {
            Learner::Flat(state) => Ok(state.rank_arms()),
            Learner::Hier(state) => state.rank_configs(x, space),
        }
    }

    pub fn total_trials(&self) -> u64 {
        match self {
            Learner::Flat(s) => s.total_trials(),
            Learner::Hier(s) => s.total_trials(),
        }
    }

    /// Empirical mean of a configuration, if it has been evaluated.
    pub fn config_mean(&self, config_index: usize) -> Option<f64> {
        match self {
            Learner::Flat(s) => s
                .arms()
                .get(config_index)
                .filter(|a| a.is_pulled())
                .map(|a| a.mean_reward),
            Learner::Hier(s) => s.config_stats().get(&config_index).map(|a| a.mean_reward),
        }
    }

    /// Times a configuration has been evaluated.
    pub fn config_pulls(&self, config_index: usize) -> u64 {
        match self {
            Learner::Flat(s) => s.arms().get(config_index).map_or(0, |a| a.pulls),
            Learner::Hier(s) => s.config_stats().get(&config_index).map_or(0, |a| a.pulls),
        }
    }

    /// Total pulls across every arm the learner tracks.
    pub fn all_pulls(&self) -> u64 {
        match self {
            Learner::Flat(s) => s.arms().iter().map(|a| a.pulls).sum(),
            Learner::Hier(s) => {
                s.high_level().iter().map(|a| a.pulls).sum::<u64>()
                    + s.low_level().iter().flatten().map(|a| a.pulls).sum::<u64>()
                    + s.config_stats().values().map(|a| a.pulls).sum::<u64>()
            }
        }
    }

    pub fn reset(&mut self) {
        match self {
            Learner::Flat(s) => s.reset(),
            Learner::Hier(s) => s.reset(),
        }
    }
}
