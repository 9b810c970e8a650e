//! Flat bandit policies over a discrete arm set.
//!
//! Every configuration of the flattened search space is one arm. Selection
//! never mutates the state; the caller reports the observed reward through
//! [`FlatBanditState::update_arm`].

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::ArmStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    Ucb { alpha: f64 },
    Thompson { obs_variance: f64 },
    Random,
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Policy::Ucb { alpha } if !(alpha >= 0.0 && alpha.is_finite()) => {
                Err(Error::InvalidRun(format!(
                    "UCB alpha must be a finite value >= 0, got {alpha}"
                )))
            }
            Policy::Thompson { obs_variance }
                if !(obs_variance > 0.0 && obs_variance.is_finite()) =>
            {
                Err(Error::InvalidRun(format!(
                    "observation variance must be finite and > 0, got {obs_variance}"
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Upper confidence bound of one arm at timestep `t`.
///
/// Unpulled arms score `+inf` so that every arm is tried once before any
/// arm is repeated.
pub fn ucb_score(stats: &ArmStats, t: u64, alpha: f64) -> Result<f64> {
    if t == 0 {
        return Err(Error::ZeroTimestep);
    }
    if stats.pulls == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(stats.mean_reward + alpha * ((t as f64).ln() / stats.pulls as f64).sqrt())
}

/// Index of the largest score, ties broken uniformly at random.
pub(crate) fn argmax_random_tie<R, I>(scores: I, rng: &mut R) -> Option<usize>
where
    R: Rng + ?Sized,
    I: IntoIterator<Item = f64>,
{
    let mut best: Option<(usize, f64)> = None;
    let mut ties = 0u32;
    for (i, score) in scores.into_iter().enumerate() {
        match best {
            Some((_, b)) if score < b => {}
            Some((_, b)) if score == b => {
                ties += 1;
                if rng.random_range(0..ties) == 0 {
                    best = Some((i, score));
                }
            }
            _ => {
                best = Some((i, score));
                ties = 1;
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub config_index: usize,
    pub score: f64,
}

/// Configurations ordered best-first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Ranking {
    pub entries: Vec<RankEntry>,
}

impl Ranking {
    pub fn top(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().take(x).map(|e| e.config_index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn first(&self) -> Option<&RankEntry> {
        self.entries.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatBanditState {
    arms: Vec<ArmStats>,
    total_trials: u64,
    policy: Policy,
}

impl FlatBanditState {
    pub fn new(arm_count: usize, policy: Policy) -> Result<Self> {
        if arm_count == 0 {
            return Err(Error::EmptyArms);
        }
        policy.validate()?;
        Ok(FlatBanditState {
            arms: vec![ArmStats::default(); arm_count],
            total_trials: 0,
            policy,
        })
    }

    /// Build a state from explicit statistics. `total_trials` is derived.
    pub fn from_arms(arms: Vec<ArmStats>, policy: Policy) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::EmptyArms);
        }
        policy.validate()?;
        let total_trials = arms.iter().map(|a| a.pulls).sum();
        Ok(FlatBanditState {
            arms,
            total_trials,
            policy,
        })
    }

    pub fn arms(&self) -> &[ArmStats] {
        &self.arms
    }

    pub fn total_trials(&self) -> u64 {
        self.total_trials
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        match self.policy {
            Policy::Ucb { alpha } => self.select_ucb(alpha, rng),
            Policy::Thompson { obs_variance } => self.select_thompson(obs_variance, rng),
            Policy::Random => self.select_random(rng),
        }
    }

    pub fn select_ucb<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R) -> Result<usize> {
        let t = self.total_trials.max(1);
        let scores = self
            .arms
            .iter()
            .map(|a| ucb_score(a, t, alpha))
            .collect::<Result<Vec<_>>>()?;
        argmax_random_tie(scores, rng).ok_or(Error::EmptyArms)
    }

    /// Gaussian posterior sampling: prior N(0, 1) on each arm's mean with
    /// known observation variance.
    pub fn select_thompson<R: Rng + ?Sized>(
        &self,
        obs_variance: f64,
        rng: &mut R,
    ) -> Result<usize> {
        if self.arms.is_empty() {
            return Err(Error::EmptyArms);
        }
        let samples: Vec<f64> = self
            .arms
            .iter()
            .map(|a| {
                let n = a.pulls as f64;
                let mean = n * a.mean_reward / (n + obs_variance);
                let var = obs_variance / (n + obs_variance);
                let z: f64 = StandardNormal.sample(rng);
                mean + var.sqrt() * z
            })
            .collect();
        argmax_random_tie(samples, rng).ok_or(Error::EmptyArms)
    }

    pub fn select_random<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.arms.is_empty() {
            return Err(Error::EmptyArms);
        }
        Ok(rng.random_range(0..self.arms.len()))
    }

    pub fn update_arm(&mut self, index: usize, reward: f64) -> Result<()> {
        let len = self.arms.len();
        let arm = self
            .arms
            .get_mut(index)
            .ok_or(Error::ArmOutOfRange { index, len })?;
        arm.update(reward);
        self.total_trials += 1;
        Ok(())
    }

    /// Pulled arms by mean reward descending, then unpulled arms; ties by
    /// ascending index. Unpulled arms carry a score of `-inf`.
    pub fn rank_arms(&self) -> Ranking {
        let mut entries: Vec<RankEntry> = self
            .arms
            .iter()
            .enumerate()
            .map(|(i, a)| RankEntry {
                config_index: i,
                score: if a.is_pulled() {
                    a.mean_reward
                } else {
                    f64::NEG_INFINITY
                },
            })
            .collect();
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then(a.config_index.cmp(&b.config_index))
        });
        Ranking { entries }
    }

    pub fn reset(&mut self) {
        self.arms.iter_mut().for_each(|a| *a = ArmStats::default());
        self.total_trials = 0;
    }
}
