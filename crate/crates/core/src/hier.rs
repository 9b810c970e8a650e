//! Two-level hierarchical UCB.
//!
//! A high-level bandit picks which dimension to change; that dimension's
//! low-level bandit picks its new level. All other dimensions keep the
//! level they had in the previous trial, so consecutive configurations
//! differ in at most one coordinate.
//!
//! Both levels use the global trial count as the UCB timestep.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{argmax_random_tie, ucb_score, RankEntry, Ranking};
use crate::error::{Error, Result};
use crate::space::{Config, HyperParamSpace};
use crate::stats::ArmStats;

/// Which low-level arms receive a trial's reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateScope {
    /// The active level of every dimension in the evaluated configuration.
    #[default]
    AllActive,
    /// Only the level chosen in the pulled dimension.
    PulledOnly,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierSelection {
    pub dimension: usize,
    pub level: usize,
    pub proposed: Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierState {
    level_counts: Vec<usize>,
    alpha_high: f64,
    alpha_low: f64,
    update_scope: UpdateScope,
    high_level: Vec<ArmStats>,
    low_level: Vec<Vec<ArmStats>>,
    initial_config: Config,
    current_config: Config,
    /// Keyed by flat configuration index; only evaluated configurations.
    config_stats: BTreeMap<usize, ArmStats>,
    total_trials: u64,
}

impl HierState {
    pub fn new(
        space: &HyperParamSpace,
        alpha_high: f64,
        alpha_low: f64,
        update_scope: UpdateScope,
    ) -> Result<Self> {
        Self::with_initial(space, alpha_high, alpha_low, update_scope, space.midpoint())
    }

    pub fn with_initial(
        space: &HyperParamSpace,
        alpha_high: f64,
        alpha_low: f64,
        update_scope: UpdateScope,
        initial: Config,
    ) -> Result<Self> {
        for (name, a) in [("alpha_h", alpha_high), ("alpha_l", alpha_low)] {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::InvalidRun(format!(
                    "{name} must be a finite value >= 0, got {a}"
                )));
            }
        }
        space.validate(&initial)?;
        let level_counts = space.level_counts();
        Ok(HierState {
            high_level: vec![ArmStats::default(); level_counts.len()],
            low_level: level_counts
                .iter()
                .map(|&n| vec![ArmStats::default(); n])
                .collect(),
            level_counts,
            alpha_high,
            alpha_low,
            update_scope,
            current_config: initial.clone(),
            initial_config: initial,
            config_stats: BTreeMap::new(),
            total_trials: 0,
        })
    }

    pub fn high_level(&self) -> &[ArmStats] {
        &self.high_level
    }

    pub fn low_level(&self) -> &[Vec<ArmStats>] {
        &self.low_level
    }

    pub fn current_config(&self) -> &Config {
        &self.current_config
    }

    pub fn config_stats(&self) -> &BTreeMap<usize, ArmStats> {
        &self.config_stats
    }

    pub fn total_trials(&self) -> u64 {
        self.total_trials
    }

    pub fn update_scope(&self) -> UpdateScope {
        self.update_scope
    }

    pub fn alphas(&self) -> (f64, f64) {
        (self.alpha_high, self.alpha_low)
    }

    fn flat_index(&self, config: &Config) -> usize {
        self.level_counts
            .iter()
            .zip(&config.level_indices)
            .fold(0, |acc, (&n, &i)| acc * n + i)
    }

    fn cardinality(&self) -> usize {
        self.level_counts.iter().product()
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<HierSelection> {
        let t = self.total_trials.max(1);
        let high = self
            .high_level
            .iter()
            .map(|a| ucb_score(a, t, self.alpha_high))
            .collect::<Result<Vec<_>>>()?;
        let dimension = argmax_random_tie(high, rng).ok_or(Error::EmptyArms)?;
        let low = self.low_level[dimension]
            .iter()
            .map(|a| ucb_score(a, t, self.alpha_low))
            .collect::<Result<Vec<_>>>()?;
        let level = argmax_random_tie(low, rng).ok_or(Error::EmptyArms)?;
        Ok(HierSelection {
            dimension,
            level,
            proposed: self.current_config.with_level(dimension, level),
        })
    }

    /// Credit `reward` to `evaluated`, reached by setting `dimension` to
    /// `level`. The evaluated configuration becomes the current one. It need
    /// not be a neighbour of the current configuration, so reports for
    /// suggestions issued earlier are accepted in any order.
    pub fn update(
        &mut self,
        dimension: usize,
        level: usize,
        evaluated: &Config,
        reward: f64,
    ) -> Result<()> {
        let in_space = evaluated.level_indices.len() == self.level_counts.len()
            && evaluated
                .level_indices
                .iter()
                .zip(&self.level_counts)
                .all(|(&l, &n)| l < n);
        if !in_space
            || dimension >= self.level_counts.len()
            || evaluated.level_indices[dimension] != level
        {
            return Err(Error::ConfigMismatch);
        }
        self.high_level[dimension].update(reward);
        match self.update_scope {
            UpdateScope::AllActive => {
                for (arms, &active) in self.low_level.iter_mut().zip(&evaluated.level_indices) {
                    arms[active].update(reward);
                }
            }
            UpdateScope::PulledOnly => self.low_level[dimension][level].update(reward),
        }
        let key = self.flat_index(evaluated);
        self.config_stats.entry(key).or_default().update(reward);
        self.current_config = evaluated.clone();
        self.total_trials += 1;
        Ok(())
    }

    pub fn apply(&mut self, selection: &HierSelection, reward: f64) -> Result<()> {
        self.update(
            selection.dimension,
            selection.level,
            &selection.proposed,
            reward,
        )
    }

    /// Mean of the constituent low-level arm means; `-inf` if any of them
    /// is unpulled.
    pub fn composite_score(&self, config: &Config) -> f64 {
        let mut sum = 0.0;
        for (arms, &level) in self.low_level.iter().zip(&config.level_indices) {
            let arm = &arms[level];
            if !arm.is_pulled() {
                return f64::NEG_INFINITY;
            }
            sum += arm.mean_reward;
        }
        sum / config.level_indices.len() as f64
    }

    /// Visited configurations by empirical mean, followed by unvisited
    /// ones by composite low-level score. Ties go to the lower flat index
    /// (lexicographic configuration order). Always a full permutation.
    pub fn rank_configs(&self, x: usize, space: &HyperParamSpace) -> Result<Ranking> {
        let cardinality = self.cardinality();
        if space.level_counts() != self.level_counts {
            return Err(Error::SpaceMismatch);
        }
        if x == 0 {
            return Err(Error::RecallZero);
        }
        if x > cardinality {
            return Err(Error::RecallTooLarge { x, cardinality });
        }
        let by_score = |a: &RankEntry, b: &RankEntry| {
            b.score
                .total_cmp(&a.score)
                .then(a.config_index.cmp(&b.config_index))
        };

        let mut visited: Vec<RankEntry> = self
            .config_stats
            .iter()
            .map(|(&config_index, s)| RankEntry {
                config_index,
                score: s.mean_reward,
            })
            .collect();
        visited.sort_by(by_score);

        let mut rest: Vec<RankEntry> = space
            .configs()
            .enumerate()
            .filter(|(i, _)| !self.config_stats.contains_key(i))
            .map(|(config_index, c)| RankEntry {
                config_index,
                score: self.composite_score(&c),
            })
            .collect();
        rest.sort_by(by_score);

        visited.extend(rest);
        Ok(Ranking { entries: visited })
    }

    /// Zero all statistics and return to the initial configuration.
    pub fn reset(&mut self) {
        self.high_level
            .iter_mut()
            .for_each(|a| *a = ArmStats::default());
        self.low_level
            .iter_mut()
            .flat_map(|arms| arms.iter_mut())
            .for_each(|a| *a = ArmStats::default());
        self.config_stats.clear();
        self.current_config = self.initial_config.clone();
        self.total_trials = 0;
    }
}
