//! The online learning loop.

use serde::{Deserialize, Serialize};

use super::oracle::{recall_at_x, OracleTable};
use super::seed::{stream_rng, ENV_STREAM, POLICY_STREAM};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::learner::{Learner, LearnerSettings, Selection};
use crate::reward::{batch_reward, RewardParams};
use crate::space::HyperParamSpace;

pub const DEFAULT_CHECKPOINT_EVERY: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(flatten)]
    pub learner: LearnerSettings,
    pub trials: usize,
    pub batch_size: usize,
    pub reward: RewardParams,
    pub seed: u64,
    pub recall_x: usize,
    /// Record recall every this many trials, plus after the last one.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    /// Explicit query budgets (trials × batch size) at which to record
    /// recall; overrides `checkpoint_every` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_checkpoints: Option<Vec<u64>>,
}

fn default_checkpoint_every() -> usize {
    DEFAULT_CHECKPOINT_EVERY
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            learner: LearnerSettings::default(),
            trials: 1500,
            batch_size: 4,
            reward: RewardParams::default(),
            seed: 0,
            recall_x: 5,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            eval_checkpoints: None,
        }
    }
}

impl RunConfig {
    pub fn budget(&self) -> u64 {
        self.trials as u64 * self.batch_size as u64
    }

    pub fn validate(&self, space: &HyperParamSpace) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidRun("trials must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidRun("batch_size must be >= 1".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::InvalidRun("checkpoint_every must be >= 1".into()));
        }
        if self.recall_x == 0 {
            return Err(Error::RecallZero);
        }
        if self.recall_x > space.cardinality() {
            return Err(Error::RecallTooLarge {
                x: self.recall_x,
                cardinality: space.cardinality(),
            });
        }
        self.reward.validate()?;
        for alpha in [
            self.learner.alpha,
            self.learner.alpha_h,
            self.learner.alpha_l,
        ] {
            if !(alpha.is_finite() && alpha >= 0.0) {
                return Err(Error::InvalidRun(format!(
                    "exploration weight {alpha} must be >= 0"
                )));
            }
        }
        if !(self.learner.obs_variance.is_finite() && self.learner.obs_variance > 0.0) {
            return Err(Error::InvalidRun(format!(
                "obs_variance {} must be > 0",
                self.learner.obs_variance
            )));
        }
        Ok(())
    }

    /// Trial numbers (1-based, within `first..=last`) after which recall is
    /// recorded. Counting is absolute so phases of one run share a grid.
    fn checkpoint_trials(&self, first: usize, last: usize) -> Result<Vec<usize>> {
        match &self.eval_checkpoints {
            Some(budgets) => {
                let b = self.batch_size as u64;
                let mut trials = Vec::with_capacity(budgets.len());
                for &budget in budgets {
                    if budget == 0 || budget % b != 0 {
                        return Err(Error::InvalidRun(format!(
                            "checkpoint budget {budget} is not a positive multiple of batch size {b}"
                        )));
                    }
                    let t = (budget / b) as usize;
                    if t > self.trials {
                        return Err(Error::InvalidRun(format!(
                            "checkpoint budget {budget} exceeds the run budget {}",
                            self.budget()
                        )));
                    }
                    if (first..=last).contains(&t) {
                        trials.push(t);
                    }
                }
                trials.sort_unstable();
                trials.dedup();
                Ok(trials)
            }
            None => {
                let mut trials: Vec<usize> = (first..=last)
                    .filter(|t| t % self.checkpoint_every == 0)
                    .collect();
                if trials.last() != Some(&last) {
                    trials.push(last);
                }
                Ok(trials)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    /// 1-based.
    pub trial: usize,
    pub config_index: usize,
    pub pulled_dimension: Option<usize>,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// Queries consumed so far (trials × batch size).
    pub budget: u64,
    pub recall: f64,
    /// Ground-truth mean reward of the configuration the learner currently
    /// ranks first.
    pub mean_reward_best_arm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<TrialRecord>,
    pub recall_curve: Vec<CurvePoint>,
    pub final_ranking: Vec<usize>,
    /// Trials the learner had absorbed when this trajectory began.
    #[serde(default)]
    pub learner_trials_at_start: u64,
}

impl Trajectory {
    pub fn final_recall(&self) -> Option<f64> {
        self.recall_curve.last().map(|p| p.recall)
    }

    pub fn recall_at_budget(&self, budget: u64) -> Option<f64> {
        self.recall_curve
            .iter()
            .find(|p| p.budget == budget)
            .map(|p| p.recall)
    }
}

/// Mutable state of one run, kept between phases.
pub(crate) struct Runner<'a> {
    run: &'a RunConfig,
    space: &'a HyperParamSpace,
    pub(crate) learner: Learner,
    policy_rng: rand_chacha::ChaCha8Rng,
    env_rng: rand_chacha::ChaCha8Rng,
    pub(crate) trials_done: usize,
}

impl<'a> Runner<'a> {
    pub(crate) fn new(run: &'a RunConfig, space: &'a HyperParamSpace) -> Result<Self> {
        run.validate(space)?;
        Ok(Runner {
            learner: run.learner.build(space)?,
            policy_rng: stream_rng(run.seed, POLICY_STREAM),
            env_rng: stream_rng(run.seed, ENV_STREAM),
            trials_done: 0,
            run,
            space,
        })
    }

    fn snapshot(&self, oracle: &OracleTable) -> Result<(CurvePoint, Vec<usize>)> {
        let ranking = self.learner.ranking(self.run.recall_x, self.space)?;
        let recall = recall_at_x(&ranking, oracle, self.run.recall_x)?;
        let best = ranking
            .first()
            .map(|e| e.config_index)
            .ok_or(Error::EmptyArms)?;
        let order = ranking.entries.iter().map(|e| e.config_index).collect();
        Ok((
            CurvePoint {
                budget: self.trials_done as u64 * self.run.batch_size as u64,
                recall,
                mean_reward_best_arm: oracle.means()[best],
            },
            order,
        ))
    }

    /// Run trials until `last` (absolute, 1-based) against `env`.
    pub(crate) fn advance(
        &mut self,
        env: &dyn Environment,
        oracle: &OracleTable,
        last: usize,
    ) -> Result<Trajectory> {
        if env.space() != self.space {
            return Err(Error::SpaceMismatch);
        }
        if oracle.len() != self.space.cardinality() {
            return Err(Error::InvalidRun("oracle does not cover the space".into()));
        }
        let first = self.trials_done + 1;
        let learner_trials_at_start = self.learner.total_trials();
        let checkpoints = self.run.checkpoint_trials(first, last)?;
        let mut next_checkpoint = checkpoints.iter().peekable();
        let mut records = Vec::with_capacity(last + 1 - first);
        let mut recall_curve = Vec::with_capacity(checkpoints.len());
        for trial in first..=last {
            let (selection, reward) = self.step(env).map_err(|e| e.at_trial(trial))?;
            records.push(TrialRecord {
                trial,
                config_index: selection.config_index,
                pulled_dimension: selection.pulled_dimension,
                reward,
            });
            if next_checkpoint.peek() == Some(&&trial) {
                next_checkpoint.next();
                recall_curve.push(self.snapshot(oracle)?.0);
            }
        }
        let final_ranking = self.snapshot(oracle)?.1;
        Ok(Trajectory {
            records,
            recall_curve,
            final_ranking,
            learner_trials_at_start,
        })
    }

    fn step(&mut self, env: &dyn Environment) -> Result<(Selection, f64)> {
        let selection = self.learner.select(self.space, &mut self.policy_rng)?;
        let outcomes = env.evaluate(&selection.config, self.run.batch_size, &mut self.env_rng)?;
        if outcomes.len() != self.run.batch_size {
            return Err(Error::InvalidRun(format!(
                "environment returned {} outcomes for batch size {}",
                outcomes.len(),
                self.run.batch_size
            )));
        }
        let reward = batch_reward(&outcomes, &self.run.reward)?;
        self.learner.update(&selection, reward)?;
        self.trials_done += 1;
        Ok((selection, reward))
    }
}

/// Run `run.trials` trials against `env`, recording recall against
/// `oracle` at each checkpoint. Deterministic given `run.seed`.
pub fn run_experiment(
    run: &RunConfig,
    env: &dyn Environment,
    oracle: &OracleTable,
) -> Result<Trajectory> {
    let mut runner = Runner::new(run, env.space())?;
    runner.advance(env, oracle, run.trials)
}

/// Like [`run_experiment`] but also hands back the final learner.
pub fn run_experiment_with_learner(
    run: &RunConfig,
    env: &dyn Environment,
    oracle: &OracleTable,
) -> Result<(Trajectory, Learner)> {
    let mut runner = Runner::new(run, env.space())?;
    let trajectory = runner.advance(env, oracle, run.trials)?;
    Ok((trajectory, runner.learner))
}
