//! Scalar trial reward: weighted accuracy minus normalized input-token cost.
//!
//! For one query, `reward = w * acc' - (1 - w) * tokens / t_max`, where
//! `acc'` is the accuracy after the inaccuracy penalty (`-1` at or below
//! `penalty_threshold`). A trial's reward is the mean over its batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardParams {
    pub w: f64,
    pub t_max: u32,
    #[serde(default)]
    pub penalty_threshold: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams {
            w: 0.5,
            t_max: crate::env::Profile::ASQA_T_MAX,
            penalty_threshold: 0.0,
        }
    }
}

impl RewardParams {
    pub fn new(w: f64, t_max: u32) -> Result<Self> {
        let params = RewardParams {
            w,
            t_max,
            penalty_threshold: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_threshold(mut self, penalty_threshold: f64) -> Result<Self> {
        self.penalty_threshold = penalty_threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::InvalidRewardParams(format!(
                "w = {} outside [0, 1]",
                self.w
            )));
        }
        if self.t_max == 0 {
            return Err(Error::InvalidRewardParams("t_max must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.penalty_threshold) {
            return Err(Error::InvalidRewardParams(format!(
                "penalty_threshold = {} outside [0, 1]",
                self.penalty_threshold
            )));
        }
        Ok(())
    }
}

/// Evaluator output for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryOutcome {
    pub accuracy: f64,
    pub tokens: u32,
}

impl QueryOutcome {
    pub fn new(accuracy: f64, tokens: u32) -> Self {
        QueryOutcome { accuracy, tokens }
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=1.0).contains(&self.accuracy) {
            Ok(())
        } else {
            Err(Error::AccuracyOutOfRange(self.accuracy))
        }
    }
}

pub fn apply_penalty(accuracy: f64, params: &RewardParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&accuracy) {
        return Err(Error::AccuracyOutOfRange(accuracy));
    }
    Ok(if accuracy <= params.penalty_threshold {
        -1.0
    } else {
        accuracy
    })
}

pub fn compute_reward(outcome: &QueryOutcome, params: &RewardParams) -> Result<f64> {
    let acc = apply_penalty(outcome.accuracy, params)?;
    let tokens = if outcome.tokens > params.t_max {
        log::warn!(
            "token count {} exceeds t_max {}; clamping",
            outcome.tokens,
            params.t_max
        );
        params.t_max
    } else {
        outcome.tokens
    };
    let cost = f64::from(tokens) / f64::from(params.t_max);
    let reward = params.w * acc - (1.0 - params.w) * cost;
    // rounding can step one ulp past the algebraic bounds
    Ok(reward.clamp(-1.0, params.w))
}

pub fn batch_reward(outcomes: &[QueryOutcome], params: &RewardParams) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut sum = 0.0;
    for outcome in outcomes {
        sum += compute_reward(outcome, params)?;
    }
    Ok(sum / outcomes.len() as f64)
}
