//! Swapping the evaluated system mid-run, with or without keeping the
//! learner's state.

use serde::{Deserialize, Serialize};

use super::oracle::OracleTable;
use super::run::{RunConfig, Runner, Trajectory};
use crate::env::Environment;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    /// Keep every statistic learned in phase one.
    Continue,
    /// Zero the learner at the switch.
    Reset,
}

impl std::str::FromStr for SwitchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continue" => Ok(SwitchMode::Continue),
            "reset" => Ok(SwitchMode::Reset),
            other => Err(Error::InvalidRun(format!(
                "unknown switch mode `{other}` (expected continue or reset)"
            ))),
        }
    }
}

impl std::fmt::Display for SwitchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SwitchMode::Continue => "continue",
            SwitchMode::Reset => "reset",
        })
    }
}

/// Run `run.trials` trials, switching from `phase1` to `phase2` once
/// `switch_budget` queries are spent. Budgets in both trajectories count
/// from the start of the whole run; phase two is scored against its own
/// oracle.
pub fn model_switch_run(
    run: &RunConfig,
    phase1: (&dyn Environment, &OracleTable),
    phase2: (&dyn Environment, &OracleTable),
    switch_budget: u64,
    mode: SwitchMode,
) -> Result<(Trajectory, Trajectory)> {
    let (env1, oracle1) = phase1;
    let (env2, oracle2) = phase2;
    if env1.space() != env2.space() {
        return Err(Error::SpaceMismatch);
    }
    let b = run.batch_size.max(1) as u64;
    if switch_budget == 0 || !switch_budget.is_multiple_of(b) || switch_budget >= run.budget() {
        return Err(Error::InvalidRun(format!(
            "switch budget {switch_budget} must be a positive multiple of {b} below the run budget {}",
            run.budget()
        )));
    }
    let switch_trial = (switch_budget / b) as usize;
    let mut runner = Runner::new(run, env1.space())?;
    let first = runner.advance(env1, oracle1, switch_trial)?;
    if mode == SwitchMode::Reset {
        runner.learner.reset();
    }
    let second = runner.advance(env2, oracle2, run.trials)?;
    Ok((first, second))
}
