//! Multi-seed runs and Cartesian parameter sweeps.

use rayon::prelude::*;

use super::aggregate::{aggregate_seeds, AggregatePoint};
use super::oracle::{grid_search, OracleTable};
use super::run::{run_experiment, RunConfig, Trajectory};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::learner::Method;
use crate::reward::RewardParams;

/// Keys accepted by [`apply_override`].
pub const SWEEP_KEYS: [&str; 10] = [
    "method",
    "alpha",
    "alpha_h",
    "alpha_l",
    "obs_variance",
    "update_scope",
    "batch_size",
    "trials",
    "w",
    "recall_x",
];

/// Run the same configuration under each seed, in parallel on the current
/// rayon pool. Output order follows `seeds`.
pub fn run_seeds(
    run: &RunConfig,
    seeds: &[u64],
    env: &dyn Environment,
    oracle: &OracleTable,
) -> Result<Vec<Trajectory>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let run = RunConfig {
                seed,
                ..run.clone()
            };
            run_experiment(&run, env, oracle)
        })
        .collect()
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidSweepValue {
        key: key.to_string(),
        value: value.to_string(),
    })
}

/// Set one named field of `run` from its text form. Changing `batch_size`
/// rescales `trials` so the query budget stays as it was.
pub fn apply_override(run: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let invalid = || Error::InvalidSweepValue {
        key: key.to_string(),
        value: value.to_string(),
    };
    match key {
        "method" => run.learner.method = value.parse().map_err(|_| invalid())?,
        "alpha" => run.learner.alpha = parse(key, value)?,
        "alpha_h" => run.learner.alpha_h = parse(key, value)?,
        "alpha_l" => run.learner.alpha_l = parse(key, value)?,
        "obs_variance" => run.learner.obs_variance = parse(key, value)?,
        "update_scope" => {
            run.learner.update_scope =
                serde_json::from_value(serde_json::Value::String(value.trim().to_string()))
                    .map_err(|_| invalid())?
        }
        "batch_size" | "B" => {
            let b: usize = parse(key, value)?;
            if b == 0 {
                return Err(invalid());
            }
            let budget = run.budget();
            run.batch_size = b;
            run.trials = ((budget / b as u64) as usize).max(1);
        }
        "trials" | "T" => run.trials = parse(key, value)?,
        "w" => {
            let w: f64 = parse(key, value)?;
            run.reward = RewardParams { w, ..run.reward };
            run.reward.validate().map_err(|_| invalid())?;
        }
        "recall_x" => run.recall_x = parse(key, value)?,
        other => return Err(Error::UnknownSweepKey(other.to_string())),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub overrides: Vec<(String, String)>,
    pub run: RunConfig,
}

impl SweepCell {
    pub fn method(&self) -> Method {
        self.run.learner.method
    }

    /// `key=value` pairs joined by `;`, or `base` without overrides.
    pub fn label(&self) -> String {
        if self.overrides.is_empty() {
            return "base".into();
        }
        self.overrides
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Cartesian product of `grid`, first key varying slowest.
pub fn expand_grid(base: &RunConfig, grid: &[(String, Vec<String>)]) -> Result<Vec<SweepCell>> {
    let mut cells = vec![SweepCell {
        overrides: vec![],
        run: base.clone(),
    }];
    for (key, values) in grid {
        if values.is_empty() {
            return Err(Error::InvalidSweepValue {
                key: key.clone(),
                value: String::new(),
            });
        }
        let mut next = Vec::with_capacity(cells.len() * values.len());
        for cell in &cells {
            for value in values {
                let mut run = cell.run.clone();
                apply_override(&mut run, key, value)?;
                let mut overrides = cell.overrides.clone();
                overrides.push((key.clone(), value.clone()));
                next.push(SweepCell { overrides, run });
            }
        }
        cells = next;
    }
    Ok(cells)
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: SweepCell,
    pub seeds: Vec<u64>,
    pub trajectories: Vec<Trajectory>,
    pub aggregate: Vec<AggregatePoint>,
}

/// Run every cell of `grid` under every seed. All cells share the seed
/// list. Oracles are computed once per distinct reward definition.
pub fn sweep(
    base: &RunConfig,
    grid: &[(String, Vec<String>)],
    seeds: &[u64],
    env: &dyn Environment,
) -> Result<Vec<CellResult>> {
    if seeds.is_empty() {
        return Err(Error::NoTrajectories);
    }
    let cells = expand_grid(base, grid)?;
    for cell in &cells {
        cell.run.validate(env.space())?;
    }
    let mut oracles: Vec<(RewardParams, OracleTable)> = Vec::new();
    for cell in &cells {
        if !oracles.iter().any(|(r, _)| *r == cell.run.reward) {
            oracles.push((cell.run.reward, grid_search(env, &cell.run.reward)?));
        }
    }
    let oracle_for = |reward: &RewardParams| {
        &oracles
            .iter()
            .find(|(r, _)| r == reward)
            .expect("computed above")
            .1
    };

    let jobs: Vec<(usize, u64)> = (0..cells.len())
        .flat_map(|c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let mut results: Vec<Trajectory> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let run = RunConfig {
                seed,
                ..cells[c].run.clone()
            };
            run_experiment(&run, env, oracle_for(&run.reward))
        })
        .collect::<Result<_>>()?;

    let mut out = Vec::with_capacity(cells.len());
    for cell in cells.into_iter().rev() {
        let trajectories = results.split_off(results.len() - seeds.len());
        let aggregate = aggregate_seeds(&trajectories)?;
        out.push(CellResult {
            cell,
            seeds: seeds.to_vec(),
            trajectories,
            aggregate,
        });
    }
    out.reverse();
    Ok(out)
}
