//! Delimited-text result files.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::aggregate::AggregatePoint;
use super::oracle::OracleTable;
use super::run::{Trajectory, TrialRecord};
use crate::error::{Error, Result};
use crate::learner::Method;
use crate::space::HyperParamSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub seed: u64,
    pub budget: u64,
    pub recall: f64,
    pub mean_reward_best_arm: f64,
}

impl ResultRow {
    pub fn from_trajectory(method: Method, seed: u64, trajectory: &Trajectory) -> Vec<ResultRow> {
        trajectory
            .recall_curve
            .iter()
            .map(|p| ResultRow {
                method,
                seed,
                budget: p.budget,
                recall: p.recall,
                mean_reward_best_arm: p.mean_reward_best_arm,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub budget: u64,
    pub recall_mean: f64,
    pub recall_std: f64,
}

impl AggregateRow {
    pub fn from_points(method: Method, points: &[AggregatePoint]) -> Vec<AggregateRow> {
        points
            .iter()
            .map(|p| AggregateRow {
                method,
                budget: p.budget,
                recall_mean: p.recall_mean,
                recall_std: p.recall_std,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrialLogRow {
    trial: usize,
    config_id: usize,
    pulled_dimension: Option<usize>,
    reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OracleRow {
    rank: usize,
    config_id: usize,
    config: String,
    mean_reward: f64,
}

fn write_rows<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(File::create(path)?)
}

/// Header-only output still needs the header line.
fn write_table<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut file = create(path)?;
    if rows.is_empty() {
        writeln!(file, "{}", header.join(","))?;
        return Ok(());
    }
    write_rows(file, rows)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_table(
        path,
        &["method", "seed", "budget", "recall", "mean_reward_best_arm"],
        rows,
    )
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    write_table(
        path,
        &["method", "budget", "recall_mean", "recall_std"],
        rows,
    )
}

pub fn write_trial_log<W: Write>(out: W, records: &[TrialRecord]) -> Result<()> {
    let rows: Vec<TrialLogRow> = records
        .iter()
        .map(|r| TrialLogRow {
            trial: r.trial,
            config_id: r.config_index,
            pulled_dimension: r.pulled_dimension,
            reward: r.reward,
        })
        .collect();
    if rows.is_empty() {
        let mut out = out;
        writeln!(out, "trial,config_id,pulled_dimension,reward")?;
        return Ok(());
    }
    write_rows(out, rows)
}

pub fn write_trial_log_file(path: &Path, records: &[TrialRecord]) -> Result<()> {
    write_trial_log(create(path)?, records)
}

pub fn read_trial_log<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["trial", "config_id", "pulled_dimension", "reward"] {
        return Err(Error::InvalidRun(
            "trial log header must be `trial,config_id,pulled_dimension,reward`".into(),
        ));
    }
    reader
        .deserialize()
        .map(|row| {
            let row: TrialLogRow = row?;
            Ok(TrialRecord {
                trial: row.trial,
                config_index: row.config_id,
                pulled_dimension: row.pulled_dimension,
                reward: row.reward,
            })
        })
        .collect()
}

pub fn write_oracle(path: &Path, oracle: &OracleTable, space: &HyperParamSpace) -> Result<()> {
    let rows = oracle
        .ranking()
        .iter()
        .enumerate()
        .map(|(rank, &c)| {
            Ok(OracleRow {
                rank: rank + 1,
                config_id: c,
                config: space.describe(&space.config_at(c)?),
                mean_reward: oracle.means()[c],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_table(path, &["rank", "config_id", "config", "mean_reward"], &rows)
}

/// Read an oracle file written by [`write_oracle`]. Every configuration
/// of `space` must appear exactly once.
pub fn read_oracle(path: &Path, space: &HyperParamSpace) -> Result<OracleTable> {
    let mut reader = csv::Reader::from_path(path)?;
    let n = space.cardinality();
    let mut means: Vec<Option<f64>> = vec![None; n];
    for (i, row) in reader.deserialize().enumerate() {
        let row: OracleRow = row?;
        let line = i as u64 + 2;
        let bad = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line,
            message,
        };
        let slot = means.get_mut(row.config_id).ok_or_else(|| {
            bad(format!(
                "config_id {} outside the space ({n} configs)",
                row.config_id
            ))
        })?;
        if slot.replace(row.mean_reward).is_some() {
            return Err(bad(format!("config_id {} listed twice", row.config_id)));
        }
    }
    let means = means
        .into_iter()
        .enumerate()
        .map(|(c, m)| {
            m.ok_or_else(|| {
                Error::InvalidRun(format!(
                    "oracle file {} lacks config_id {c}",
                    path.display()
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    OracleTable::from_means(means, 0)
}
