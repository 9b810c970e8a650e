//! Exhaustive ground truth and the Recall@x metric.

use serde::Serialize;

use crate::bandit::Ranking;
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::reward::RewardParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleTable {
    means: Vec<f64>,
    /// Configuration indices by mean, best first, ties by index.
    ranking: Vec<usize>,
    eval_count: u64,
}

impl OracleTable {
    pub fn from_means(means: Vec<f64>, eval_count: u64) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::EmptyArms);
        }
        if let Some(bad) = means.iter().find(|m| m.is_nan()) {
            return Err(Error::InvalidRun(format!(
                "oracle mean {bad} is not a number"
            )));
        }
        let mut ranking: Vec<usize> = (0..means.len()).collect();
        ranking.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
        Ok(OracleTable {
            means,
            ranking,
            eval_count,
        })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    pub fn eval_count(&self) -> u64 {
        self.eval_count
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn best(&self) -> usize {
        self.ranking[0]
    }

    pub fn top(&self, x: usize) -> &[usize] {
        &self.ranking[..x.min(self.ranking.len())]
    }
}

/// Evaluate every configuration exhaustively.
pub fn grid_search(env: &dyn Environment, reward: &RewardParams) -> Result<OracleTable> {
    reward.validate()?;
    let exact = env
        .exact_means(reward)
        .ok_or_else(|| Error::NotExhaustive(env.name().to_string()))??;
    if exact.means.len() != env.space().cardinality() {
        return Err(Error::InvalidRun(format!(
            "environment returned {} means for {} configurations",
            exact.means.len(),
            env.space().cardinality()
        )));
    }
    OracleTable::from_means(exact.means, exact.eval_count)
}

/// Overlap of two top-x sets, as a fraction of x.
pub fn top_x_overlap(a: &[usize], b: &[usize], x: usize) -> Result<f64> {
    if x == 0 {
        return Err(Error::RecallZero);
    }
    let cardinality = a.len().min(b.len());
    if x > cardinality {
        return Err(Error::RecallTooLarge { x, cardinality });
    }
    let top_b = &b[..x];
    let hits = a[..x].iter().filter(|c| top_b.contains(c)).count();
    Ok(hits as f64 / x as f64)
}

/// `|top-x(method) ∩ top-x(oracle)| / x`.
pub fn recall_at_x(method: &Ranking, oracle: &OracleTable, x: usize) -> Result<f64> {
    if method.len() != oracle.len() {
        return Err(Error::InvalidRun(format!(
            "method ranking covers {} configurations, oracle {}",
            method.len(),
            oracle.len()
        )));
    }
    let order: Vec<usize> = method.entries.iter().map(|e| e.config_index).collect();
    top_x_overlap(&order, oracle.ranking(), x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::RankEntry;

    fn ranking(order: &[usize]) -> Ranking {
        Ranking {
            entries: order
                .iter()
                .enumerate()
                .map(|(i, &c)| RankEntry {
                    config_index: c,
                    score: -(i as f64),
                })
                .collect(),
        }
    }

    #[test]
    fn oracle_sorts_with_index_ties() {
        let oracle = OracleTable::from_means(vec![0.1, 0.5, 0.5, -0.2], 0).unwrap();
        assert_eq!(oracle.ranking(), &[1, 2, 0, 3]);
        assert_eq!(oracle.best(), 1);
    }

    #[test]
    fn recall_examples() {
        let oracle =
            OracleTable::from_means(vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1, 0.0], 0)
                .unwrap();
        assert_eq!(
            recall_at_x(&ranking(&[2, 0, 1, 3, 4, 5, 6, 7, 8, 9]), &oracle, 3).unwrap(),
            1.0
        );
        let two_of_three =
            recall_at_x(&ranking(&[0, 1, 5, 2, 3, 4, 6, 7, 8, 9]), &oracle, 3).unwrap();
        assert!((two_of_three - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            recall_at_x(&ranking(&[5, 6, 7, 8, 9, 0, 1, 2, 3, 4]), &oracle, 5).unwrap(),
            0.0
        );
        assert!(matches!(
            recall_at_x(&ranking(&[0, 1, 2, 3, 4, 5, 6, 7, 8, 9]), &oracle, 11),
            Err(Error::RecallTooLarge { .. })
        ));
    }
}
