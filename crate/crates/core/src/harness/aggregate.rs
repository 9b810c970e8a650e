//! Pointwise statistics over repeated runs.

use serde::Serialize;

use super::run::Trajectory;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregatePoint {
    pub budget: u64,
    pub recall_mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single run.
    pub recall_std: f64,
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Mean and sample standard deviation of recall at each checkpoint.
pub fn aggregate_seeds(trajectories: &[Trajectory]) -> Result<Vec<AggregatePoint>> {
    let first = trajectories.first().ok_or(Error::NoTrajectories)?;
    let budgets: Vec<u64> = first.recall_curve.iter().map(|p| p.budget).collect();
    for t in trajectories {
        if t.recall_curve.len() != budgets.len()
            || t.recall_curve
                .iter()
                .zip(&budgets)
                .any(|(p, &b)| p.budget != b)
        {
            return Err(Error::MisalignedCheckpoints);
        }
    }
    Ok(budgets
        .iter()
        .enumerate()
        .map(|(i, &budget)| {
            // sorted so the result does not depend on input order
            let mut values: Vec<f64> = trajectories
                .iter()
                .map(|t| t.recall_curve[i].recall)
                .collect();
            values.sort_by(f64::total_cmp);
            let (recall_mean, recall_std) = mean_and_std(&values);
            AggregatePoint {
                budget,
                recall_mean,
                recall_std,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::CurvePoint;

    fn constant(recall: f64) -> Trajectory {
        Trajectory {
            records: vec![],
            recall_curve: [100, 200]
                .iter()
                .map(|&budget| CurvePoint {
                    budget,
                    recall,
                    mean_reward_best_arm: 0.0,
                })
                .collect(),
            final_ranking: vec![],
            learner_trials_at_start: 0,
        }
    }

    #[test]
    fn two_constant_curves() {
        let agg = aggregate_seeds(&[constant(0.2), constant(0.8)]).unwrap();
        for p in agg {
            assert!((p.recall_mean - 0.5).abs() < 1e-15);
            // sqrt(((0.3)^2 * 2) / 1), evaluated independently
            assert!((p.recall_std - 0.42426406871192857).abs() < 1e-12);
        }
    }

    #[test]
    fn single_curve_is_itself() {
        let agg = aggregate_seeds(&[constant(0.4)]).unwrap();
        assert!(agg
            .iter()
            .all(|p| p.recall_mean == 0.4 && p.recall_std == 0.0));
    }

    #[test]
    fn misaligned_rejected() {
        let mut short = constant(0.1);
        short.recall_curve.pop();
        assert!(matches!(
            aggregate_seeds(&[constant(0.2), short]),
            Err(Error::MisalignedCheckpoints)
        ));
        assert!(matches!(aggregate_seeds(&[]), Err(Error::NoTrajectories)));
    }
}
