//! Experiment orchestration: oracle, learning loop, recall curves, sweeps
//! and model-switch studies.

mod aggregate;
mod oracle;
pub mod output;
mod run;
pub mod seed;
mod sweep;
mod switch;

pub use aggregate::{aggregate_seeds, mean_and_std, AggregatePoint};
pub use oracle::{grid_search, recall_at_x, top_x_overlap, OracleTable};
pub use run::{
    run_experiment, run_experiment_with_learner, CurvePoint, RunConfig, Trajectory, TrialRecord,
    DEFAULT_CHECKPOINT_EVERY,
};
pub use sweep::{apply_override, expand_grid, run_seeds, sweep, CellResult, SweepCell, SWEEP_KEYS};
pub use switch::{model_switch_run, SwitchMode};
