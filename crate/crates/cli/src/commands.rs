//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use ragtune::env::{
    manifest_path_for, validate_replay, Environment, LandscapeModel, LandscapeOptions, ReplayTable,
};
use ragtune::harness::output::{
    read_oracle, write_aggregate, write_oracle, write_results, write_trial_log_file, AggregateRow,
    ResultRow,
};
use ragtune::harness::seed::{stream_rng, ENV_STREAM};
use ragtune::harness::{
    aggregate_seeds, grid_search, mean_and_std, model_switch_run, run_experiment, sweep,
    OracleTable, RunConfig, SwitchMode, Trajectory,
};
use ragtune::reward::RewardParams;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CliConfig, EnvKind};
use crate::error::{CliError, CliResult};

pub const RESOLVED_CONFIG: &str = "resolved-config.toml";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// An environment and run configuration ready to execute.
pub struct Setup {
    pub config: CliConfig,
    pub env: Box<dyn Environment>,
    pub run: RunConfig,
}

impl Setup {
    pub fn new(mut config: CliConfig) -> CliResult<Self> {
        let hint = config
            .environment
            .t_max()?
            .unwrap_or(RewardParams::default().t_max);
        if config.environment.kind == EnvKind::Landscape && config.environment.path.is_none() {
            let seed = config.derived_landscape_seed(0);
            config.environment.landscape_seed.get_or_insert(seed);
        }
        let env = config
            .environment
            .build(config.environment.landscape_seed, &config.reward(hint))?;
        config.resolve(env.t_max());
        let run = config.run_config(env.t_max(), env.space())?;
        Ok(Setup { config, env, run })
    }

    pub fn out(&self) -> &Path {
        &self.config.out
    }

    pub fn write_resolved(&self) -> CliResult<()> {
        write_resolved(&self.config)
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Environment(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::environment)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_resolved(config: &CliConfig) -> CliResult<()> {
    let text = toml::to_string(config).map_err(CliError::config)?;
    write_text(&config.out.join(RESOLVED_CONFIG), &text)
}

/// The oracle for `env`: computed when the configuration says `auto`
/// (and written to `oracle.csv` in `dir`), otherwise read from a file.
fn oracle_for(
    config: &CliConfig,
    env: &dyn Environment,
    reward: &RewardParams,
    dir: &Path,
) -> CliResult<OracleTable> {
    if config.oracle == "auto" {
        let oracle = grid_search(env, reward)?;
        write_oracle(&dir.join("oracle.csv"), &oracle, env.space())?;
        return Ok(oracle);
    }
    let path = Path::new(&config.oracle);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "oracle file {} does not exist (use --oracle auto to compute it)",
            path.display()
        )));
    }
    Ok(read_oracle(path, env.space())?)
}

fn seed_file(dir: &Path, index: usize, suffix: &str) -> PathBuf {
    dir.join("trajectories")
        .join(format!("seed-{index:02}{suffix}.csv"))
}

/// Write per-seed trial logs, per-checkpoint results and the seed
/// aggregate of one set of trajectories.
fn write_trajectories(
    dir: &Path,
    run: &RunConfig,
    seeds: &[u64],
    trajectories: &[Trajectory],
    suffix: &str,
) -> CliResult<()> {
    let method = run.learner.method;
    let mut rows = Vec::new();
    for (i, (seed, t)) in seeds.iter().zip(trajectories).enumerate() {
        write_trial_log_file(&seed_file(dir, i, suffix), &t.records)?;
        rows.extend(ResultRow::from_trajectory(method, *seed, t));
    }
    write_results(&dir.join("results.csv"), &rows)?;
    let aggregate = aggregate_seeds(trajectories)?;
    write_aggregate(
        &dir.join("aggregate.csv"),
        &AggregateRow::from_points(method, &aggregate),
    )?;
    Ok(())
}

fn final_summary(trajectories: &[Trajectory]) -> (f64, f64) {
    let finals: Vec<f64> = trajectories
        .iter()
        .filter_map(Trajectory::final_recall)
        .collect();
    mean_and_std(&finals)
}

pub fn grid(setup: &Setup) -> CliResult<()> {
    let out = setup.out();
    create_dir(out)?;
    setup.write_resolved()?;
    let oracle = grid_search(setup.env.as_ref(), &setup.run.reward)?;
    let path = out.join("oracle.csv");
    write_oracle(&path, &oracle, setup.env.space())?;
    println!(
        "oracle: {} configurations, eval_count {}, best config_id {} -> {}",
        oracle.len(),
        oracle.eval_count(),
        oracle.best(),
        path.display()
    );
    Ok(())
}

pub fn run(setup: &Setup) -> CliResult<()> {
    let out = setup.out();
    create_dir(out)?;
    setup.write_resolved()?;
    let marker = out.join(INCOMPLETE_MARKER);
    let oracle = oracle_for(&setup.config, setup.env.as_ref(), &setup.run.reward, out)?;
    let seeds = setup.config.run_seeds();
    let outcomes: Vec<Result<Trajectory, ragtune::Error>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = RunConfig {
                seed,
                ..setup.run.clone()
            };
            run_experiment(&run, setup.env.as_ref(), &oracle)
        })
        .collect();

    let mut failures = Vec::new();
    for (i, (seed, outcome)) in seeds.iter().zip(&outcomes).enumerate() {
        match outcome {
            Ok(t) => write_trial_log_file(&seed_file(out, i, ""), &t.records)?,
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    if !failures.is_empty() {
        write_text(&marker, &(failures.join("\n") + "\n"))?;
        let first = outcomes
            .into_iter()
            .find_map(Result::err)
            .expect("a failure was recorded");
        return Err(match CliError::from(first) {
            CliError::Config(m) | CliError::Environment(m) | CliError::Validation(m) => {
                CliError::Environment(format!(
                    "{m} ({} of {} seeds failed; partial results flagged in {})",
                    failures.len(),
                    seeds.len(),
                    marker.display()
                ))
            }
        });
    }
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| io_err(&marker, e))?;
    }
    let trajectories: Vec<Trajectory> = outcomes.into_iter().collect::<Result<_, _>>()?;
    write_trajectories(out, &setup.run, &seeds, &trajectories, "")?;
    let (mean, std) = final_summary(&trajectories);
    println!(
        "{}: Recall@{} at budget {} = {mean:.4} ± {std:.4} over {} seeds",
        setup.run.learner.method,
        setup.run.recall_x,
        setup.run.budget(),
        seeds.len()
    );
    Ok(())
}

/// Directory name for a sweep cell.
pub fn cell_dir_name(index: usize, label: &str) -> String {
    let slug: String = label
        .chars()
        .map(|c| match c {
            '=' => '-',
            c if c.is_ascii_alphanumeric() || c == '.' || c == '-' || c == '_' => c,
            _ => '_',
        })
        .collect();
    format!("{index:02}_{slug}")
}

#[derive(Serialize)]
struct SweepRow<'a> {
    cell: usize,
    overrides: &'a str,
    method: ragtune::learner::Method,
    budget: u64,
    recall_mean: f64,
    recall_std: f64,
}

pub fn sweep_cmd(setup: &Setup) -> CliResult<()> {
    let out = setup.out();
    let grid = setup.config.grid()?;
    if grid.is_empty() {
        return Err(CliError::Config(
            "sweep needs at least one axis (sweep.grid or --grid)".into(),
        ));
    }
    if setup.config.oracle != "auto" {
        return Err(CliError::Config(
            "sweep computes one oracle per reward definition; use --oracle auto".into(),
        ));
    }
    create_dir(out)?;
    setup.write_resolved()?;
    let seeds = setup.config.run_seeds();
    let cells = sweep(&setup.run, &grid, &seeds, setup.env.as_ref())?;

    let labels: Vec<String> = cells.iter().map(|c| c.cell.label()).collect();
    let mut rows = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        let dir = out.join("cells").join(cell_dir_name(i, &labels[i]));
        write_trajectories(&dir, &cell.cell.run, &seeds, &cell.trajectories, "")?;
        let (mean, std) = final_summary(&cell.trajectories);
        println!(
            "cell {i:02} [{}]: final Recall@{} = {mean:.4} ± {std:.4}",
            labels[i], cell.cell.run.recall_x
        );
        for p in &cell.aggregate {
            rows.push(SweepRow {
                cell: i,
                overrides: &labels[i],
                method: cell.cell.method(),
                budget: p.budget,
                recall_mean: p.recall_mean,
                recall_std: p.recall_std,
            });
        }
    }
    let path = out.join("sweep.csv");
    let mut writer = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    for row in rows {
        writer.serialize(row).map_err(|e| io_err(&path, e))?;
    }
    writer.flush().map_err(|e| io_err(&path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct SwitchSeed {
    seed: u64,
    /// Learner trials carried into phase two; 0 under reset.
    phase2_learner_trials_at_start: u64,
    phase1_final_recall: Option<f64>,
    phase2_final_recall: Option<f64>,
}

#[derive(Serialize)]
struct SwitchMetadata<'a> {
    mode: SwitchMode,
    method: ragtune::learner::Method,
    switch_budget: u64,
    phase1_budget: u64,
    phase2_budget: u64,
    batch_size: usize,
    trials: usize,
    phase1_environment: &'a str,
    phase2_environment: &'a str,
    seeds: Vec<SwitchSeed>,
}

/// Build the phase-two environment. Without an explicit one, a generated
/// phase-one landscape is replaced by the first of a correlated pair.
fn switch_environments(setup: &Setup) -> CliResult<(Box<dyn Environment>, Box<dyn Environment>)> {
    let config = &setup.config;
    let reward = setup.run.reward;
    match &config.switch.environment {
        Some(section) => {
            let mut section = section.clone();
            if section.kind == EnvKind::Landscape && section.path.is_none() {
                section
                    .landscape_seed
                    .get_or_insert(config.derived_landscape_seed(1));
            }
            let first = config
                .environment
                .build(config.environment.landscape_seed, &reward)?;
            let second = section.build(section.landscape_seed, &reward)?;
            Ok((first, second))
        }
        None => {
            let env = &config.environment;
            let regime = match (env.kind, env.regime, &env.path) {
                (EnvKind::Landscape, Some(regime), None) => regime,
                _ => return Err(CliError::Config(
                    "switch needs [switch.environment] unless phase one is a generated landscape"
                        .into(),
                )),
            };
            let options = LandscapeOptions {
                noise_std: env.noise_std,
                reward,
            };
            let seed = env.landscape_seed.expect("resolved");
            let (a, b) = LandscapeModel::generate_correlated_pair(
                regime,
                &env.space.resolve()?,
                seed,
                &options,
            )?;
            Ok((Box::new(a), Box::new(b)))
        }
    }
}

pub fn switch(setup: &mut Setup, modes: &[SwitchMode]) -> CliResult<()> {
    let s = setup.config.switch.clone();
    let b = setup.run.batch_size as u64;
    for (name, budget) in [
        ("phase1_budget", s.phase1_budget),
        ("phase2_budget", s.phase2_budget),
    ] {
        if budget == 0 || budget % b != 0 {
            return Err(CliError::Config(format!(
                "switch.{name} = {budget} must be a positive multiple of batch_size {b}"
            )));
        }
    }
    let trials = ((s.phase1_budget + s.phase2_budget) / b) as usize;
    setup.config.run.trials = trials;
    setup.run.trials = trials;
    setup.run.validate(setup.env.space())?;

    let out = setup.config.out.clone();
    create_dir(&out)?;
    setup.write_resolved()?;
    let (env1, env2) = switch_environments(setup)?;
    if env1.space() != env2.space() {
        return Err(CliError::Config(
            "the two phases use different search spaces".into(),
        ));
    }
    let reward = setup.run.reward;
    let oracle1 = grid_search(env1.as_ref(), &reward)?;
    let oracle2 = grid_search(env2.as_ref(), &reward)?;
    write_oracle(&out.join("oracle-phase1.csv"), &oracle1, env1.space())?;
    write_oracle(&out.join("oracle-phase2.csv"), &oracle2, env2.space())?;
    let seeds = setup.config.run_seeds();

    for &mode in modes {
        let dir = out.join(mode.to_string());
        let pairs: Vec<(Trajectory, Trajectory)> = seeds
            .par_iter()
            .map(|&seed| {
                let run = RunConfig {
                    seed,
                    ..setup.run.clone()
                };
                model_switch_run(
                    &run,
                    (env1.as_ref(), &oracle1),
                    (env2.as_ref(), &oracle2),
                    s.phase1_budget,
                    mode,
                )
            })
            .collect::<Result<_, _>>()?;
        let (first, second): (Vec<Trajectory>, Vec<Trajectory>) = pairs.into_iter().unzip();
        write_trajectories(&dir.join("phase1"), &setup.run, &seeds, &first, ".phase1")?;
        write_trajectories(&dir.join("phase2"), &setup.run, &seeds, &second, ".phase2")?;
        let metadata = SwitchMetadata {
            mode,
            method: setup.run.learner.method,
            switch_budget: s.phase1_budget,
            phase1_budget: s.phase1_budget,
            phase2_budget: s.phase2_budget,
            batch_size: setup.run.batch_size,
            trials,
            phase1_environment: env1.name(),
            phase2_environment: env2.name(),
            seeds: seeds
                .iter()
                .zip(first.iter().zip(&second))
                .map(|(&seed, (a, b))| SwitchSeed {
                    seed,
                    phase2_learner_trials_at_start: b.learner_trials_at_start,
                    phase1_final_recall: a.final_recall(),
                    phase2_final_recall: b.final_recall(),
                })
                .collect(),
        };
        write_json(&dir.join("metadata.json"), &metadata)?;
        let (m1, _) = final_summary(&first);
        let (m2, _) = final_summary(&second);
        println!(
            "{mode}: Recall@{} {m1:.4} at switch budget {}, {m2:.4} at budget {}",
            setup.run.recall_x,
            s.phase1_budget,
            s.phase1_budget + s.phase2_budget
        );
    }
    Ok(())
}

/// Check a replay file and print every problem found.
pub fn validate(path: &Path, manifest: Option<&Path>) -> CliResult<()> {
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{} does not exist",
            path.display()
        )));
    }
    let manifest = manifest
        .map(Path::to_path_buf)
        .unwrap_or_else(|| manifest_path_for(path));
    let report =
        validate_replay(path, &manifest).map_err(|e| CliError::Validation(e.to_string()))?;
    println!(
        "{}: {} rows, {} configurations, {} queries, {} clamped token counts",
        path.display(),
        report.rows,
        report.configs,
        report.queries,
        report.clamped_tokens
    );
    for issue in &report.issues {
        println!("  {issue}");
    }
    const SHOWN: usize = 20;
    for (config_id, query_id) in report.missing.iter().take(SHOWN) {
        println!("  missing pair: config_id `{config_id}`, query_id `{query_id}`");
    }
    if report.missing.len() > SHOWN {
        println!(
            "  ... and {} more missing pairs",
            report.missing.len() - SHOWN
        );
    }
    if report.is_clean() {
        println!("clean");
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} issues, {} missing pairs",
            report.issues.len(),
            report.missing.len()
        )))
    }
}

pub fn gen_landscape(setup: &Setup, pair: bool, queries: Option<usize>) -> CliResult<()> {
    let config = &setup.config;
    let env = &config.environment;
    let regime = match (env.kind, env.regime) {
        (EnvKind::Landscape, Some(regime)) if env.path.is_none() => regime,
        _ => {
            return Err(CliError::Config(
                "gen-landscape needs a landscape environment with a regime".into(),
            ))
        }
    };
    let out = setup.out();
    create_dir(out)?;
    setup.write_resolved()?;
    let reward = setup.run.reward;
    let seed = env.landscape_seed.expect("resolved");
    let space = env.space.resolve()?;
    let options = LandscapeOptions {
        noise_std: env.noise_std,
        reward,
    };
    let models = if pair {
        let (a, b) = LandscapeModel::generate_correlated_pair(regime, &space, seed, &options)?;
        vec![a, b]
    } else {
        vec![LandscapeModel::generate(regime, &space, seed, &options)?]
    };
    for (i, model) in models.iter().enumerate() {
        let suffix = if i == 0 { "" } else { "-b" };
        write_json(&out.join(format!("landscape{suffix}.json")), model)?;
        let oracle = grid_search(model, &reward)?;
        write_oracle(&out.join(format!("oracle{suffix}.csv")), &oracle, &space)?;
        let check = model.check_regime(&reward);
        println!(
            "{}: {regime}, noise_std {:.4}, regime holds: {} ({})",
            model.name, model.noise_std, check.holds, check.detail
        );
        if let Some(n) = queries {
            let mut rng = stream_rng(seed, ENV_STREAM + i as u64);
            let table = ReplayTable::from_fn(space.clone(), env_profile(env)?, n, |c, _| {
                model.sample(c, 1, &mut rng)[0]
            })?;
            let path = out.join(format!("replay{suffix}.csv"));
            table.write(&path)?;
            println!(
                "replay table: {} configurations × {n} queries -> {}",
                space.cardinality(),
                path.display()
            );
        }
    }
    Ok(())
}

fn env_profile(env: &crate::config::EnvSection) -> CliResult<ragtune::env::Profile> {
    ragtune::env::Profile::by_name(&env.profile)
        .ok_or_else(|| CliError::Config(format!("unknown profile `{}`", env.profile)))
}

pub struct ServeOptions {
    pub bind: String,
    pub state_dir: Option<PathBuf>,
    pub persist_every: Duration,
}

pub fn serve(options: ServeOptions) -> CliResult<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(CliError::environment)?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&options.bind)
            .await
            .map_err(|e| CliError::Environment(format!("cannot bind {}: {e}", options.bind)))?;
        let addr = listener.local_addr().map_err(CliError::environment)?;
        println!("listening on http://{addr}");
        use std::io::Write;
        std::io::stdout().flush().ok();
        let persistence = options.state_dir.map(|dir| ragtune_service::Persistence {
            dir,
            every: options.persist_every,
        });
        let manager = Arc::new(ragtune_service::SessionManager::default());
        ragtune_service::serve(listener, manager, persistence)
            .await
            .map_err(CliError::environment)
    })
}
