//! The `ragtune` command line: oracle grid search, seeded runs, parameter
//! sweeps, model-switch studies, replay-file validation, synthetic
//! landscape generation and the suggest/report service.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ragtune::env::Regime;
use ragtune::harness::SwitchMode;

pub use config::CliConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "ragtune",
    version,
    about = "Bandit-based hyper-parameter tuning experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (0: all cores).
    #[arg(long, global = true, value_name = "N")]
    pub parallel: Option<usize>,
    /// `auto` to compute the oracle, or an oracle file to read.
    #[arg(long, global = true, value_name = "auto|FILE")]
    pub oracle: Option<String>,
    /// Override one configuration value, e.g. `run.alpha_h=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeArg {
    Continue,
    Reset,
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exhaustively evaluate every configuration and write the oracle.
    Grid,
    /// Run one method under every seed.
    Run,
    /// Run the Cartesian product of parameter values.
    Sweep {
        /// Sweep axis, e.g. `alpha_h=0.5,1,2`; replaces the same key from the file.
        #[arg(long = "grid", value_name = "KEY=V1,V2,..")]
        grid: Vec<String>,
    },
    /// Swap the environment mid-run, keeping or zeroing the learner.
    Switch {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Check a replay file for totality, ranges and manifest consistency.
    Validate {
        path: PathBuf,
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
    },
    /// Generate a synthetic landscape (optionally a correlated pair and a
    /// sampled replay table).
    GenLandscape {
        #[arg(long)]
        regime: Option<Regime>,
        #[arg(long)]
        landscape_seed: Option<u64>,
        #[arg(long)]
        pair: bool,
        /// Also write a replay table with this many queries per configuration.
        #[arg(long, value_name = "N")]
        queries: Option<usize>,
    },
    /// Run the suggest/report HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8787")]
        bind: String,
        /// Directory for periodic session snapshots.
        #[arg(long, value_name = "DIR")]
        state_dir: Option<PathBuf>,
        /// Seconds between snapshots.
        #[arg(long, default_value_t = 30)]
        persist_every: u64,
    },
}

fn toml_int(name: &str, value: u64) -> CliResult<toml::Value> {
    i64::try_from(value)
        .map(toml::Value::Integer)
        .map_err(|_| CliError::Config(format!("--{name} {value} exceeds {}", i64::MAX)))
}

/// Merge the configuration file and command-line values into one config.
pub fn load_config(global: &GlobalArgs, extra: &[(String, toml::Value)]) -> CliResult<CliConfig> {
    let mut doc = match &global.config {
        Some(path) => config::read_document(path)?,
        None => toml::Table::new(),
    };
    for assignment in &global.set {
        config::apply_set(&mut doc, assignment)?;
    }
    for (key, value) in extra {
        config::set_path(&mut doc, key, value.clone())?;
    }
    if let Some(seed) = global.seed {
        config::set_path(&mut doc, "seed", toml_int("seed", seed)?)?;
    }
    if let Some(out) = &global.out {
        config::set_path(
            &mut doc,
            "out",
            toml::Value::String(out.display().to_string()),
        )?;
    }
    if let Some(parallel) = global.parallel {
        config::set_path(&mut doc, "parallel", toml_int("parallel", parallel as u64)?)?;
    }
    if let Some(oracle) = &global.oracle {
        config::set_path(&mut doc, "oracle", toml::Value::String(oracle.clone()))?;
    }
    CliConfig::from_document(doc)
}

/// `key=v1,v2` to a sweep axis.
fn grid_axis(spec: &str) -> CliResult<(String, toml::Value)> {
    let (key, values) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--grid `{spec}` is not of the form key=v1,v2")))?;
    let values = values
        .split(',')
        .map(|v| toml::Value::String(v.trim().to_string()))
        .collect();
    Ok((
        format!("sweep.grid.{}", key.trim()),
        toml::Value::Array(values),
    ))
}

fn with_pool<T>(parallel: usize, job: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T>
where
    T: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(CliError::environment)?;
    pool.install(job)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    let mut extra = Vec::new();
    match &cli.command {
        Command::Validate { path, manifest } => {
            return commands::validate(path, manifest.as_deref())
        }
        Command::Serve {
            bind,
            state_dir,
            persist_every,
        } => {
            if *persist_every == 0 {
                return Err(CliError::Config("--persist-every must be >= 1".into()));
            }
            return commands::serve(commands::ServeOptions {
                bind: bind.clone(),
                state_dir: state_dir.clone(),
                persist_every: Duration::from_secs(*persist_every),
            });
        }
        Command::Sweep { grid } => {
            for spec in grid {
                extra.push(grid_axis(spec)?);
            }
        }
        Command::GenLandscape {
            regime,
            landscape_seed,
            ..
        } => {
            if let Some(regime) = regime {
                extra.push((
                    "environment.regime".into(),
                    toml::Value::String(regime.to_string()),
                ));
            }
            if let Some(seed) = landscape_seed {
                extra.push((
                    "environment.landscape_seed".into(),
                    toml_int("landscape-seed", *seed)?,
                ));
            }
        }
        Command::Switch { mode: Some(mode) } if *mode != ModeArg::Both => {
            let name = if *mode == ModeArg::Continue {
                "continue"
            } else {
                "reset"
            };
            extra.push(("switch.mode".into(), toml::Value::String(name.into())));
        }
        _ => {}
    }
    let config = load_config(&cli.global, &extra)?;
    let parallel = config.parallel;
    with_pool(parallel, move || {
        let mut setup = commands::Setup::new(config)?;
        match cli.command {
            Command::Grid => commands::grid(&setup),
            Command::Run => commands::run(&setup),
            Command::Sweep { .. } => commands::sweep_cmd(&setup),
            Command::Switch { mode } => {
                let modes = match mode {
                    Some(ModeArg::Both) => vec![SwitchMode::Continue, SwitchMode::Reset],
                    _ => vec![setup.config.switch.mode],
                };
                commands::switch(&mut setup, &modes)
            }
            Command::GenLandscape { pair, queries, .. } => {
                commands::gen_landscape(&setup, pair, queries)
            }
            Command::Validate { .. } | Command::Serve { .. } => unreachable!("handled above"),
        }
    })
}
