//! Experiment configuration files.
//!
//! A configuration is a TOML document. Values given on the command line
//! (`--set run.alpha_h=2`, `--seed 7`, ...) are merged into the document
//! before it is parsed, so they take precedence over the file. Unknown keys
//! anywhere are errors.

use std::fs;
use std::path::{Path, PathBuf};

use ragtune::env::{
    Environment, LandscapeModel, LandscapeOptions, Profile, Regime, RemoteEnv, RemoteOptions,
    ReplayTable,
};
use ragtune::harness::seed::{derive_seed, seed_list};
use ragtune::harness::{RunConfig, SwitchMode, DEFAULT_CHECKPOINT_EVERY};
use ragtune::hier::UpdateScope;
use ragtune::learner::{LearnerSettings, Method};
use ragtune::reward::RewardParams;
use ragtune::space::{HyperParamSpace, NamedConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Path component mixed into the master seed to derive a landscape seed.
const LANDSCAPE_SEED_TAG: u64 = 0x6c61_6e64;
/// Seed path for the run seeds.
const RUN_SEEDS_TAG: u64 = 0x7275_6e73;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    /// Master seed; every other seed is derived from it.
    pub seed: u64,
    /// Number of run seeds.
    pub seeds: usize,
    pub out: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub parallel: usize,
    /// `auto` computes the oracle; anything else is an oracle file to read.
    pub oracle: String,
    pub environment: EnvSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub switch: SwitchSection,
}

impl Default for CliConfig {
    fn default() -> Self {
        CliConfig {
            seed: 0,
            seeds: 10,
            out: PathBuf::from("results"),
            parallel: 0,
            oracle: "auto".into(),
            environment: EnvSection::default(),
            run: RunSection::default(),
            sweep: SweepSection::default(),
            switch: SwitchSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[default]
    Landscape,
    Replay,
    Remote,
}

/// A named preset (`two_param`, `three_param`) or an inline space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpaceSpec {
    Preset(String),
    Custom(HyperParamSpace),
}

impl Default for SpaceSpec {
    fn default() -> Self {
        SpaceSpec::Preset("three_param".into())
    }
}

impl SpaceSpec {
    pub fn resolve(&self) -> CliResult<HyperParamSpace> {
        match self {
            SpaceSpec::Preset(name) => match name.as_str() {
                "two_param" => Ok(HyperParamSpace::two_param()),
                "three_param" => Ok(HyperParamSpace::three_param()),
                other => Err(CliError::Config(format!(
                    "environment.space: unknown preset `{other}` (expected two_param or three_param)"
                ))),
            },
            SpaceSpec::Custom(space) => Ok(space.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub kind: EnvKind,
    /// Landscape regime to generate; ignored when `path` names a saved landscape.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    /// Derived from the master seed when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landscape_seed: Option<u64>,
    pub noise_std: f64,
    pub space: SpaceSpec,
    pub profile: String,
    /// Saved landscape (JSON) or replay table (CSV).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Replay manifest; `<stem>.manifest.json` next to the table when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for EnvSection {
    fn default() -> Self {
        let remote = RemoteOptions::default();
        EnvSection {
            kind: EnvKind::Landscape,
            regime: None,
            landscape_seed: None,
            noise_std: LandscapeOptions::default().noise_std,
            space: SpaceSpec::default(),
            profile: Profile::asqa_like().name,
            path: None,
            manifest: None,
            url: None,
            timeout_ms: remote.timeout_ms,
            retries: remote.retries,
            backoff_ms: remote.backoff_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub method: Method,
    pub alpha: f64,
    pub alpha_h: f64,
    pub alpha_l: f64,
    pub obs_variance: f64,
    pub update_scope: UpdateScope,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_config: Option<NamedConfig>,
    pub trials: usize,
    pub batch_size: usize,
    pub w: f64,
    /// Token normalization; the environment's when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<u32>,
    pub penalty_threshold: f64,
    pub recall_x: usize,
    pub checkpoint_every: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_checkpoints: Option<Vec<u64>>,
}

impl Default for RunSection {
    fn default() -> Self {
        let run = RunConfig::default();
        let learner = LearnerSettings::default();
        RunSection {
            method: learner.method,
            alpha: learner.alpha,
            alpha_h: learner.alpha_h,
            alpha_l: learner.alpha_l,
            obs_variance: learner.obs_variance,
            update_scope: learner.update_scope,
            initial_config: None,
            trials: run.trials,
            batch_size: run.batch_size,
            w: run.reward.w,
            t_max: None,
            penalty_threshold: run.reward.penalty_threshold,
            recall_x: run.recall_x,
            checkpoint_every: DEFAULT_CHECKPOINT_EVERY,
            eval_checkpoints: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Parameter name to the values it takes; the first key varies slowest.
    pub grid: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SwitchSection {
    pub mode: SwitchMode,
    pub phase1_budget: u64,
    pub phase2_budget: u64,
    /// Phase-two environment. When unset, a generated landscape is paired
    /// with a correlated second landscape.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvSection>,
}

impl Default for SwitchSection {
    fn default() -> Self {
        SwitchSection {
            mode: SwitchMode::Continue,
            phase1_budget: 6000,
            phase2_budget: 6000,
            environment: None,
        }
    }
}

/// Parse a command-line value as a TOML value, falling back to a string.
fn parse_value(text: &str) -> toml::Value {
    match format!("v = {text}").parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(text.into())),
        Err(_) => toml::Value::String(text.into()),
    }
}

/// Set a dotted `key` to `value` inside `doc`, creating tables on the way.
pub fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("invalid override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields at least one part");
    let mut table = doc;
    for (depth, part) in parents.iter().enumerate() {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override `{key}`: `{}` is not a table",
                parts[..=depth].join(".")
            ))
        })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Apply a `key=value` override.
pub fn apply_set(doc: &mut toml::Table, assignment: &str) -> CliResult<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        CliError::Config(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    set_path(doc, key.trim(), parse_value(value.trim()))
}

pub fn read_document(path: &Path) -> CliResult<toml::Table> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

impl CliConfig {
    pub fn from_document(doc: toml::Table) -> CliResult<Self> {
        let config: CliConfig =
            serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
                let path = e.path().to_string();
                CliError::Config(format!("{path}: {}", e.into_inner()))
            })?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        if self.seeds == 0 {
            return Err(CliError::Config("seeds must be >= 1".into()));
        }
        if self.oracle.trim().is_empty() {
            return Err(CliError::Config(
                "oracle must be `auto` or a file path".into(),
            ));
        }
        self.environment.validate("environment")?;
        if let Some(env) = &self.switch.environment {
            env.validate("switch.environment")?;
        }
        Ok(())
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        seed_list(derive_seed(self.seed, &[RUN_SEEDS_TAG]), self.seeds)
    }

    /// Landscape seed derived from the master seed, kept within TOML's
    /// integer range so it can be echoed.
    pub fn derived_landscape_seed(&self, phase: u64) -> u64 {
        derive_seed(self.seed, &[LANDSCAPE_SEED_TAG, phase]) >> 1
    }

    /// Pin every value left to a default that depends on other values, so
    /// the echoed configuration fully determines a rerun.
    pub fn resolve(&mut self, env_t_max: u32) {
        if self.environment.kind == EnvKind::Landscape && self.environment.path.is_none() {
            let seed = self.derived_landscape_seed(0);
            self.environment.landscape_seed.get_or_insert(seed);
        }
        self.run.t_max.get_or_insert(env_t_max);
    }

    pub fn reward(&self, env_t_max: u32) -> RewardParams {
        RewardParams {
            w: self.run.w,
            t_max: self.run.t_max.unwrap_or(env_t_max),
            penalty_threshold: self.run.penalty_threshold,
        }
    }

    pub fn run_config(&self, env_t_max: u32, space: &HyperParamSpace) -> CliResult<RunConfig> {
        let r = &self.run;
        let initial_config = match &r.initial_config {
            Some(named) => Some(
                space
                    .resolve(named)
                    .map_err(|e| CliError::Config(format!("run.initial_config: {e}")))?,
            ),
            None => None,
        };
        let run = RunConfig {
            learner: LearnerSettings {
                method: r.method,
                alpha: r.alpha,
                alpha_h: r.alpha_h,
                alpha_l: r.alpha_l,
                obs_variance: r.obs_variance,
                update_scope: r.update_scope,
                initial_config,
            },
            trials: r.trials,
            batch_size: r.batch_size,
            reward: self.reward(env_t_max),
            seed: self.seed,
            recall_x: r.recall_x,
            checkpoint_every: r.checkpoint_every,
            eval_checkpoints: r.eval_checkpoints.clone(),
        };
        run.validate(space)
            .map_err(|e| CliError::Config(format!("run: {e}")))?;
        Ok(run)
    }

    /// Sweep axes in file order, values in their text form.
    pub fn grid(&self) -> CliResult<Vec<(String, Vec<String>)>> {
        self.sweep
            .grid
            .iter()
            .map(|(key, value)| {
                let values = match value {
                    toml::Value::Array(items) => items
                        .iter()
                        .map(value_text)
                        .collect::<CliResult<Vec<_>>>()?,
                    scalar => vec![value_text(scalar)?],
                };
                if values.is_empty() {
                    return Err(CliError::Config(format!("sweep.grid.{key}: no values")));
                }
                Ok((key.clone(), values))
            })
            .collect()
    }
}

fn value_text(value: &toml::Value) -> CliResult<String> {
    match value {
        toml::Value::String(s) => Ok(s.clone()),
        toml::Value::Integer(i) => Ok(i.to_string()),
        toml::Value::Float(f) => Ok(f.to_string()),
        toml::Value::Boolean(b) => Ok(b.to_string()),
        other => Err(CliError::Config(format!(
            "sweep value {other} must be a scalar"
        ))),
    }
}

impl EnvSection {
    fn validate(&self, at: &str) -> CliResult<()> {
        let need = |what: &str| {
            CliError::Config(format!(
                "{at}: kind = \"{}\" requires `{what}`",
                kind_name(self.kind)
            ))
        };
        match self.kind {
            EnvKind::Landscape => {
                if self.regime.is_none() && self.path.is_none() {
                    return Err(need("regime` or `path"));
                }
                if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
                    return Err(CliError::Config(format!("{at}.noise_std must be > 0")));
                }
            }
            EnvKind::Replay => {
                if self.path.is_none() {
                    return Err(need("path"));
                }
            }
            EnvKind::Remote => {
                if self.url.is_none() {
                    return Err(need("url"));
                }
            }
        }
        if self.kind != EnvKind::Replay {
            self.profile()?;
            self.space.resolve()?;
        }
        Ok(())
    }

    fn profile(&self) -> CliResult<Profile> {
        Profile::by_name(&self.profile).ok_or_else(|| {
            CliError::Config(format!(
                "unknown profile `{}` (expected asqa-like or nq-like)",
                self.profile
            ))
        })
    }

    /// The token normalization this environment will report, without
    /// loading it.
    pub fn t_max(&self) -> CliResult<Option<u32>> {
        match self.kind {
            EnvKind::Replay => Ok(None),
            _ => Ok(Some(self.profile()?.t_max)),
        }
    }

    /// Generate or load a landscape. `seed` is the landscape seed to use
    /// when generating.
    pub fn landscape(&self, seed: u64, reward: &RewardParams) -> CliResult<LandscapeModel> {
        if let Some(path) = &self.path {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))?;
            let model: LandscapeModel = serde_json::from_str(&text)
                .map_err(|e| CliError::Environment(format!("{}: {e}", path.display())))?;
            model.validate()?;
            return Ok(model);
        }
        let regime = self
            .regime
            .ok_or_else(|| CliError::Config("landscape needs a regime".into()))?;
        let options = LandscapeOptions {
            noise_std: self.noise_std,
            reward: *reward,
        };
        Ok(LandscapeModel::generate(
            regime,
            &self.space.resolve()?,
            seed,
            &options,
        )?)
    }

    pub fn build(
        &self,
        seed: Option<u64>,
        reward: &RewardParams,
    ) -> CliResult<Box<dyn Environment>> {
        match self.kind {
            EnvKind::Landscape => Ok(Box::new(self.landscape(seed.unwrap_or(0), reward)?)),
            EnvKind::Replay => {
                let path = self.path.as_ref().expect("validated");
                let table = match &self.manifest {
                    Some(m) => ReplayTable::load_with_manifest(path, m),
                    None => ReplayTable::load(path),
                }
                .map_err(CliError::environment)?;
                Ok(Box::new(table))
            }
            EnvKind::Remote => {
                let options = RemoteOptions {
                    url: self.url.clone().expect("validated"),
                    timeout_ms: self.timeout_ms,
                    retries: self.retries,
                    backoff_ms: self.backoff_ms,
                };
                Ok(Box::new(RemoteEnv::new(
                    self.space.resolve()?,
                    self.profile()?.t_max,
                    options,
                )?))
            }
        }
    }
}

fn kind_name(kind: EnvKind) -> &'static str {
    match kind {
        EnvKind::Landscape => "landscape",
        EnvKind::Replay => "replay",
        EnvKind::Remote => "remote",
    }
}
