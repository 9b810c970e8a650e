//! Per-session tuner state and the suggest/report protocol on top of it.

use std::collections::BTreeMap;

use ragtune::harness::seed::{stream_rng, POLICY_STREAM};
use ragtune::hier::UpdateScope;
use ragtune::learner::{Learner, LearnerSettings, Method, Selection};
use ragtune::reward::{batch_reward, QueryOutcome, RewardParams};
use ragtune::space::{Config, HyperParamSpace, NamedConfig};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, ServiceError};

pub const DEFAULT_SUGGESTION_TTL_SECS: u64 = 3600;
pub const SNAPSHOT_FORMAT: &str = "ragtune-session/1";

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    #[serde(default = "HyperParamSpace::three_param")]
    pub space: HyperParamSpace,
    pub method: Method,
    #[serde(default)]
    pub reward: RewardParams,
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub alpha_h: f64,
    #[serde(default = "one")]
    pub alpha_l: f64,
    #[serde(default = "one")]
    pub obs_variance: f64,
    #[serde(default)]
    pub update_scope: UpdateScope,
    /// Starting point of the hierarchical learner, by level names.
    #[serde(default)]
    pub initial_config: Option<NamedConfig>,
    /// Drawn at random when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Refuse a new suggestion while another one awaits its report.
    #[serde(default)]
    pub strict_sequential: bool,
    #[serde(default)]
    pub suggestion_ttl_secs: Option<u64>,
}

fn one() -> f64 {
    1.0
}

impl SessionSpec {
    pub fn new(method: Method) -> Self {
        SessionSpec {
            space: HyperParamSpace::three_param(),
            method,
            reward: RewardParams::default(),
            alpha: 1.0,
            alpha_h: 1.0,
            alpha_l: 1.0,
            obs_variance: 1.0,
            update_scope: UpdateScope::default(),
            initial_config: None,
            seed: None,
            strict_sequential: false,
            suggestion_ttl_secs: None,
        }
    }

    fn settings(&self) -> Result<LearnerSettings> {
        let initial_config = match &self.initial_config {
            Some(named) => Some(
                self.space
                    .resolve(named)
                    .map_err(|e| ServiceError::Validation(format!("initial_config: {e}")))?,
            ),
            None => None,
        };
        Ok(LearnerSettings {
            method: self.method,
            alpha: self.alpha,
            alpha_h: self.alpha_h,
            alpha_l: self.alpha_l,
            obs_variance: self.obs_variance,
            update_scope: self.update_scope,
            initial_config,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pending {
    pub selection: Selection,
    pub issued_at: u64,
}

/// Everything a session needs to continue exactly where it left off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    pub space: HyperParamSpace,
    pub settings: LearnerSettings,
    pub reward: RewardParams,
    pub strict_sequential: bool,
    pub suggestion_ttl_secs: u64,
    pub learner: Learner,
    pub rng: ChaCha8Rng,
    pub pending: BTreeMap<u64, Pending>,
    pub next_suggestion: u64,
    pub accepted_reports: u64,
    pub expired_suggestions: u64,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub suggestion_id: u64,
    pub config: NamedConfig,
    pub config_index: usize,
    /// Dimension the hierarchical learner changed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulled_dimension: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub suggestion_id: u64,
    pub outcomes: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportAck {
    pub suggestion_id: u64,
    pub reward: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedConfig {
    pub rank: usize,
    pub config_index: usize,
    pub config: NamedConfig,
    /// Empirical mean or composite score; absent when nothing is known.
    pub score: Option<f64>,
    pub pulls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingView {
    pub trials: u64,
    pub entries: Vec<RankedConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub method: Method,
    pub cardinality: usize,
    pub dimensions: Vec<String>,
    /// Present for the hierarchical learner: one arm per dimension.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high_level_arms: Option<usize>,
    pub trials: u64,
    pub pending: usize,
    pub accepted_reports: u64,
    pub expired_suggestions: u64,
}

impl SessionState {
    pub fn create(spec: &SessionSpec, now: u64) -> Result<Self> {
        spec.reward.validate()?;
        let settings = spec.settings()?;
        let learner = settings.build(&spec.space)?;
        let seed = spec.seed.unwrap_or_else(rand::random);
        Ok(SessionState {
            space: spec.space.clone(),
            settings,
            reward: spec.reward,
            strict_sequential: spec.strict_sequential,
            suggestion_ttl_secs: spec
                .suggestion_ttl_secs
                .unwrap_or(DEFAULT_SUGGESTION_TTL_SECS),
            learner,
            rng: stream_rng(seed, POLICY_STREAM),
            pending: BTreeMap::new(),
            next_suggestion: 1,
            accepted_reports: 0,
            expired_suggestions: 0,
            created_at: now,
            updated_at: now,
        })
    }

    pub fn summary(&self) -> SessionSummary {
        SessionSummary {
            method: self.settings.method,
            cardinality: self.space.cardinality(),
            dimensions: self
                .space
                .dimensions()
                .iter()
                .map(|d| d.name.clone())
                .collect(),
            high_level_arms: match &self.learner {
                Learner::Hier(h) => Some(h.high_level().len()),
                Learner::Flat(_) => None,
            },
            trials: self.learner.total_trials(),
            pending: self.pending.len(),
            accepted_reports: self.accepted_reports,
            expired_suggestions: self.expired_suggestions,
        }
    }

    /// Drop suggestions idle for at least the TTL.
    pub fn expire(&mut self, now: u64) {
        let ttl = self.suggestion_ttl_secs;
        let before = self.pending.len();
        self.pending
            .retain(|_, p| now.saturating_sub(p.issued_at) < ttl);
        self.expired_suggestions += (before - self.pending.len()) as u64;
    }

    pub fn suggest(&mut self, now: u64) -> Result<Suggestion> {
        self.expire(now);
        if self.strict_sequential {
            if let Some(id) = self.pending.keys().next() {
                return Err(ServiceError::Conflict(format!(
                    "suggestion {id} is still awaiting its report (strict_sequential session)"
                )));
            }
        }
        let selection = self.learner.select(&self.space, &mut self.rng)?;
        let suggestion_id = self.next_suggestion;
        self.next_suggestion += 1;
        let out = Suggestion {
            suggestion_id,
            config: self.space.named(&selection.config)?,
            config_index: selection.config_index,
            pulled_dimension: selection
                .pulled_dimension
                .map(|d| self.space.dimensions()[d].name.clone()),
        };
        self.pending.insert(
            suggestion_id,
            Pending {
                selection,
                issued_at: now,
            },
        );
        self.updated_at = now;
        Ok(out)
    }

    /// Apply one report. Nothing changes unless the report is accepted.
    pub fn report(&mut self, report: &Report, now: u64) -> Result<ReportAck> {
        self.expire(now);
        let Some(pending) = self.pending.get(&report.suggestion_id) else {
            return Err(ServiceError::Conflict(format!(
                "suggestion {} is not pending (unknown, expired or already reported)",
                report.suggestion_id
            )));
        };
        for (i, outcome) in report.outcomes.iter().enumerate() {
            outcome
                .validate()
                .map_err(|e| ServiceError::Validation(format!("outcomes[{i}]: {e}")))?;
        }
        let reward = batch_reward(&report.outcomes, &self.reward)
            .map_err(|e| ServiceError::Validation(format!("outcomes: {e}")))?;
        self.learner.update(&pending.selection, reward)?;
        self.pending.remove(&report.suggestion_id);
        self.accepted_reports += 1;
        self.updated_at = now;
        Ok(ReportAck {
            suggestion_id: report.suggestion_id,
            reward,
            trials: self.learner.total_trials(),
        })
    }

    pub fn ranking(&self, x: usize) -> Result<RankingView> {
        let ranking = self.learner.ranking(x, &self.space)?;
        let entries = ranking
            .entries
            .iter()
            .take(x)
            .enumerate()
            .map(|(rank, e)| {
                Ok(RankedConfig {
                    rank: rank + 1,
                    config_index: e.config_index,
                    config: self.space.named(&self.space.config_at(e.config_index)?)?,
                    score: e.score.is_finite().then_some(e.score),
                    pulls: self.learner.config_pulls(e.config_index),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RankingView {
            trials: self.learner.total_trials(),
            entries,
        })
    }

    /// Zero the learner. Pending suggestions stay reportable.
    pub fn reset(&mut self, now: u64) {
        self.learner.reset();
        self.updated_at = now;
    }

    /// Structural consistency, checked after a restore.
    pub fn check(&self) -> Result<()> {
        let invalid = |m: String| Err(ServiceError::Validation(format!("snapshot state: {m}")));
        self.reward.validate()?;
        let fresh = self.settings.build(&self.space)?;
        match (&fresh, &self.learner) {
            (Learner::Flat(a), Learner::Flat(b)) => {
                if a.arms().len() != b.arms().len() || a.policy() != b.policy() {
                    return invalid("flat learner does not match the space or method".into());
                }
            }
            (Learner::Hier(a), Learner::Hier(b)) => {
                let shape = |h: &ragtune::hier::HierState| {
                    h.low_level().iter().map(Vec::len).collect::<Vec<_>>()
                };
                if shape(a) != shape(b)
                    || a.alphas() != b.alphas()
                    || a.update_scope() != b.update_scope()
                {
                    return invalid(
                        "hierarchical learner does not match the space or settings".into(),
                    );
                }
                if self.space.validate(b.current_config()).is_err() {
                    return invalid("current configuration is outside the space".into());
                }
                let n = self.space.cardinality();
                if b.config_stats().keys().any(|&k| k >= n) {
                    return invalid("config statistics reference unknown configurations".into());
                }
            }
            _ => return invalid("learner kind does not match the method".into()),
        }
        for (id, p) in &self.pending {
            if *id >= self.next_suggestion {
                return invalid(format!(
                    "pending suggestion {id} is not below next id {}",
                    self.next_suggestion
                ));
            }
            let index = self.space.index_of(&p.selection.config).ok();
            if index != Some(p.selection.config_index) {
                return invalid(format!(
                    "pending suggestion {id} names an inconsistent configuration"
                ));
            }
        }
        Ok(())
    }

    pub fn snapshot(&self) -> Result<Snapshot> {
        let state =
            serde_json::to_string(self).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let raw = serde_json::value::RawValue::from_string(state)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        Ok(Snapshot {
            format: SNAPSHOT_FORMAT.to_string(),
            checksum: checksum(raw.get()),
            state: raw,
        })
    }

    pub fn restore(snapshot: &Snapshot) -> Result<Self> {
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(ServiceError::Validation(format!(
                "unsupported snapshot format `{}` (expected `{SNAPSHOT_FORMAT}`)",
                snapshot.format
            )));
        }
        if checksum(snapshot.state.get()) != snapshot.checksum {
            return Err(ServiceError::Validation(
                "snapshot checksum mismatch".into(),
            ));
        }
        let state: SessionState = serde_json::from_str(snapshot.state.get())
            .map_err(|e| ServiceError::Validation(format!("snapshot state: {e}")))?;
        state.check()?;
        Ok(state)
    }

    /// The configuration a pending suggestion asked for.
    pub fn pending_config(&self, suggestion_id: u64) -> Option<&Config> {
        self.pending
            .get(&suggestion_id)
            .map(|p| &p.selection.config)
    }
}

/// Serialized session state plus an integrity checksum. Treat as opaque:
/// the checksum covers the exact bytes of `state`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub format: String,
    pub checksum: String,
    pub state: Box<serde_json::value::RawValue>,
}

impl Snapshot {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes)
            .map_err(|e| ServiceError::Validation(format!("snapshot: {e}")))
    }
}

fn checksum(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}
