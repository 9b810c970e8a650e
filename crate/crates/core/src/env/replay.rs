//! Replay tables: precomputed outcomes for every (configuration, query).
//!
//! On disk a table is a CSV file with the header
//! `config_id,query_id,accuracy,tokens` plus a JSON manifest next to it
//! (`<stem>.manifest.json`) that holds the profile, the search space and
//! the mapping from `config_id` to named levels.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Environment, ExactMeans, Profile};
use crate::error::{Error, Result};
use crate::reward::{compute_reward, QueryOutcome, RewardParams};
use crate::space::{Config, HyperParamSpace, NamedConfig};

pub const REPLAY_HEADER: [&str; 4] = ["config_id", "query_id", "accuracy", "tokens"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub profile: String,
    pub t_max: u32,
    pub space: HyperParamSpace,
    pub configs: BTreeMap<String, NamedConfig>,
}

pub fn manifest_path_for(csv: &Path) -> PathBuf {
    csv.with_extension("manifest.json")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayTable {
    space: HyperParamSpace,
    profile: Profile,
    /// Sorted ascending; this is the summation order of exact means.
    queries: Vec<String>,
    /// External id per flat configuration index.
    config_ids: Vec<String>,
    /// `records[config * queries.len() + query]`
    records: Vec<QueryOutcome>,
}

/// Problems found while reading a replay file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub rows: u64,
    pub configs: usize,
    pub queries: usize,
    pub clamped_tokens: u64,
    pub issues: Vec<String>,
    pub missing: Vec<(String, String)>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty() && self.missing.is_empty()
    }
}

impl ReplayTable {
    /// Build a table from a dense outcome generator. Queries are named
    /// `q0000`, `q0001`, ... and configurations by their flat index.
    pub fn from_fn(
        space: HyperParamSpace,
        profile: Profile,
        query_count: usize,
        mut outcome: impl FnMut(usize, usize) -> QueryOutcome,
    ) -> Result<Self> {
        if query_count == 0 {
            return Err(Error::InvalidRun(
                "replay table needs at least one query".into(),
            ));
        }
        let width = query_count.saturating_sub(1).to_string().len().max(4);
        let queries = (0..query_count).map(|q| format!("q{q:0width$}")).collect();
        let n = space.cardinality();
        let mut records = Vec::with_capacity(n * query_count);
        for c in 0..n {
            for q in 0..query_count {
                let o = outcome(c, q);
                o.validate()?;
                records.push(QueryOutcome::new(o.accuracy, o.tokens.min(profile.t_max)));
            }
        }
        Ok(ReplayTable {
            config_ids: (0..n).map(|c| c.to_string()).collect(),
            space,
            profile,
            queries,
            records,
        })
    }

    pub fn load(csv_path: &Path) -> Result<Self> {
        Self::load_with_manifest(csv_path, &manifest_path_for(csv_path))
    }

    pub fn load_with_manifest(csv_path: &Path, manifest_path: &Path) -> Result<Self> {
        let parsed = parse(csv_path, manifest_path)?;
        if let Some(first) = parsed.first_issue {
            return Err(first.into_error());
        }
        match parsed.table {
            Some(table) => Ok(table),
            None => Err(Error::MissingReplayPairs {
                missing: parsed.report.missing,
            }),
        }
    }

    pub fn write(&self, csv_path: &Path) -> Result<()> {
        if let Some(dir) = csv_path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir)?;
            }
        }
        let mut writer = csv::Writer::from_path(csv_path)?;
        writer.write_record(REPLAY_HEADER)?;
        let nq = self.queries.len();
        for (c, id) in self.config_ids.iter().enumerate() {
            for (q, query) in self.queries.iter().enumerate() {
                let o = self.records[c * nq + q];
                writer.write_record([
                    id.as_str(),
                    query,
                    &o.accuracy.to_string(),
                    &o.tokens.to_string(),
                ])?;
            }
        }
        writer.flush()?;

        let mut configs = BTreeMap::new();
        for (c, id) in self.config_ids.iter().enumerate() {
            configs.insert(id.clone(), self.space.named(&self.space.config_at(c)?)?);
        }
        let manifest = Manifest {
            profile: self.profile.name.clone(),
            t_max: self.profile.t_max,
            space: self.space.clone(),
            configs,
        };
        let mut f = fs::File::create(manifest_path_for(csv_path))?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn queries(&self) -> &[String] {
        &self.queries
    }

    pub fn config_id(&self, index: usize) -> &str {
        &self.config_ids[index]
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Recorded outcomes of one configuration in ascending query order.
    pub fn outcomes(&self, config_index: usize) -> &[QueryOutcome] {
        let nq = self.queries.len();
        &self.records[config_index * nq..(config_index + 1) * nq]
    }

    pub fn get(&self, config_index: usize, query_id: &str) -> Option<QueryOutcome> {
        let q = self
            .queries
            .binary_search_by(|probe| probe.as_str().cmp(query_id))
            .ok()?;
        self.records
            .get(config_index * self.queries.len() + q)
            .copied()
    }

    /// Mean reward of one configuration, summed in ascending query order.
    pub fn exact_mean(&self, config_index: usize, reward: &RewardParams) -> Result<f64> {
        let outcomes = self.outcomes(config_index);
        let mut sum = 0.0;
        for o in outcomes {
            sum += compute_reward(o, reward)?;
        }
        Ok(sum / outcomes.len() as f64)
    }
}

impl Environment for ReplayTable {
    fn name(&self) -> &str {
        &self.profile.name
    }

    fn space(&self) -> &HyperParamSpace {
        &self.space
    }

    fn t_max(&self) -> u32 {
        self.profile.t_max
    }

    /// Distinct queries within a batch, independent draws across batches.
    fn evaluate(
        &self,
        config: &Config,
        batch_size: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<QueryOutcome>> {
        let c = self.space.index_of(config)?;
        let nq = self.queries.len();
        if batch_size > nq {
            return Err(Error::BatchTooLarge {
                batch_size,
                queries: nq,
            });
        }
        let row = self.outcomes(c);
        Ok(index::sample(rng, nq, batch_size)
            .into_iter()
            .map(|q| row[q])
            .collect())
    }

    fn exact_means(&self, reward: &RewardParams) -> Option<Result<ExactMeans>> {
        let means = (0..self.space.cardinality())
            .map(|c| self.exact_mean(c, reward))
            .collect::<Result<Vec<_>>>();
        Some(means.map(|means| ExactMeans {
            eval_count: (self.space.cardinality() * self.queries.len()) as u64,
            means,
        }))
    }
}

#[derive(Debug, Clone)]
enum Issue {
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },
    Manifest(String),
}

impl Issue {
    fn into_error(self) -> Error {
        match self {
            Issue::Row {
                path,
                line,
                message,
            } => Error::MalformedRow {
                path,
                line,
                message,
            },
            Issue::Manifest(m) => Error::Manifest(m),
        }
    }

    fn describe(&self) -> String {
        match self {
            Issue::Row {
                path,
                line,
                message,
            } => format!("{}:{line}: {message}", path.display()),
            Issue::Manifest(m) => format!("manifest: {m}"),
        }
    }
}

/// Read and check a replay file without failing fast.
pub fn validate_replay(csv_path: &Path, manifest_path: &Path) -> Result<ValidationReport> {
    parse(csv_path, manifest_path).map(|o| o.report)
}

struct Parsed {
    issues: Vec<Issue>,
}

struct Outcome {
    table: Option<ReplayTable>,
    report: ValidationReport,
    first_issue: Option<Issue>,
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))
}

fn parse(csv_path: &Path, manifest_path: &Path) -> Result<Outcome> {
    let manifest = read_manifest(manifest_path)?;
    let space = manifest.space.clone();
    let n = space.cardinality();
    let mut parsed = Parsed { issues: Vec::new() };

    if manifest.t_max == 0 {
        parsed
            .issues
            .push(Issue::Manifest("t_max must be >= 1".into()));
    }
    let mut id_to_index: HashMap<String, usize> = HashMap::new();
    let mut config_ids: Vec<Option<String>> = vec![None; n];
    for (id, named) in &manifest.configs {
        match space.resolve(named) {
            Ok(config) => {
                let idx = space.index_of(&config)?;
                if let Some(prev) = &config_ids[idx] {
                    parsed.issues.push(Issue::Manifest(format!(
                        "config_id `{id}` duplicates the levels of `{prev}`"
                    )));
                } else {
                    config_ids[idx] = Some(id.clone());
                }
                id_to_index.insert(id.clone(), idx);
            }
            Err(e) => parsed
                .issues
                .push(Issue::Manifest(format!("config_id `{id}`: {e}"))),
        }
    }
    for (idx, id) in config_ids.iter().enumerate() {
        if id.is_none() {
            let named = space.named(&space.config_at(idx)?)?;
            parsed
                .issues
                .push(Issue::Manifest(format!("no config_id maps to {named}")));
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(csv_path)?;
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != REPLAY_HEADER {
        parsed.issues.push(Issue::Row {
            path: csv_path.to_path_buf(),
            line: 1,
            message: format!("header must be exactly `{}`", REPLAY_HEADER.join(",")),
        });
    }

    let mut rows: HashMap<(usize, String), QueryOutcome> = HashMap::new();
    let mut queries: BTreeSet<String> = BTreeSet::new();
    let mut report = ValidationReport::default();
    let row_issue = |line: u64, message: String| Issue::Row {
        path: csv_path.to_path_buf(),
        line,
        message,
    };
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                parsed.issues.push(row_issue(line, e.to_string()));
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        report.rows += 1;
        if record.len() != 4 {
            parsed.issues.push(row_issue(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
            continue;
        }
        let (config_id, query_id) = (&record[0], &record[1]);
        let Some(&c) = id_to_index.get(config_id) else {
            parsed.issues.push(row_issue(
                line,
                format!("config_id `{config_id}` has no manifest entry"),
            ));
            continue;
        };
        let accuracy: f64 = match record[2].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                parsed.issues.push(row_issue(
                    line,
                    format!("accuracy `{}` is not a number", &record[2]),
                ));
                continue;
            }
        };
        if !(0.0..=1.0).contains(&accuracy) {
            parsed.issues.push(row_issue(
                line,
                format!("accuracy {accuracy} outside [0, 1]"),
            ));
            continue;
        }
        let mut tokens: u32 = match record[3].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                parsed.issues.push(row_issue(
                    line,
                    format!("tokens `{}` is not a non-negative integer", &record[3]),
                ));
                continue;
            }
        };
        if tokens > manifest.t_max {
            log::warn!(
                "{}:{line}: tokens {tokens} exceed t_max {}; clamping",
                csv_path.display(),
                manifest.t_max
            );
            report.clamped_tokens += 1;
            tokens = manifest.t_max;
        }
        if rows
            .insert(
                (c, query_id.to_string()),
                QueryOutcome::new(accuracy, tokens),
            )
            .is_some()
        {
            parsed.issues.push(row_issue(
                line,
                format!("duplicate pair ({config_id}, {query_id})"),
            ));
        } else {
            queries.insert(query_id.to_string());
        }
    }
    let queries: Vec<String> = queries.into_iter().collect();

    let mut missing = Vec::new();
    for (c, id) in config_ids.iter().enumerate() {
        let Some(id) = id else { continue };
        for q in &queries {
            if !rows.contains_key(&(c, q.clone())) {
                missing.push((id.clone(), q.clone()));
            }
        }
    }
    if queries.is_empty() {
        parsed
            .issues
            .push(Issue::Manifest("replay file has no rows".into()));
    }

    report.configs = manifest.configs.len();
    report.queries = queries.len();
    report.issues = parsed.issues.iter().map(Issue::describe).collect();
    report.missing = missing;

    if let Some(first) = parsed.issues.into_iter().next() {
        return Ok(Outcome {
            table: None,
            report,
            first_issue: Some(first),
        });
    }
    if !report.missing.is_empty() {
        return Ok(Outcome {
            table: None,
            report,
            first_issue: None,
        });
    }

    let nq = queries.len();
    let mut records = Vec::with_capacity(n * nq);
    for c in 0..n {
        for q in &queries {
            records.push(rows[&(c, q.clone())]);
        }
    }
    let profile = Profile {
        name: manifest.profile.clone(),
        t_max: manifest.t_max,
    };
    let table = ReplayTable {
        space,
        profile,
        queries,
        config_ids: config_ids
            .into_iter()
            .map(|id| id.expect("checked above"))
            .collect(),
        records,
    };
    Ok(Outcome {
        table: Some(table),
        report,
        first_issue: None,
    })
}
