//! Client for a live evaluation endpoint.
//!
//! Request body: `{"config": {dimension: level, ...}, "batch_size": n}`.
//! Response body: `{"outcomes": [{"accuracy": a, "tokens": t}, ...]}`.

use std::sync::Mutex;
use std::time::Duration;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::Environment;
use crate::error::{Error, Result};
use crate::reward::QueryOutcome;
use crate::space::{Config, HyperParamSpace, NamedConfig};

const EXCERPT_LEN: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemoteOptions {
    pub url: String,
    pub timeout_ms: u64,
    /// Extra attempts after a retryable failure.
    pub retries: u32,
    pub backoff_ms: u64,
}

impl Default for RemoteOptions {
    fn default() -> Self {
        RemoteOptions {
            url: String::new(),
            timeout_ms: 30_000,
            retries: 3,
            backoff_ms: 200,
        }
    }
}

#[derive(Serialize)]
struct EvalRequest<'a> {
    config: &'a NamedConfig,
    batch_size: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalResponse {
    outcomes: Vec<QueryOutcome>,
}

pub struct RemoteEnv {
    name: String,
    space: HyperParamSpace,
    t_max: u32,
    options: RemoteOptions,
    agent: Mutex<ureq::Agent>,
}

impl std::fmt::Debug for RemoteEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEnv")
            .field("name", &self.name)
            .field("url", &self.options.url)
            .finish_non_exhaustive()
    }
}

fn excerpt(body: &str) -> String {
    let mut end = body.len().min(EXCERPT_LEN);
    while !body.is_char_boundary(end) {
        end -= 1;
    }
    body[..end].to_string()
}

impl RemoteEnv {
    pub fn new(space: HyperParamSpace, t_max: u32, options: RemoteOptions) -> Result<Self> {
        if options.url.is_empty() {
            return Err(Error::InvalidConfig("remote endpoint url is empty".into()));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(options.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(RemoteEnv {
            name: format!("remote:{}", options.url),
            space,
            t_max,
            options,
            agent: Mutex::new(agent),
        })
    }

    /// One request, no retries.
    fn request_once(
        &self,
        agent: &ureq::Agent,
        body: &[u8],
        batch_size: usize,
    ) -> Result<Vec<QueryOutcome>> {
        let transport = |e: ureq::Error| Error::Transport(format!("{}: {e}", self.options.url));
        let mut response = agent
            .post(&self.options.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(transport)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(transport)?;
        if status >= 500 {
            return Err(Error::Transport(format!(
                "{}: status {status}",
                self.options.url
            )));
        }
        if status >= 300 {
            return Err(Error::Rejected {
                status,
                excerpt: excerpt(&text),
            });
        }
        let schema = |message: String| Error::Schema {
            message,
            excerpt: excerpt(&text),
        };
        let parsed: EvalResponse =
            serde_json::from_str(&text).map_err(|e| schema(e.to_string()))?;
        if parsed.outcomes.len() != batch_size {
            return Err(schema(format!(
                "expected {batch_size} outcomes, got {}",
                parsed.outcomes.len()
            )));
        }
        for o in &parsed.outcomes {
            o.validate().map_err(|e| schema(e.to_string()))?;
            if o.tokens > self.t_max {
                log::warn!("remote tokens {} exceed t_max {}", o.tokens, self.t_max);
            }
        }
        Ok(parsed.outcomes)
    }

    pub fn evaluate_named(
        &self,
        named: &NamedConfig,
        batch_size: usize,
    ) -> Result<Vec<QueryOutcome>> {
        let body = serde_json::to_vec(&EvalRequest {
            config: named,
            batch_size,
        })?;
        let agent = self.agent.lock().unwrap_or_else(|p| p.into_inner());
        let mut attempt = 0;
        loop {
            match self.request_once(&agent, &body, batch_size) {
                Err(e) if e.is_retryable() && attempt < self.options.retries => {
                    attempt += 1;
                    log::warn!("attempt {attempt} failed, retrying: {e}");
                    std::thread::sleep(Duration::from_millis(
                        self.options.backoff_ms * attempt as u64,
                    ));
                }
                other => return other,
            }
        }
    }
}

impl Environment for RemoteEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &HyperParamSpace {
        &self.space
    }

    fn t_max(&self) -> u32 {
        self.t_max
    }

    fn evaluate(
        &self,
        config: &Config,
        batch_size: usize,
        _rng: &mut dyn RngCore,
    ) -> Result<Vec<QueryOutcome>> {
        let named = self.space.named(config)?;
        self.evaluate_named(&named, batch_size)
    }
}
