use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::{FewShot, SubgoalPlan, SubgoalRequest};
use crate::core::{GoalId, SubgoalSource};
use crate::{Error, Result};

/// JSON body posted to the endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WireRequest<'a> {
    pub goal_text: &'a str,
    pub context: Option<&'a str>,
    pub few_shot: &'a [FewShot],
}

/// Extracts the items of a numbered list (`1. foo`, `2) bar`), ignoring any
/// other lines.
pub fn parse_numbered_lines(body: &str) -> Result<Vec<String>> {
    static LINE: OnceLock<Regex> = OnceLock::new();
    let re = LINE.get_or_init(|| Regex::new(r"^\d+[.)] (.+)$").unwrap());
    let items: Vec<String> = body
        .lines()
        .filter_map(|l| re.captures(l.trim()).map(|c| c[1].trim().to_string()))
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::MalformedPlan(if body.trim().is_empty() {
            "empty response body".into()
        } else {
            "no numbered lines in response".into()
        }));
    }
    Ok(items)
}

/// HTTP client for a text model that answers with a numbered list of
/// subgoals. Plans are memoized per goal and prompt.
pub struct RemoteGenerator {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
    cache: Mutex<HashMap<(GoalId, String), Vec<String>>>,
}

impl RemoteGenerator {
    pub fn new(endpoint: impl Into<String>, timeout_ms: u64) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(timeout_ms)))
            .build()
            .into();
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            agent,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Sends `Authorization: Bearer <key>` with every request.
    pub fn with_api_key(mut self, key: impl Into<String>) -> Self {
        self.api_key = Some(key.into());
        self
    }

    /// Reads the key from the environment variable `var`, if set.
    pub fn with_api_key_from_env(self, var: &str) -> Self {
        match std::env::var(var) {
            Ok(key) if !key.is_empty() => self.with_api_key(key),
            _ => self,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn generate(&self, req: &SubgoalRequest) -> Result<SubgoalPlan> {
        let wire = WireRequest {
            goal_text: &req.goal.text,
            context: req.context.as_deref(),
            few_shot: &req.examples,
        };
        let body = serde_json::to_string(&wire)?;
        let key = (req.goal.id, hex::encode(Sha256::digest(body.as_bytes())));

        let mut cache = self.cache.lock().expect("cache lock");
        if let Some(texts) = cache.get(&key) {
            let mut plan = SubgoalPlan::from_texts(&req.goal, texts, SubgoalSource::Remote);
            plan.cached = true;
            return Ok(plan);
        }
        let texts = parse_numbered_lines(&self.post(&body)?)?;
        let plan = SubgoalPlan::from_texts(&req.goal, &texts, SubgoalSource::Remote);
        cache.insert(key, texts);
        Ok(plan)
    }

    fn post(&self, body: &str) -> Result<String> {
        let mut request = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(transport_error)?;
        response.body_mut().read_to_string().map_err(transport_error)
    }
}

fn transport_error(e: ureq::Error) -> Error {
    match e {
        ureq::Error::Timeout(_) => Error::GeneratorTimeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => Error::GeneratorTimeout,
        other => Error::GeneratorTransport(other.to_string()),
    }
}
