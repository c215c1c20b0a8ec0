use std::collections::HashMap;
use std::sync::{LazyLock, Mutex};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::ForecastError;

/// Keyword classes and their additive weights. Each class counts once.
static KEYWORDS: LazyLock<Vec<(Regex, f64)>> = LazyLock::new(|| {
    [
        (r"cpu[\s-]?intensive", 2.0),
        (r"\bgpu\b", 3.0),
        (r"multi[\s-]?core", 1.0),
        (r"\b(compil\w*|build\w*)", 1.0),
    ]
    .into_iter()
    .map(|(p, w)| (Regex::new(&format!("(?i){p}")).expect("static pattern"), w))
    .collect()
});

static DURATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(\d+(?:\.\d+)?)\s*h(?:ours?|rs?)?\b").expect("static pattern"));

/// Keyword score of a job description.
///
/// | class                | weight |
/// |----------------------|--------|
/// | `cpu-intensive`      | +2     |
/// | `gpu`                | +3     |
/// | `multi-core`         | +1     |
/// | `compile*`/`build*`  | +1     |
///
/// The base is 1. A duration such as `48h` scales the sum by hours/24.
pub fn estimate_effort_heuristic(text: &str) -> f64 {
    let score: f64 = 1.0
        + KEYWORDS
            .iter()
            .filter(|(re, _)| re.is_match(text))
            .map(|(_, w)| w)
            .sum::<f64>();
    let multiplier = DURATION
        .captures(text)
        .and_then(|c| c[1].parse::<f64>().ok())
        .filter(|h| h.is_finite())
        .map_or(1.0, |h| h / 24.0);
    (score * multiplier).max(0.0)
}

/// Maps a job description to a dimensionless effort.
pub trait EffortEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> Result<f64, ForecastError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicEstimator;

impl EffortEstimator for HeuristicEstimator {
    fn estimate(&self, text: &str) -> Result<f64, ForecastError> {
        Ok(estimate_effort_heuristic(text))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteEstimatorConfig {
    /// Full URL receiving `{"text": ...}` and answering `{"effort": x}`.
    pub endpoint: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_timeout_ms() -> u64 {
    5_000
}

#[derive(Serialize)]
struct EffortRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EffortResponse {
    effort: f64,
}

/// HTTP JSON estimator. Errors are returned as-is; there is no fallback.
pub struct RemoteEstimator {
    config: RemoteEstimatorConfig,
    agent: ureq::Agent,
}

impl RemoteEstimator {
    pub fn new(config: RemoteEstimatorConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(true)
            .build()
            .new_agent();
        RemoteEstimator { config, agent }
    }

    pub fn config(&self) -> &RemoteEstimatorConfig {
        &self.config
    }
}

impl EffortEstimator for RemoteEstimator {
    fn estimate(&self, text: &str) -> Result<f64, ForecastError> {
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .header("content-type", "application/json")
            .send(serde_json::to_string(&EffortRequest { text }).expect("request serializes"))
            .map_err(|e| ForecastError::Remote(e.to_string()))?;
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| ForecastError::Remote(e.to_string()))?;
        let parsed: EffortResponse = serde_json::from_str(&body)
            .map_err(|e| ForecastError::RemoteResponse(format!("{e}: {body:?}")))?;
        if !(parsed.effort.is_finite() && parsed.effort >= 0.0) {
            return Err(ForecastError::RemoteResponse(format!(
                "effort must be finite and non-negative, got {}",
                parsed.effort
            )));
        }
        Ok(parsed.effort)
    }
}

/// Memoizes another estimator by exact text.
pub struct CachedEstimator<E> {
    inner: E,
    cache: Mutex<HashMap<String, f64>>,
}

impl<E: EffortEstimator> CachedEstimator<E> {
    pub fn new(inner: E) -> Self {
        CachedEstimator {
            inner,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl<E: EffortEstimator> EffortEstimator for CachedEstimator<E> {
    fn estimate(&self, text: &str) -> Result<f64, ForecastError> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(text) {
            return Ok(*v);
        }
        let v = self.inner.estimate(text)?;
        self.cache.lock().expect("cache lock").insert(text.to_owned(), v);
        Ok(v)
    }
}
