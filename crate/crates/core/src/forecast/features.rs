use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EffortEstimator, ForecastError};
use crate::clock::Timestamp;
use crate::context::ContextRecord;
use crate::models::{ABORTS_JOB_KEY, JOB_ID_KEY};

/// Numeric payload fields used by the `numeric` family, in layout order.
pub const NUMERIC_KEYS: [&str; 3] = ["cpu_cores", "file_count", "parameter_count"];

/// Payload key holding a precomputed effort; overrides the estimator.
pub const EFFORT_KEY: &str = "effort";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFamily {
    None,
    Numeric,
    Effort,
    Combined,
}

impl FeatureFamily {
    pub const ALL: [FeatureFamily; 4] = [
        FeatureFamily::None,
        FeatureFamily::Numeric,
        FeatureFamily::Effort,
        FeatureFamily::Combined,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureFamily::None => "none",
            FeatureFamily::Numeric => "numeric",
            FeatureFamily::Effort => "effort",
            FeatureFamily::Combined => "combined",
        }
    }

    /// Column names in layout order.
    pub fn layout(self) -> &'static [&'static str] {
        match self {
            FeatureFamily::None => &["intercept", "hour_sin", "hour_cos"],
            FeatureFamily::Numeric => &[
                "intercept",
                "cpu_cores",
                "cpu_cores_present",
                "file_count",
                "file_count_present",
                "parameter_count",
                "parameter_count_present",
            ],
            FeatureFamily::Effort => &["intercept", "effort"],
            FeatureFamily::Combined => &[
                "intercept",
                "cpu_cores",
                "cpu_cores_present",
                "file_count",
                "file_count_present",
                "parameter_count",
                "parameter_count_present",
                "effort",
            ],
        }
    }

    pub fn uses_context(self) -> bool {
        self != FeatureFamily::None
    }

    pub fn parse_list(s: &str) -> Result<Vec<FeatureFamily>, String> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl fmt::Display for FeatureFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureFamily {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown feature family {s:?} (expected none, numeric, effort or combined)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub family: FeatureFamily,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.family
            .layout()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }
}

/// Job records active at `target`, skipping abort notices and the jobs they
/// cancelled. Callers pass only records already visible at decision time.
pub fn active_jobs<'a>(records: &'a [ContextRecord], target: Timestamp) -> Vec<&'a ContextRecord> {
    let aborted: HashSet<u64> = records
        .iter()
        .filter(|r| r.begins_at <= target)
        .filter_map(|r| r.numeric(ABORTS_JOB_KEY))
        .map(|id| id as u64)
        .collect();
    records
        .iter()
        .filter(|r| r.is_active_at(target) && r.numeric(ABORTS_JOB_KEY).is_none())
        .filter(|r| {
            r.numeric(JOB_ID_KEY)
                .is_none_or(|id| !aborted.contains(&(id as u64)))
        })
        .collect()
}

/// Effort of one record: a precomputed payload value if present, else the
/// estimator on its text.
pub fn record_effort(record: &ContextRecord, estimator: &dyn EffortEstimator) -> Result<f64, ForecastError> {
    match record.numeric(EFFORT_KEY) {
        Some(e) => Ok(e),
        None => estimator.estimate(record.text()),
    }
}

/// Feature vector for load at `target` from `records` (already filtered to
/// what is visible at decision time).
pub fn build_features(
    records: &[ContextRecord],
    family: FeatureFamily,
    target: Timestamp,
    estimator: &dyn EffortEstimator,
) -> Result<FeatureVector, ForecastError> {
    let mut values = vec![1.0];
    if family == FeatureFamily::None {
        let phase = TAU * target.hour_of_day() / 24.0;
        values.extend([phase.sin(), phase.cos()]);
        return Ok(FeatureVector { family, values });
    }
    let active = active_jobs(records, target);
    if matches!(family, FeatureFamily::Numeric | FeatureFamily::Combined) {
        for key in NUMERIC_KEYS {
            let present: Vec<f64> = active.iter().filter_map(|r| r.numeric(key)).collect();
            values.push(present.iter().sum());
            values.push(if present.is_empty() { 0.0 } else { 1.0 });
        }
    }
    if matches!(family, FeatureFamily::Effort | FeatureFamily::Combined) {
        let mut effort = 0.0;
        for r in &active {
            effort += record_effort(r, estimator)?;
        }
        values.push(effort);
    }
    Ok(FeatureVector { family, values })
}
