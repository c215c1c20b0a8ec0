//! Timestamped context records and the visibility rule used at each step.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::clock::Timestamp;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContextError {
    #[error("record must begin before it ends (begins {begins_at}, ends {ends_at})")]
    EmptyInterval {
        begins_at: Timestamp,
        ends_at: Timestamp,
    },
    #[error("record recorded at {recorded_at} is not before its end {ends_at}")]
    RecordedAfterEnd {
        recorded_at: Timestamp,
        ends_at: Timestamp,
    },
    #[error("payload is missing a string \"text\" field")]
    MissingText,
}

/// A natural-language or structured event with a validity interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextRecord {
    #[serde(rename = "recorded_at_ns")]
    pub recorded_at: Timestamp,
    #[serde(rename = "begins_at_ns")]
    pub begins_at: Timestamp,
    #[serde(rename = "ends_at_ns")]
    pub ends_at: Timestamp,
    pub subsystem_id: u32,
    pub payload: Map<String, Value>,
}

impl ContextRecord {
    /// Builds a validated record with a text-only payload.
    pub fn new(
        recorded_at: Timestamp,
        begins_at: Timestamp,
        ends_at: Timestamp,
        subsystem_id: u32,
        text: impl Into<String>,
    ) -> Result<Self, ContextError> {
        let mut payload = Map::new();
        payload.insert("text".into(), Value::String(text.into()));
        Self::with_payload(recorded_at, begins_at, ends_at, subsystem_id, payload)
    }

    pub fn with_payload(
        recorded_at: Timestamp,
        begins_at: Timestamp,
        ends_at: Timestamp,
        subsystem_id: u32,
        payload: Map<String, Value>,
    ) -> Result<Self, ContextError> {
        let record = ContextRecord {
            recorded_at,
            begins_at,
            ends_at,
            subsystem_id,
            payload,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), ContextError> {
        if self.begins_at >= self.ends_at {
            return Err(ContextError::EmptyInterval {
                begins_at: self.begins_at,
                ends_at: self.ends_at,
            });
        }
        if self.recorded_at >= self.ends_at {
            return Err(ContextError::RecordedAfterEnd {
                recorded_at: self.recorded_at,
                ends_at: self.ends_at,
            });
        }
        if !matches!(self.payload.get("text"), Some(Value::String(_))) {
            return Err(ContextError::MissingText);
        }
        Ok(())
    }

    pub fn text(&self) -> &str {
        self.payload
            .get("text")
            .and_then(Value::as_str)
            .unwrap_or_default()
    }

    pub fn numeric(&self, key: &str) -> Option<f64> {
        self.payload.get(key).and_then(Value::as_f64)
    }

    pub fn insert_numeric(&mut self, key: &str, value: f64) {
        if let Some(n) = serde_json::Number::from_f64(value) {
            self.payload.insert(key.to_owned(), Value::Number(n));
        }
    }

    /// Visible at `now`: already recorded and not yet expired.
    pub fn is_visible_at(&self, now: Timestamp) -> bool {
        self.recorded_at <= now && self.ends_at > now
    }

    /// The record's interval covers `t`.
    pub fn is_active_at(&self, t: Timestamp) -> bool {
        self.begins_at <= t && t < self.ends_at
    }
}

/// Records visible at `now`, ordered by begin time, then record time, then
/// input order.
pub fn context_query(records: &[ContextRecord], now: Timestamp) -> Vec<ContextRecord> {
    let mut out: Vec<ContextRecord> = records
        .iter()
        .filter(|r| r.is_visible_at(now))
        .cloned()
        .collect();
    out.sort_by_key(|r| (r.begins_at, r.recorded_at));
    out
}

/// Sorts records into the canonical query order in place.
pub fn normalize_order(records: &mut [ContextRecord]) {
    records.sort_by_key(|r| (r.begins_at, r.recorded_at));
}
