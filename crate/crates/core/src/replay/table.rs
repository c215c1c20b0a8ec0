use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::ReplayError;
use crate::clock::Timestamp;

pub const TIMESERIES_HEADER: [&str; 4] = ["timestamp_ns", "subsystem_id", "channel", "value"];

/// Channels understood by the replay components.
pub mod channel {
    pub const BATTERY_VOLTAGE: &str = "battery_voltage";
    /// Signed, positive while charging.
    pub const BATTERY_CURRENT: &str = "battery_current";
    /// Percent.
    pub const BATTERY_SOC: &str = "battery_soc";
    /// Signed, positive while charging.
    pub const BATTERY_POWER: &str = "battery_power";
    pub const PV_VOLTAGE: &str = "pv_voltage";
    pub const PV_CURRENT: &str = "pv_current";
    pub const PV_POWER: &str = "pv_power";
    pub const LOAD_VOLTAGE: &str = "load_voltage";
    pub const LOAD_CURRENT: &str = "load_current";
    pub const LOAD_FREQUENCY: &str = "load_frequency";
    pub const LOAD_ACTIVE_POWER: &str = "load_active_power";
    pub const LOAD_APPARENT_POWER: &str = "load_apparent_power";
    pub const GRID_VOLTAGE: &str = "grid_voltage";
    pub const GRID_CURRENT: &str = "grid_current";
    pub const GRID_FREQUENCY: &str = "grid_frequency";
    pub const GRID_APPARENT_POWER: &str = "grid_apparent_power";
    pub const GRID_ACTIVE_POWER: &str = "grid_active_power";

    pub const CATALOG: [&str; 17] = [
        BATTERY_VOLTAGE,
        BATTERY_CURRENT,
        BATTERY_SOC,
        BATTERY_POWER,
        PV_VOLTAGE,
        PV_CURRENT,
        PV_POWER,
        LOAD_VOLTAGE,
        LOAD_CURRENT,
        LOAD_FREQUENCY,
        LOAD_ACTIVE_POWER,
        LOAD_APPARENT_POWER,
        GRID_VOLTAGE,
        GRID_CURRENT,
        GRID_FREQUENCY,
        GRID_APPARENT_POWER,
        GRID_ACTIVE_POWER,
    ];

    pub fn is_known(name: &str) -> bool {
        CATALOG.contains(&name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelKey {
    pub subsystem_id: u32,
    pub name: String,
}

impl ChannelKey {
    pub fn new(subsystem_id: u32, name: impl Into<String>) -> Self {
        ChannelKey {
            subsystem_id,
            name: name.into(),
        }
    }
}

impl std::fmt::Display for ChannelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.subsystem_id, self.name)
    }
}

/// Ordered samples of one measurement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Channel {
    times: Vec<Timestamp>,
    values: Vec<f64>,
}

impl Channel {
    pub fn from_samples(samples: impl IntoIterator<Item = (Timestamp, f64)>) -> Result<Self, ReplayError> {
        let mut ch = Channel::default();
        for (t, v) in samples {
            ch.push(t, v).map_err(|e| match e {
                PushError::NotIncreasing => ReplayError::NonMonotonic {
                    line: None,
                    channel: "<samples>".into(),
                    at: t,
                },
                PushError::NonFinite => ReplayError::NonFinite {
                    line: None,
                    channel: "<samples>".into(),
                },
            })?;
        }
        Ok(ch)
    }

    fn push(&mut self, t: Timestamp, v: f64) -> Result<(), PushError> {
        if !v.is_finite() {
            return Err(PushError::NonFinite);
        }
        if self.times.last().is_some_and(|last| *last >= t) {
            return Err(PushError::NotIncreasing);
        }
        self.times.push(t);
        self.values.push(v);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = (Timestamp, f64)> + '_ {
        self.times.iter().copied().zip(self.values.iter().copied())
    }

    pub fn first_time(&self) -> Option<Timestamp> {
        self.times.first().copied()
    }

    pub fn last_time(&self) -> Option<Timestamp> {
        self.times.last().copied()
    }

    /// Value at `t`: exact at knots, linear between them, clamped to the
    /// nearest endpoint within `tolerance_ns` outside the sampled range.
    pub fn interpolate(&self, t: Timestamp, tolerance_ns: u64) -> Result<f64, InterpolationError> {
        let (Some(first), Some(last)) = (self.first_time(), self.last_time()) else {
            return Err(InterpolationError::Empty);
        };
        if t < first {
            return if first.0 - t.0 <= tolerance_ns {
                Ok(self.values[0])
            } else {
                Err(InterpolationError::OutOfRange { first, last })
            };
        }
        if t > last {
            return if t.0 - last.0 <= tolerance_ns {
                Ok(*self.values.last().unwrap())
            } else {
                Err(InterpolationError::OutOfRange { first, last })
            };
        }
        let idx = self.times.partition_point(|s| *s < t);
        if self.times[idx] == t {
            return Ok(self.values[idx]);
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let (v0, v1) = (self.values[idx - 1], self.values[idx]);
        let w = (t.0 - t0.0) as f64 / (t1.0 - t0.0) as f64;
        Ok(v0 + (v1 - v0) * w)
    }
}

enum PushError {
    NotIncreasing,
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolationError {
    Empty,
    OutOfRange { first: Timestamp, last: Timestamp },
}

/// Recorded measurements keyed by (subsystem, channel name).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeriesTable {
    channels: BTreeMap<ChannelKey, Channel>,
}

impl TimeSeriesTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a sample; timestamps must strictly increase per channel.
    pub fn push(&mut self, key: ChannelKey, t: Timestamp, value: f64) -> Result<(), ReplayError> {
        let name = key.to_string();
        self.channels
            .entry(key)
            .or_default()
            .push(t, value)
            .map_err(|e| match e {
                PushError::NotIncreasing => ReplayError::NonMonotonic {
                    line: None,
                    channel: name,
                    at: t,
                },
                PushError::NonFinite => ReplayError::NonFinite {
                    line: None,
                    channel: name,
                },
            })
    }

    pub fn channel(&self, subsystem_id: u32, name: &str) -> Option<&Channel> {
        self.channels.get(&ChannelKey::new(subsystem_id, name))
    }

    pub fn channels(&self) -> impl Iterator<Item = (&ChannelKey, &Channel)> {
        self.channels.iter()
    }

    pub fn len(&self) -> usize {
        self.channels.values().map(Channel::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn interpolate(
        &self,
        subsystem_id: u32,
        name: &str,
        t: Timestamp,
        tolerance_ns: u64,
    ) -> Result<f64, ReplayError> {
        let ch = self
            .channel(subsystem_id, name)
            .ok_or_else(|| ReplayError::MissingChannel {
                subsystem_id,
                channel: name.to_owned(),
            })?;
        ch.interpolate(t, tolerance_ns).map_err(|e| match e {
            InterpolationError::Empty => ReplayError::MissingChannel {
                subsystem_id,
                channel: name.to_owned(),
            },
            InterpolationError::OutOfRange { first, last } => ReplayError::OutOfRange {
                channel: ChannelKey::new(subsystem_id, name).to_string(),
                at: t,
                first,
                last,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Reject unknown columns and channel names instead of skipping them.
    pub strict: bool,
}

/// Parsed table plus any non-fatal diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Ingested<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

pub fn read_timeseries<R: Read>(
    reader: R,
    options: IngestOptions,
) -> Result<Ingested<TimeSeriesTable>, ReplayError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ReplayError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut warnings = Vec::new();
    let mut idx = [usize::MAX; 4];
    let mut unknown = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        match TIMESERIES_HEADER.iter().position(|c| *c == h) {
            Some(p) => idx[p] = i,
            None => unknown.push(h.to_owned()),
        }
    }
    if let Some(p) = idx.iter().position(|i| *i == usize::MAX) {
        return Err(ReplayError::MissingColumn(TIMESERIES_HEADER[p].to_owned()));
    }
    if !unknown.is_empty() {
        if options.strict {
            return Err(ReplayError::UnknownColumns(unknown));
        }
        let msg = format!("ignoring unknown columns: {}", unknown.join(", "));
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut table = TimeSeriesTable::new();
    for record in rdr.records() {
        let record = record.map_err(|e| ReplayError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| record.get(idx[k]).unwrap_or("");
        let parse_err = |what: &str, raw: &str| ReplayError::Parse {
            line,
            message: format!("invalid {what} {raw:?}"),
        };
        let t: u64 = field(0).parse().map_err(|_| parse_err("timestamp_ns", field(0)))?;
        let sub: u32 = field(1).parse().map_err(|_| parse_err("subsystem_id", field(1)))?;
        let name = field(2);
        let value: f64 = field(3).parse().map_err(|_| parse_err("value", field(3)))?;
        if !channel::is_known(name) {
            if options.strict {
                return Err(ReplayError::UnknownChannel {
                    line,
                    channel: name.to_owned(),
                });
            }
            let msg = format!("line {line}: skipping unknown channel {name:?}");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        table
            .push(ChannelKey::new(sub, name), Timestamp(t), value)
            .map_err(|e| e.at_line(line))?;
    }
    Ok(Ingested {
        value: table,
        warnings,
    })
}

/// Writes the long-format CSV, time-major. Values use the shortest
/// representation that parses back to the same bits.
pub fn write_timeseries<W: Write>(table: &TimeSeriesTable, writer: W) -> Result<(), ReplayError> {
    let mut rows: Vec<(Timestamp, &ChannelKey, f64)> = table
        .channels()
        .flat_map(|(k, ch)| ch.samples().map(move |(t, v)| (t, k, v)))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TIMESERIES_HEADER)?;
    for (t, k, v) in rows {
        w.write_record([
            t.0.to_string(),
            k.subsystem_id.to_string(),
            k.name.clone(),
            v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
