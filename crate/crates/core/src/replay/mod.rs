//! Dataset-backed components and the text formats they are loaded from.
//!
//! Time series use a long CSV layout (`timestamp_ns,subsystem_id,channel,value`)
//! and context records use JSON Lines. Replay components return interpolated
//! recordings and ignore every input other than the step span.

mod components;
mod context_io;
mod table;

use thiserror::Error;

use crate::clock::Timestamp;
use crate::context::ContextError;

pub use components::{
    ReplayBattery, ReplayComponentConfig, ReplayContext, ReplayGrid, ReplayInverter, ReplayLoad,
    ReplayPowerSource, DEFAULT_BOUNDARY_TOLERANCE_SECONDS,
};
pub use context_io::{read_context, write_context};
pub use table::{
    channel, read_timeseries, write_timeseries, Channel, ChannelKey, IngestOptions, Ingested,
    InterpolationError, TimeSeriesTable, TIMESERIES_HEADER,
};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{}timestamps of {channel} not strictly increasing at {at}", line_prefix(*.line))]
    NonMonotonic {
        line: Option<u64>,
        channel: String,
        at: Timestamp,
    },
    #[error("{}non-finite value in {channel}", line_prefix(*.line))]
    NonFinite { line: Option<u64>, channel: String },
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("unknown columns: {}", .0.join(", "))]
    UnknownColumns(Vec<String>),
    #[error("line {line}: unknown channel {channel:?}")]
    UnknownChannel { line: u64, channel: String },
    #[error("subsystem {subsystem_id} has no samples for channel {channel:?}")]
    MissingChannel { subsystem_id: u32, channel: String },
    #[error("{channel}: query at {} ns outside recorded range [{}, {}] ns", .at.0, .first.0, .last.0)]
    OutOfRange {
        channel: String,
        at: Timestamp,
        first: Timestamp,
        last: Timestamp,
    },
    #[error("line {line}: invalid context record: {source}")]
    InvalidContext {
        line: u64,
        #[source]
        source: ContextError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn line_prefix(line: Option<u64>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

impl ReplayError {
    pub(crate) fn at_line(self, line: u64) -> Self {
        match self {
            ReplayError::NonMonotonic { channel, at, .. } => ReplayError::NonMonotonic {
                line: Some(line),
                channel,
                at,
            },
            ReplayError::NonFinite { channel, .. } => ReplayError::NonFinite {
                line: Some(line),
                channel,
            },
            other => other,
        }
    }
}
