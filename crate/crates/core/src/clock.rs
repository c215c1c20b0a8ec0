//! Integer simulation time.
//!
//! All time in the engine loop is carried as integer nanoseconds since the
//! UTC epoch. Floating-point seconds only appear at reporting boundaries.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NANOS_PER_SECOND: u64 = 1_000_000_000;
pub const SECONDS_PER_HOUR: u64 = 3_600;
pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClockError {
    #[error("tick resolution must be positive")]
    ZeroResolution,
    #[error("step must advance by at least one tick")]
    ZeroStep,
    #[error("clock overflow advancing {ns} ns by {step_ticks} ticks of {resolution_ns} ns")]
    Overflow {
        ns: u64,
        step_ticks: u64,
        resolution_ns: u64,
    },
    #[error("epoch seconds {0} not representable")]
    InvalidSeconds(f64),
}

/// A point in time, nanoseconds since the UTC epoch.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_secs(secs: u64) -> Self {
        Timestamp(secs * NANOS_PER_SECOND)
    }

    pub fn from_hours(hours: u64) -> Self {
        Timestamp::from_secs(hours * SECONDS_PER_HOUR)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / NANOS_PER_SECOND as f64
    }

    pub fn saturating_add_nanos(self, ns: u64) -> Self {
        Timestamp(self.0.saturating_add(ns))
    }

    pub fn checked_add_nanos(self, ns: u64) -> Option<Self> {
        self.0.checked_add(ns).map(Timestamp)
    }

    pub fn saturating_sub_nanos(self, ns: u64) -> Self {
        Timestamp(self.0.saturating_sub(ns))
    }

    /// Hour of the (UTC) day as a fraction in [0, 24).
    pub fn hour_of_day(self) -> f64 {
        let day_ns = SECONDS_PER_DAY * NANOS_PER_SECOND;
        (self.0 % day_ns) as f64 / (SECONDS_PER_HOUR * NANOS_PER_SECOND) as f64
    }

    /// Whole days since the epoch.
    pub fn day_index(self) -> u64 {
        self.0 / (SECONDS_PER_DAY * NANOS_PER_SECOND)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

/// Shared simulation clock.
///
/// Immutable: advancing returns a new value. The resolution fixes how many
/// nanoseconds one simulation tick spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Clock {
    ns_since_epoch: u64,
    resolution_ns: u64,
}

impl Default for Clock {
    fn default() -> Self {
        Clock {
            ns_since_epoch: 0,
            resolution_ns: Clock::DEFAULT_RESOLUTION_NS,
        }
    }
}

impl Clock {
    pub const DEFAULT_RESOLUTION_NS: u64 = NANOS_PER_SECOND;

    pub fn new(ns_since_epoch: u64, resolution_ns: u64) -> Result<Self, ClockError> {
        if resolution_ns == 0 {
            return Err(ClockError::ZeroResolution);
        }
        Ok(Clock {
            ns_since_epoch,
            resolution_ns,
        })
    }

    pub fn at(start: Timestamp) -> Self {
        Clock {
            ns_since_epoch: start.0,
            resolution_ns: Clock::DEFAULT_RESOLUTION_NS,
        }
    }

    /// Nearest representable clock for a float epoch-seconds value, rounded
    /// to the given resolution.
    pub fn from_epoch_seconds(secs: f64, resolution_ns: u64) -> Result<Self, ClockError> {
        if resolution_ns == 0 {
            return Err(ClockError::ZeroResolution);
        }
        if !secs.is_finite() || secs < 0.0 {
            return Err(ClockError::InvalidSeconds(secs));
        }
        let ticks = (secs * NANOS_PER_SECOND as f64 / resolution_ns as f64).round();
        if ticks >= u64::MAX as f64 {
            return Err(ClockError::InvalidSeconds(secs));
        }
        let ns = (ticks as u64)
            .checked_mul(resolution_ns)
            .ok_or(ClockError::InvalidSeconds(secs))?;
        Clock::new(ns, resolution_ns)
    }

    pub fn now(&self) -> Timestamp {
        Timestamp(self.ns_since_epoch)
    }

    pub fn ns_since_epoch(&self) -> u64 {
        self.ns_since_epoch
    }

    pub fn resolution_ns(&self) -> u64 {
        self.resolution_ns
    }

    pub fn as_epoch_seconds(&self) -> f64 {
        self.now().as_secs_f64()
    }

    pub fn ticks_to_nanos(&self, ticks: u64) -> Option<u64> {
        ticks.checked_mul(self.resolution_ns)
    }

    pub fn ticks_to_seconds(&self, ticks: u64) -> f64 {
        ticks as f64 * self.resolution_ns as f64 / NANOS_PER_SECOND as f64
    }

    /// Number of whole ticks in `seconds`, or `None` if it is not a multiple
    /// of the resolution.
    pub fn seconds_to_ticks(&self, seconds: u64) -> Option<u64> {
        let ns = seconds.checked_mul(NANOS_PER_SECOND)?;
        (ns % self.resolution_ns == 0).then(|| ns / self.resolution_ns)
    }

    pub fn advance(self, step_ticks: u64) -> Result<Self, ClockError> {
        if step_ticks == 0 {
            return Err(ClockError::ZeroStep);
        }
        let overflow = ClockError::Overflow {
            ns: self.ns_since_epoch,
            step_ticks,
            resolution_ns: self.resolution_ns,
        };
        let delta = self.ticks_to_nanos(step_ticks).ok_or(overflow.clone())?;
        let ns_since_epoch = self.ns_since_epoch.checked_add(delta).ok_or(overflow)?;
        Ok(Clock {
            ns_since_epoch,
            resolution_ns: self.resolution_ns,
        })
    }
}

/// The interval a component is asked to advance over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepSpan {
    pub start: Clock,
    pub step_ticks: u64,
    end: Clock,
}

impl StepSpan {
    pub fn new(start: Clock, step_ticks: u64) -> Result<Self, ClockError> {
        let end = start.advance(step_ticks)?;
        Ok(StepSpan {
            start,
            step_ticks,
            end,
        })
    }

    pub fn end(&self) -> Clock {
        self.end
    }

    pub fn duration_ns(&self) -> u64 {
        self.end.ns_since_epoch - self.start.ns_since_epoch
    }

    pub fn seconds(&self) -> f64 {
        self.duration_ns() as f64 / NANOS_PER_SECOND as f64
    }
}
