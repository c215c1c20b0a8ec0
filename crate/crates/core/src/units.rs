//! Unit conventions and small numeric helpers.
//!
//! Internal quantities are SI: V, A, W, VA, J, s. kWh and Wh only appear
//! when pricing or reporting.

use thiserror::Error;

pub const JOULES_PER_WH: f64 = 3_600.0;
pub const JOULES_PER_KWH: f64 = 3.6e6;
/// Fixed AC voltage at the installation's grid and load contacts.
pub const AC_NOMINAL_VOLTAGE: f64 = 230.0;
pub const AC_NOMINAL_FREQUENCY: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("apparent power {apparent} VA is below active power {active} W")]
pub struct PowerDomainError {
    pub apparent: f64,
    pub active: f64,
}

/// Reactive power from apparent and active power, |S| = sqrt(P² + Q²).
pub fn reactive_power(apparent: f64, active: f64) -> Result<f64, PowerDomainError> {
    if !(apparent >= active && active >= 0.0) {
        return Err(PowerDomainError { apparent, active });
    }
    Ok(((apparent - active) * (apparent + active)).sqrt())
}

pub fn joules_to_wh(j: f64) -> f64 {
    j / JOULES_PER_WH
}

/// Neumaier-compensated running sum.
///
/// Summing the same sequence of addends always yields the same bits, so a
/// total and a re-summation of its recorded increments agree exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for v in iter {
            s.add(v);
        }
        s
    }
}
