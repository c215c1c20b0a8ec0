//! Simulated component models.

mod battery;
mod grid;
mod inverter;
mod synthetic;

use thiserror::Error;

pub use battery::{BatteryLinear, BatteryLinearConfig};
pub use grid::{
    GridPriced, GridPricedConfig, PriceBreakpoint, PriceError, PriceSchedule, PriceTiers,
};
pub use inverter::{Allocation, InverterPvFirst, InverterPvFirstConfig};
pub use synthetic::{
    generate_jobs, JobEvent, JobGeneratorConfig, ScriptedContext, SyntheticLoad, SyntheticPv,
    SyntheticScenarioConfig, ABORTS_JOB_KEY, JOB_ID_KEY,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid model configuration: {0}")]
pub struct ModelConfigError(pub String);

impl ModelConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        ModelConfigError(msg.into())
    }
}
