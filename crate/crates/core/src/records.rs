//! Step input and result records exchanged between components.
//!
//! Sign convention: battery energy and charge deltas are positive when the
//! battery absorbs energy.

use serde::{Deserialize, Serialize};

use crate::context::ContextRecord;

/// Output of a DC power source at the end of a step.
///
/// `power` is carried independently of `voltage * current`; recorded data
/// disagrees with the product often enough that neither is derived.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PowerSourceStepResult {
    pub voltage: f64,
    pub current: f64,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridStepInput {
    pub requested_active_power: f64,
    pub requested_apparent_power: f64,
}

/// Cost and limit outcome reported by priced grids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridPricing {
    pub cost: f64,
    pub violation: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GridStepResult {
    pub delivered_active_power: f64,
    pub delivered_apparent_power: f64,
    /// Present only for grid models that price energy.
    pub pricing: Option<GridPricing>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadStepResult {
    pub requested_active_power: f64,
    pub requested_apparent_power: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BatteryMode {
    #[default]
    Idle,
    Charge,
    Discharge,
}

impl BatteryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BatteryMode::Idle => "IDLE",
            BatteryMode::Charge => "CHARGE",
            BatteryMode::Discharge => "DISCHARGE",
        }
    }
}

impl std::str::FromStr for BatteryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "IDLE" => Ok(BatteryMode::Idle),
            "CHARGE" => Ok(BatteryMode::Charge),
            "DISCHARGE" => Ok(BatteryMode::Discharge),
            other => Err(format!("unknown battery mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryStepInput {
    pub mode: BatteryMode,
    /// Magnitude in A; direction comes from `mode`.
    pub current: f64,
}

impl BatteryStepInput {
    pub const IDLE: BatteryStepInput = BatteryStepInput {
        mode: BatteryMode::Idle,
        current: 0.0,
    };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BatteryStepResult {
    pub soc: f64,
    pub voltage: f64,
    /// Current the battery was driven with, A (unsigned).
    pub current: f64,
    /// J, positive when absorbed.
    pub delta_energy: f64,
    /// C, same sign as `delta_energy`.
    pub delta_charge: f64,
}

/// Everything an inverter sees when deciding the next step.
#[derive(Debug, Clone, Copy)]
pub struct InverterStepInput<'a> {
    pub power_source: PowerSourceStepResult,
    pub battery: BatteryStepResult,
    pub grid: GridStepResult,
    pub load: LoadStepResult,
    /// Context records visible at the start of the step.
    pub context: &'a [ContextRecord],
    /// Grid-side power routed to battery charging, W.
    pub grid_to_battery_power: f64,
    /// Load-side ceiling on battery discharge, W. `None` means unlimited.
    pub battery_discharge_limit: Option<f64>,
}

impl<'a> InverterStepInput<'a> {
    pub fn new(
        power_source: PowerSourceStepResult,
        battery: BatteryStepResult,
        grid: GridStepResult,
        load: LoadStepResult,
    ) -> Self {
        InverterStepInput {
            power_source,
            battery,
            grid,
            load,
            context: &[],
            grid_to_battery_power: 0.0,
            battery_discharge_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InverterStepResult {
    pub grid: GridStepInput,
    pub battery: BatteryStepInput,
    /// PV power actually used, W. Never exceeds what the source offered.
    pub pv_power_drawn: f64,
}
