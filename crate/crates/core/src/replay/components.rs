use std::sync::Arc;

use super::table::{channel, TimeSeriesTable};
use super::ReplayError;
use crate::clock::{Clock, StepSpan, Timestamp, NANOS_PER_SECOND};
use crate::component::{Battery, ComponentResult, Context, Grid, Inverter, Load, PowerSource};
use crate::context::{context_query, normalize_order, ContextRecord};
use crate::records::{
    BatteryMode, BatteryStepInput, BatteryStepResult, GridStepInput, GridStepResult,
    InverterStepInput, InverterStepResult, LoadStepResult, PowerSourceStepResult,
};

pub const DEFAULT_BOUNDARY_TOLERANCE_SECONDS: u64 = 120;

/// Shared settings of every replay component.
#[derive(Debug, Clone)]
pub struct ReplayComponentConfig {
    /// 1 = workstation inverter, 2 = air-conditioner inverter.
    pub subsystem_id: u32,
    pub table: Arc<TimeSeriesTable>,
    pub boundary_tolerance_ns: u64,
}

impl ReplayComponentConfig {
    pub fn new(subsystem_id: u32, table: Arc<TimeSeriesTable>) -> Self {
        ReplayComponentConfig {
            subsystem_id,
            table,
            boundary_tolerance_ns: DEFAULT_BOUNDARY_TOLERANCE_SECONDS * NANOS_PER_SECOND,
        }
    }

    pub fn with_tolerance_seconds(mut self, seconds: u64) -> Self {
        self.boundary_tolerance_ns = seconds * NANOS_PER_SECOND;
        self
    }

    fn require(&self, names: &[&str]) -> Result<(), ReplayError> {
        for name in names {
            match self.table.channel(self.subsystem_id, name) {
                Some(ch) if !ch.is_empty() => {}
                _ => {
                    return Err(ReplayError::MissingChannel {
                        subsystem_id: self.subsystem_id,
                        channel: (*name).to_owned(),
                    })
                }
            }
        }
        Ok(())
    }

    fn at(&self, name: &str, t: Timestamp) -> Result<f64, ReplayError> {
        self.table
            .interpolate(self.subsystem_id, name, t, self.boundary_tolerance_ns)
    }
}

pub struct ReplayPowerSource {
    config: ReplayComponentConfig,
}

impl ReplayPowerSource {
    pub const CHANNELS: [&'static str; 3] = [channel::PV_VOLTAGE, channel::PV_CURRENT, channel::PV_POWER];

    pub fn new(config: ReplayComponentConfig) -> Result<Self, ReplayError> {
        config.require(&Self::CHANNELS)?;
        Ok(ReplayPowerSource { config })
    }

    pub fn sample_at(&self, t: Timestamp) -> Result<PowerSourceStepResult, ReplayError> {
        Ok(PowerSourceStepResult {
            voltage: self.config.at(channel::PV_VOLTAGE, t)?,
            current: self.config.at(channel::PV_CURRENT, t)?,
            power: self.config.at(channel::PV_POWER, t)?,
        })
    }
}

impl PowerSource for ReplayPowerSource {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<PowerSourceStepResult> {
        Ok(self.sample_at(span.end().now())?)
    }
}

pub struct ReplayLoad {
    config: ReplayComponentConfig,
}

impl ReplayLoad {
    pub const CHANNELS: [&'static str; 2] = [channel::LOAD_ACTIVE_POWER, channel::LOAD_APPARENT_POWER];

    pub fn new(config: ReplayComponentConfig) -> Result<Self, ReplayError> {
        config.require(&Self::CHANNELS)?;
        Ok(ReplayLoad { config })
    }

    pub fn sample_at(&self, t: Timestamp) -> Result<LoadStepResult, ReplayError> {
        Ok(LoadStepResult {
            requested_active_power: self.config.at(channel::LOAD_ACTIVE_POWER, t)?,
            requested_apparent_power: self.config.at(channel::LOAD_APPARENT_POWER, t)?,
        })
    }
}

impl Load for ReplayLoad {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<LoadStepResult> {
        Ok(self.sample_at(span.end().now())?)
    }
}

/// Reports recorded grid flows; the request is ignored and nothing is priced.
pub struct ReplayGrid {
    config: ReplayComponentConfig,
}

impl ReplayGrid {
    pub const CHANNELS: [&'static str; 2] = [channel::GRID_ACTIVE_POWER, channel::GRID_APPARENT_POWER];

    pub fn new(config: ReplayComponentConfig) -> Result<Self, ReplayError> {
        config.require(&Self::CHANNELS)?;
        Ok(ReplayGrid { config })
    }
}

impl Grid for ReplayGrid {
    fn step(&mut self, span: &StepSpan, _input: &GridStepInput) -> ComponentResult<GridStepResult> {
        let t = span.end().now();
        Ok(GridStepResult {
            delivered_active_power: self.config.at(channel::GRID_ACTIVE_POWER, t)?,
            delivered_apparent_power: self.config.at(channel::GRID_APPARENT_POWER, t)?,
            pricing: None,
        })
    }
}

/// Reports recorded SOC, voltage and current. The energy delta is the SOC
/// change over the step times the configured capacity.
pub struct ReplayBattery {
    config: ReplayComponentConfig,
    capacity: f64,
}

impl ReplayBattery {
    pub const CHANNELS: [&'static str; 3] = [
        channel::BATTERY_SOC,
        channel::BATTERY_VOLTAGE,
        channel::BATTERY_CURRENT,
    ];

    /// `capacity` in J.
    pub fn new(config: ReplayComponentConfig, capacity: f64) -> Result<Self, ReplayError> {
        config.require(&Self::CHANNELS)?;
        Ok(ReplayBattery { config, capacity })
    }

    fn soc_at(&self, t: Timestamp) -> Result<f64, ReplayError> {
        Ok(self.config.at(channel::BATTERY_SOC, t)? / 100.0)
    }

    fn result(&self, from: Timestamp, to: Timestamp) -> Result<BatteryStepResult, ReplayError> {
        let soc = self.soc_at(to)?;
        let voltage = self.config.at(channel::BATTERY_VOLTAGE, to)?;
        let current = self.config.at(channel::BATTERY_CURRENT, to)?.abs();
        let delta_energy = if from == to {
            0.0
        } else {
            (soc - self.soc_at(from)?) * self.capacity
        };
        let delta_charge = if voltage > 0.0 { delta_energy / voltage } else { 0.0 };
        Ok(BatteryStepResult {
            soc,
            voltage,
            current,
            delta_energy,
            delta_charge,
        })
    }
}

impl Battery for ReplayBattery {
    fn initial_result(&self, start: &Clock) -> ComponentResult<BatteryStepResult> {
        Ok(self.result(start.now(), start.now())?)
    }

    fn step(&mut self, span: &StepSpan, _input: &BatteryStepInput) -> ComponentResult<BatteryStepResult> {
        Ok(self.result(span.start.now(), span.end().now())?)
    }
}

/// Replays the recorded grid request and battery command.
pub struct ReplayInverter {
    config: ReplayComponentConfig,
}

impl ReplayInverter {
    pub const CHANNELS: [&'static str; 4] = [
        channel::GRID_ACTIVE_POWER,
        channel::GRID_APPARENT_POWER,
        channel::BATTERY_CURRENT,
        channel::PV_POWER,
    ];

    pub fn new(config: ReplayComponentConfig) -> Result<Self, ReplayError> {
        config.require(&Self::CHANNELS)?;
        Ok(ReplayInverter { config })
    }
}

impl Inverter for ReplayInverter {
    fn step(
        &mut self,
        span: &StepSpan,
        _input: &InverterStepInput<'_>,
    ) -> ComponentResult<InverterStepResult> {
        let t = span.end().now();
        let current = self.config.at(channel::BATTERY_CURRENT, t)?;
        let mode = if current > 0.0 {
            BatteryMode::Charge
        } else if current < 0.0 {
            BatteryMode::Discharge
        } else {
            BatteryMode::Idle
        };
        Ok(InverterStepResult {
            grid: GridStepInput {
                requested_active_power: self.config.at(channel::GRID_ACTIVE_POWER, t)?,
                requested_apparent_power: self.config.at(channel::GRID_APPARENT_POWER, t)?,
            },
            battery: BatteryStepInput {
                mode,
                current: current.abs(),
            },
            pv_power_drawn: self.config.at(channel::PV_POWER, t)?,
        })
    }
}

/// Serves pre-recorded context records by visibility at the step start.
pub struct ReplayContext {
    records: Vec<ContextRecord>,
    subsystem_id: Option<u32>,
}

impl ReplayContext {
    /// `subsystem_id` restricts the records to one inverter when set.
    pub fn new(mut records: Vec<ContextRecord>, subsystem_id: Option<u32>) -> Self {
        if let Some(id) = subsystem_id {
            records.retain(|r| r.subsystem_id == id);
        }
        normalize_order(&mut records);
        ReplayContext {
            records,
            subsystem_id,
        }
    }

    pub fn records(&self) -> &[ContextRecord] {
        &self.records
    }

    pub fn subsystem_id(&self) -> Option<u32> {
        self.subsystem_id
    }
}

impl Context for ReplayContext {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<Vec<ContextRecord>> {
        Ok(context_query(&self.records, span.start.now()))
    }
}
