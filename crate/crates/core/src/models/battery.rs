use serde::{Deserialize, Serialize};

use super::ModelConfigError;
use crate::clock::{Clock, StepSpan};
use crate::component::{Battery, ComponentResult};
use crate::records::{BatteryMode, BatteryStepInput, BatteryStepResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryLinearConfig {
    /// Usable capacity, J.
    pub capacity: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    /// V
    pub nominal_voltage: f64,
    pub initial_soc: f64,
}

impl Default for BatteryLinearConfig {
    fn default() -> Self {
        BatteryLinearConfig {
            capacity: 5_120.0 * 3_600.0,
            eta_charge: 0.95,
            eta_discharge: 0.95,
            nominal_voltage: 51.2,
            initial_soc: 0.5,
        }
    }
}

impl BatteryLinearConfig {
    pub fn validate(&self) -> Result<(), ModelConfigError> {
        let fraction_open = |v: f64| v > 0.0 && v <= 1.0;
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(ModelConfigError::new("battery capacity must be positive"));
        }
        if !fraction_open(self.eta_charge) || !fraction_open(self.eta_discharge) {
            return Err(ModelConfigError::new(
                "battery efficiencies must lie in (0, 1]",
            ));
        }
        if !(self.nominal_voltage > 0.0 && self.nominal_voltage.is_finite()) {
            return Err(ModelConfigError::new("nominal voltage must be positive"));
        }
        if !(0.0..=1.0).contains(&self.initial_soc) {
            return Err(ModelConfigError::new("initial SOC must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Linear energy-bucket battery with fixed nominal voltage.
///
/// Charging adds `dt * U_N * I * eta_charge`, discharging removes
/// `dt * U_N * I / eta_discharge`, and the stored energy is clamped to
/// `[0, capacity]`. Reported deltas are post-clamp.
#[derive(Debug, Clone)]
pub struct BatteryLinear {
    config: BatteryLinearConfig,
    energy: f64,
}

impl BatteryLinear {
    pub fn new(config: BatteryLinearConfig) -> Result<Self, ModelConfigError> {
        config.validate()?;
        Ok(BatteryLinear {
            energy: config.initial_soc * config.capacity,
            config,
        })
    }

    pub fn config(&self) -> &BatteryLinearConfig {
        &self.config
    }

    /// Stored energy, J.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn soc(&self) -> f64 {
        self.energy / self.config.capacity
    }

    pub fn set_energy(&mut self, energy: f64) {
        self.energy = energy.clamp(0.0, self.config.capacity);
    }

    /// Unclamped energy change for an input over `seconds`.
    pub fn raw_delta(&self, seconds: f64, input: &BatteryStepInput) -> f64 {
        let c = &self.config;
        match input.mode {
            BatteryMode::Idle => 0.0,
            BatteryMode::Charge => seconds * c.nominal_voltage * input.current * c.eta_charge,
            BatteryMode::Discharge => -seconds * c.nominal_voltage * input.current / c.eta_discharge,
        }
    }

    pub fn advance(&mut self, seconds: f64, input: &BatteryStepInput) -> BatteryStepResult {
        let before = self.energy;
        let raw = self.raw_delta(seconds, input);
        let after = (before + raw).clamp(0.0, self.config.capacity);
        self.energy = after;
        let delta_energy = after - before;
        BatteryStepResult {
            soc: after / self.config.capacity,
            voltage: self.config.nominal_voltage,
            current: input.current,
            delta_energy,
            delta_charge: delta_energy / self.config.nominal_voltage,
        }
    }
}

impl Battery for BatteryLinear {
    fn initial_result(&self, _start: &Clock) -> ComponentResult<BatteryStepResult> {
        Ok(BatteryStepResult {
            soc: self.soc(),
            voltage: self.config.nominal_voltage,
            current: 0.0,
            delta_energy: 0.0,
            delta_charge: 0.0,
        })
    }

    fn step(
        &mut self,
        span: &StepSpan,
        input: &BatteryStepInput,
    ) -> ComponentResult<BatteryStepResult> {
        if !(input.current >= 0.0 && input.current.is_finite()) {
            return Err(crate::component::ComponentError::Invalid(format!(
                "battery current must be a non-negative magnitude, got {}",
                input.current
            )));
        }
        Ok(self.advance(span.seconds(), input))
    }
}
