use serde::{Deserialize, Serialize};

use super::ModelConfigError;
use crate::clock::StepSpan;
use crate::component::{ComponentError, ComponentResult, Inverter};
use crate::records::{
    BatteryMode, BatteryStepInput, GridStepInput, InverterStepInput, InverterStepResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InverterPvFirstConfig {
    pub eta_pv_to_batt: f64,
    pub eta_pv_to_load: f64,
    pub eta_batt_to_load: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Inverter self-consumption, W, added to AC-side demand.
    pub self_power: f64,
    /// Battery-side charge ceiling, W.
    pub max_charge_power: f64,
    /// Battery-side discharge ceiling, W.
    pub max_discharge_power: f64,
    /// Battery capacity in J. When known, charge and discharge are capped so
    /// one step cannot cross the SOC limits.
    pub battery_capacity: Option<f64>,
}

impl Default for InverterPvFirstConfig {
    fn default() -> Self {
        InverterPvFirstConfig {
            eta_pv_to_batt: 1.0,
            eta_pv_to_load: 1.0,
            eta_batt_to_load: 1.0,
            soc_min: 0.1,
            soc_max: 0.95,
            self_power: 0.0,
            max_charge_power: f64::INFINITY,
            max_discharge_power: f64::INFINITY,
            battery_capacity: None,
        }
    }
}

impl InverterPvFirstConfig {
    pub fn validate(&self) -> Result<(), ModelConfigError> {
        let eff = |v: f64| v > 0.0 && v <= 1.0;
        if !(eff(self.eta_pv_to_batt) && eff(self.eta_pv_to_load) && eff(self.eta_batt_to_load)) {
            return Err(ModelConfigError::new(
                "inverter efficiencies must lie in (0, 1]",
            ));
        }
        if !(0.0 <= self.soc_min && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(ModelConfigError::new(
                "inverter SOC limits must satisfy 0 <= soc_min < soc_max <= 1",
            ));
        }
        if !(self.self_power >= 0.0 && self.self_power.is_finite()) {
            return Err(ModelConfigError::new("self power must be non-negative"));
        }
        if !(self.max_charge_power > 0.0 && self.max_discharge_power > 0.0) {
            return Err(ModelConfigError::new("power caps must be positive"));
        }
        if let Some(c) = self.battery_capacity {
            if !(c > 0.0 && c.is_finite()) {
                return Err(ModelConfigError::new("battery capacity must be positive"));
            }
        }
        Ok(())
    }
}

/// Power split computed by [`InverterPvFirst::allocate`], all in W.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Allocation {
    /// PV power feeding the AC side (PV-side value).
    pub pv_to_load: f64,
    /// PV power feeding the battery (PV-side value).
    pub pv_to_battery: f64,
    /// Battery-side charge power, from PV surplus and grid.
    pub battery_charge: f64,
    /// Battery-side discharge power.
    pub battery_discharge: f64,
    /// Grid power routed into the battery.
    pub grid_to_battery: f64,
    /// AC demand left for the grid.
    pub grid_to_load: f64,
}

/// Priority dispatch: PV first, then the battery, then the grid.
///
/// Only PV surplus charges the battery unless a grid-to-battery power is
/// supplied in the input, which also suppresses discharge for that step.
#[derive(Debug, Clone)]
pub struct InverterPvFirst {
    config: InverterPvFirstConfig,
}

impl InverterPvFirst {
    pub fn new(config: InverterPvFirstConfig) -> Result<Self, ModelConfigError> {
        config.validate()?;
        Ok(InverterPvFirst { config })
    }

    pub fn config(&self) -> &InverterPvFirstConfig {
        &self.config
    }

    pub fn allocate(&self, seconds: f64, input: &InverterStepInput<'_>) -> Allocation {
        let c = &self.config;
        let pv = input.power_source.power.max(0.0);
        let soc = input.battery.soc;
        let demand = input.load.requested_active_power + c.self_power;

        let (charge_room, discharge_room) = match c.battery_capacity {
            Some(cap) if seconds > 0.0 => (
                ((c.soc_max - soc) * cap / seconds).max(0.0),
                ((soc - c.soc_min) * cap / seconds).max(0.0),
            ),
            _ => (f64::INFINITY, f64::INFINITY),
        };
        let charge_cap = c.max_charge_power.min(charge_room);

        let mut a = Allocation::default();

        // 1. PV covers demand.
        a.pv_to_load = pv.min(demand / c.eta_pv_to_load);
        let mut deficit = (demand - a.pv_to_load * c.eta_pv_to_load).max(0.0);
        let surplus = pv - a.pv_to_load;

        // 2. PV surplus charges the battery below soc_max.
        if surplus > 0.0 && soc < c.soc_max {
            a.battery_charge = (surplus * c.eta_pv_to_batt).min(charge_cap);
            a.pv_to_battery = a.battery_charge / c.eta_pv_to_batt;
        }

        let wants_grid_charge = input.grid_to_battery_power > 0.0;
        if wants_grid_charge && soc < c.soc_max {
            a.grid_to_battery = input
                .grid_to_battery_power
                .min(charge_cap - a.battery_charge)
                .max(0.0);
            a.battery_charge += a.grid_to_battery;
        }

        // 3. Battery covers the deficit above soc_min, unless charging from grid.
        if deficit > 0.0 && !wants_grid_charge && a.battery_charge == 0.0 && soc > c.soc_min {
            let mut load_side = deficit;
            if let Some(limit) = input.battery_discharge_limit {
                load_side = load_side.min(limit.max(0.0));
            }
            a.battery_discharge = (load_side / c.eta_batt_to_load)
                .min(c.max_discharge_power)
                .min(discharge_room);
            deficit = (deficit - a.battery_discharge * c.eta_batt_to_load).max(0.0);
        }

        // 4. Grid takes the rest.
        a.grid_to_load = deficit;
        a
    }

    pub fn dispatch(
        &self,
        seconds: f64,
        input: &InverterStepInput<'_>,
    ) -> ComponentResult<InverterStepResult> {
        let a = self.allocate(seconds, input);
        let voltage = input.battery.voltage;
        let battery = if a.battery_charge > 0.0 || a.battery_discharge > 0.0 {
            if !(voltage > 0.0) {
                return Err(ComponentError::Invalid(format!(
                    "battery voltage must be positive to command current, got {voltage}"
                )));
            }
            if a.battery_charge > 0.0 {
                BatteryStepInput {
                    mode: BatteryMode::Charge,
                    current: a.battery_charge / voltage,
                }
            } else {
                BatteryStepInput {
                    mode: BatteryMode::Discharge,
                    current: a.battery_discharge / voltage,
                }
            }
        } else {
            BatteryStepInput::IDLE
        };
        let active = a.grid_to_load + a.grid_to_battery;
        let demand = input.load.requested_active_power + self.config.self_power;
        let local = demand - a.grid_to_load;
        let apparent = (input.load.requested_apparent_power + self.config.self_power - local
            + a.grid_to_battery)
            .max(active);
        Ok(InverterStepResult {
            grid: GridStepInput {
                requested_active_power: active,
                requested_apparent_power: apparent,
            },
            battery,
            pv_power_drawn: a.pv_to_load + a.pv_to_battery,
        })
    }
}

impl Inverter for InverterPvFirst {
    fn step(
        &mut self,
        span: &StepSpan,
        input: &InverterStepInput<'_>,
    ) -> ComponentResult<InverterStepResult> {
        self.dispatch(span.seconds(), input)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{BatteryStepResult, GridStepResult, LoadStepResult, PowerSourceStepResult};

    fn unit() -> InverterPvFirst {
        InverterPvFirst::new(InverterPvFirstConfig {
            soc_min: 0.1,
            soc_max: 0.9,
            ..Default::default()
        })
        .unwrap()
    }

    fn input(pv: f64, load: f64, soc: f64) -> InverterStepInput<'static> {
        InverterStepInput::new(
            PowerSourceStepResult { voltage: 300.0, current: pv / 300.0, power: pv },
            BatteryStepResult { soc, voltage: 50.0, ..Default::default() },
            GridStepResult::default(),
            LoadStepResult { requested_active_power: load, requested_apparent_power: load },
        )
    }

    #[test]
    fn exact_balance() {
        let r = unit().dispatch(120.0, &input(300.0, 300.0, 0.5)).unwrap();
        assert_eq!(r.grid.requested_active_power, 0.0);
        assert_eq!(r.battery, BatteryStepInput::IDLE);
        assert_eq!(r.pv_power_drawn, 300.0);
    }

    #[test]
    fn surplus_charges_battery() {
        let r = unit().dispatch(120.0, &input(500.0, 300.0, 0.5)).unwrap();
        assert_eq!(r.battery.mode, BatteryMode::Charge);
        assert_eq!(r.battery.current * 50.0, 200.0);
        assert_eq!(r.grid.requested_active_power, 0.0);
        assert_eq!(r.pv_power_drawn, 500.0);
    }

    #[test]
    fn full_battery_curtails_pv() {
        let r = unit().dispatch(120.0, &input(500.0, 300.0, 0.9)).unwrap();
        assert_eq!(r.battery, BatteryStepInput::IDLE);
        assert_eq!(r.pv_power_drawn, 300.0);
    }

    #[test]
    fn empty_battery_falls_to_grid() {
        let r = unit().dispatch(120.0, &input(0.0, 400.0, 0.1)).unwrap();
        assert_eq!(r.grid.requested_active_power, 400.0);
        assert_eq!(r.battery, BatteryStepInput::IDLE);
    }

    #[test]
    fn discharge_divides_by_efficiency() {
        let inv = InverterPvFirst::new(InverterPvFirstConfig {
            eta_batt_to_load: 0.9,
            ..Default::default()
        })
        .unwrap();
        let r = inv.dispatch(120.0, &input(0.0, 180.0, 0.5)).unwrap();
        assert_eq!(r.battery.mode, BatteryMode::Discharge);
        assert!((r.battery.current * 50.0 - 200.0).abs() < 1e-9);
        assert!(r.grid.requested_active_power.abs() < 1e-9);
    }

    #[test]
    fn grid_to_battery_path() {
        let mut i = input(0.0, 0.0, 0.5);
        i.grid_to_battery_power = 300.0;
        let r = unit().dispatch(120.0, &i).unwrap();
        assert_eq!(r.grid.requested_active_power, 300.0);
        assert_eq!(r.battery.mode, BatteryMode::Charge);
        assert_eq!(r.battery.current * 50.0, 300.0);
    }

    #[test]
    fn grid_to_battery_suppresses_discharge() {
        let mut i = input(0.0, 400.0, 0.5);
        i.grid_to_battery_power = 100.0;
        let r = unit().dispatch(120.0, &i).unwrap();
        assert_eq!(r.battery.mode, BatteryMode::Charge);
        assert_eq!(r.grid.requested_active_power, 500.0);
    }

    #[test]
    fn discharge_limit_shares_deficit_with_grid() {
        let mut i = input(100.0, 500.0, 0.5);
        i.battery_discharge_limit = Some(150.0);
        let r = unit().dispatch(120.0, &i).unwrap();
        assert_eq!(r.battery.mode, BatteryMode::Discharge);
        assert_eq!(r.battery.current * 50.0, 150.0);
        assert_eq!(r.grid.requested_active_power, 250.0);
    }

    #[test]
    fn capacity_caps_charge_at_soc_max() {
        let inv = InverterPvFirst::new(InverterPvFirstConfig {
            soc_max: 0.9,
            battery_capacity: Some(3.6e6),
            ..Default::default()
        })
        .unwrap();
        // 0.05 * 3.6e6 J over 3600 s = 50 W of room
        let r = inv.dispatch(3600.0, &input(1000.0, 0.0, 0.85)).unwrap();
        assert!((r.battery.current * 50.0 - 50.0).abs() < 1e-9);
        assert!((r.pv_power_drawn - 50.0).abs() < 1e-9);
    }

    #[test]
    fn self_power_adds_to_demand() {
        let inv = InverterPvFirst::new(InverterPvFirstConfig {
            self_power: 20.0,
            soc_min: 0.5,
            ..Default::default()
        })
        .unwrap();
        let r = inv.dispatch(60.0, &input(100.0, 100.0, 0.5)).unwrap();
        assert_eq!(r.grid.requested_active_power, 20.0);
        assert_eq!(r.pv_power_drawn, 100.0);
    }

    #[test]
    fn config_validation() {
        let bad = InverterPvFirstConfig { soc_min: 0.9, soc_max: 0.5, ..Default::default() };
        assert!(InverterPvFirst::new(bad).is_err());
        let bad = InverterPvFirstConfig { eta_pv_to_load: 1.5, ..Default::default() };
        assert!(InverterPvFirst::new(bad).is_err());
    }
}
