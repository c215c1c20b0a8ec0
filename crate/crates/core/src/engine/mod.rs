//! The simulator: one instance of each component, a shared clock, and
//! running energy aggregates and maxima.
//!
//! Per step the components are called in a fixed order: context, power
//! source, load, inverter, battery, grid. The inverter sees this step's PV
//! and load results together with the battery and grid results of the
//! previous step.

mod sink;

use serde::Serialize;
use thiserror::Error;

use crate::clock::{Clock, ClockError, StepSpan, Timestamp};
use crate::component::{
    Battery, ComponentError, ComponentKind, Context, Grid, Inverter, Load, PowerSource,
};
use crate::context::ContextRecord;
use crate::records::{
    BatteryStepResult, GridStepResult, InverterStepInput, InverterStepResult, LoadStepResult,
    PowerSourceStepResult,
};
use crate::units::{joules_to_wh, CompensatedSum, AC_NOMINAL_VOLTAGE};

pub use sink::{ChannelRecorder, CsvStepSink, SinkError, StepSink, STEP_CSV_HEADER};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("{component} failed at step {step}: {source}")]
    Component {
        component: ComponentKind,
        step: u64,
        #[source]
        source: ComponentError,
    },
    #[error("clock error at step {step}: {source}")]
    Clock {
        step: u64,
        #[source]
        source: ClockError,
    },
    #[error("output sink failed at step {step}: {source}")]
    Sink {
        step: u64,
        #[source]
        source: SinkError,
    },
}

/// The six components a simulator drives.
pub struct Components {
    pub power_source: Box<dyn PowerSource>,
    pub load: Box<dyn Load>,
    pub inverter: Box<dyn Inverter>,
    pub battery: Box<dyn Battery>,
    pub grid: Box<dyn Grid>,
    pub context: Option<Box<dyn Context>>,
}

/// Optional per-step arguments forwarded to the inverter.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepExtras {
    pub grid_to_battery_power: f64,
    pub battery_discharge_limit: Option<f64>,
}

/// Energy moved during one step, Wh.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StepEnergies {
    pub generated_wh: f64,
    pub charged_wh: f64,
    pub discharged_wh: f64,
    pub consumed_wh: f64,
    pub purchased_wh: f64,
    pub cost: f64,
}

/// Cumulative totals since the start of the run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Aggregates {
    pub generated_wh: f64,
    pub charged_wh: f64,
    pub discharged_wh: f64,
    pub consumed_wh: f64,
    pub purchased_wh: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct AggregateSums {
    generated: CompensatedSum,
    charged: CompensatedSum,
    discharged: CompensatedSum,
    consumed: CompensatedSum,
    purchased: CompensatedSum,
    cost: CompensatedSum,
}

impl AggregateSums {
    fn add(&mut self, e: &StepEnergies) {
        self.generated.add(e.generated_wh);
        self.charged.add(e.charged_wh);
        self.discharged.add(e.discharged_wh);
        self.consumed.add(e.consumed_wh);
        self.purchased.add(e.purchased_wh);
        self.cost.add(e.cost);
    }

    fn snapshot(&self) -> Aggregates {
        Aggregates {
            generated_wh: self.generated.value(),
            charged_wh: self.charged.value(),
            discharged_wh: self.discharged.value(),
            consumed_wh: self.consumed.value(),
            purchased_wh: self.purchased.value(),
            cost: self.cost.value(),
        }
    }
}

/// Running maxima per contact. AC currents are apparent power over the
/// nominal voltage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Maxima {
    pub pv_voltage: f64,
    pub pv_current: f64,
    pub battery_voltage: f64,
    pub battery_current: f64,
    pub load_current: f64,
    pub grid_current: f64,
    pub grid_requested_power: f64,
}

impl Maxima {
    fn update(&mut self, out: &SimulatorStepOutput) {
        let up = |m: &mut f64, v: f64| {
            if v > *m {
                *m = v;
            }
        };
        up(&mut self.pv_voltage, out.power_source.voltage);
        up(&mut self.pv_current, out.power_source.current);
        up(&mut self.battery_voltage, out.battery.voltage);
        up(&mut self.battery_current, out.battery.current);
        up(&mut self.load_current, out.load.requested_apparent_power / AC_NOMINAL_VOLTAGE);
        up(&mut self.grid_current, out.grid.delivered_apparent_power / AC_NOMINAL_VOLTAGE);
        up(&mut self.grid_requested_power, out.inverter.grid.requested_active_power);
    }
}

/// Everything produced by one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatorStepOutput {
    pub index: u64,
    pub start: Timestamp,
    pub end: Timestamp,
    pub seconds: f64,
    pub context_count: usize,
    pub power_source: PowerSourceStepResult,
    pub load: LoadStepResult,
    pub inverter: InverterStepResult,
    pub battery: BatteryStepResult,
    pub grid: GridStepResult,
    pub energies: StepEnergies,
    pub aggregates: Aggregates,
    pub maxima: Maxima,
}

pub struct Simulator {
    clock: Clock,
    components: Components,
    last_battery: BatteryStepResult,
    last_grid: GridStepResult,
    last_context: Vec<ContextRecord>,
    sums: AggregateSums,
    maxima: Maxima,
    step_index: u64,
}

impl Simulator {
    pub fn new(clock: Clock, components: Components) -> Result<Self, SimulationError> {
        let last_battery = components
            .battery
            .initial_result(&clock)
            .map_err(|source| SimulationError::Component {
                component: ComponentKind::Battery,
                step: 0,
                source,
            })?;
        Ok(Simulator {
            clock,
            components,
            last_battery,
            last_grid: GridStepResult::default(),
            last_context: Vec::new(),
            sums: AggregateSums::default(),
            maxima: Maxima::default(),
            step_index: 0,
        })
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn aggregates(&self) -> Aggregates {
        self.sums.snapshot()
    }

    pub fn maxima(&self) -> Maxima {
        self.maxima
    }

    pub fn last_battery(&self) -> &BatteryStepResult {
        &self.last_battery
    }

    pub fn last_grid(&self) -> &GridStepResult {
        &self.last_grid
    }

    /// Context records that were visible during the last step.
    pub fn last_context(&self) -> &[ContextRecord] {
        &self.last_context
    }

    pub fn step(&mut self, step_ticks: u64) -> Result<SimulatorStepOutput, SimulationError> {
        self.step_with(step_ticks, StepExtras::default())
    }

    pub fn step_with(
        &mut self,
        step_ticks: u64,
        extras: StepExtras,
    ) -> Result<SimulatorStepOutput, SimulationError> {
        let step = self.step_index;
        let span = StepSpan::new(self.clock, step_ticks)
            .map_err(|source| SimulationError::Clock { step, source })?;
        let fail = |component| move |source| SimulationError::Component { component, step, source };
        let c = &mut self.components;

        let context = match c.context.as_mut() {
            Some(ctx) => ctx.step(&span).map_err(fail(ComponentKind::Context))?,
            None => Vec::new(),
        };
        let power_source = c.power_source.step(&span).map_err(fail(ComponentKind::PowerSource))?;
        let load = c.load.step(&span).map_err(fail(ComponentKind::Load))?;
        let input = InverterStepInput {
            power_source,
            battery: self.last_battery,
            grid: self.last_grid,
            load,
            context: &context,
            grid_to_battery_power: extras.grid_to_battery_power,
            battery_discharge_limit: extras.battery_discharge_limit,
        };
        let inverter = c.inverter.step(&span, &input).map_err(fail(ComponentKind::Inverter))?;
        let battery = c
            .battery
            .step(&span, &inverter.battery)
            .map_err(fail(ComponentKind::Battery))?;
        let grid = c.grid.step(&span, &inverter.grid).map_err(fail(ComponentKind::Grid))?;

        let seconds = span.seconds();
        let energies = StepEnergies {
            generated_wh: joules_to_wh(inverter.pv_power_drawn * seconds),
            charged_wh: joules_to_wh(battery.delta_energy.max(0.0)),
            discharged_wh: joules_to_wh((-battery.delta_energy).max(0.0)),
            consumed_wh: joules_to_wh(load.requested_active_power * seconds),
            purchased_wh: joules_to_wh(grid.delivered_active_power * seconds),
            cost: grid.pricing.map_or(0.0, |p| p.cost),
        };
        self.sums.add(&energies);

        let mut out = SimulatorStepOutput {
            index: step,
            start: span.start.now(),
            end: span.end().now(),
            seconds,
            context_count: context.len(),
            power_source,
            load,
            inverter,
            battery,
            grid,
            energies,
            aggregates: self.sums.snapshot(),
            maxima: self.maxima,
        };
        self.maxima.update(&out);
        out.maxima = self.maxima;

        self.clock = span.end();
        self.last_battery = battery;
        self.last_grid = grid;
        self.last_context = context;
        self.step_index += 1;
        Ok(out)
    }

    /// Advances `total_ticks` in steps of `step_ticks`, emitting a shorter
    /// final step for any remainder. Returns the number of steps taken.
    pub fn run(
        &mut self,
        total_ticks: u64,
        step_ticks: u64,
        sink: &mut dyn StepSink,
    ) -> Result<u64, SimulationError> {
        if step_ticks == 0 {
            return Err(SimulationError::Clock {
                step: self.step_index,
                source: ClockError::ZeroStep,
            });
        }
        let mut remaining = total_ticks;
        let mut steps = 0;
        while remaining > 0 {
            let ticks = step_ticks.min(remaining);
            let out = self.step(ticks)?;
            sink.accept(&out).map_err(|source| SimulationError::Sink {
                step: out.index,
                source,
            })?;
            remaining -= ticks;
            steps += 1;
        }
        Ok(steps)
    }

    /// Collects all outputs of [`Simulator::run`].
    pub fn run_collect(
        &mut self,
        total_ticks: u64,
        step_ticks: u64,
    ) -> Result<Vec<SimulatorStepOutput>, SimulationError> {
        let mut out = Vec::new();
        self.run(total_ticks, step_ticks, &mut out)?;
        Ok(out)
    }

    pub fn into_components(self) -> Components {
        self.components
    }
}
