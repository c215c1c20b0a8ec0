use std::fmt::Write as _;
use std::io::Write;

use thiserror::Error;

use super::SimulatorStepOutput;
use crate::clock::Timestamp;
use crate::records::{BatteryMode, BatteryStepResult};
use crate::replay::{channel, ChannelKey, ReplayError, TimeSeriesTable};
use crate::units::{AC_NOMINAL_FREQUENCY, AC_NOMINAL_VOLTAGE};

#[derive(Debug, Error)]
pub enum SinkError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("{0}")]
    Other(String),
}

/// Receives step outputs as they are produced.
pub trait StepSink {
    fn accept(&mut self, out: &SimulatorStepOutput) -> Result<(), SinkError>;
}

impl StepSink for Vec<SimulatorStepOutput> {
    fn accept(&mut self, out: &SimulatorStepOutput) -> Result<(), SinkError> {
        self.push(out.clone());
        Ok(())
    }
}

impl<F: FnMut(&SimulatorStepOutput) -> Result<(), SinkError>> StepSink for F {
    fn accept(&mut self, out: &SimulatorStepOutput) -> Result<(), SinkError> {
        self(out)
    }
}

pub const STEP_CSV_HEADER: [&str; 43] = [
    "step",
    "start_ns",
    "end_ns",
    "seconds",
    "context_count",
    "pv_voltage",
    "pv_current",
    "pv_power",
    "load_active_power",
    "load_apparent_power",
    "inverter_grid_active_request",
    "inverter_grid_apparent_request",
    "inverter_battery_mode",
    "inverter_battery_current",
    "pv_power_drawn",
    "battery_soc",
    "battery_voltage",
    "battery_current",
    "battery_delta_energy",
    "battery_delta_charge",
    "grid_active_power",
    "grid_apparent_power",
    "grid_cost",
    "grid_violation",
    "generated_wh",
    "charged_wh",
    "discharged_wh",
    "consumed_wh",
    "purchased_wh",
    "cost",
    "cum_generated_wh",
    "cum_charged_wh",
    "cum_discharged_wh",
    "cum_consumed_wh",
    "cum_purchased_wh",
    "cum_cost",
    "max_pv_voltage",
    "max_pv_current",
    "max_battery_voltage",
    "max_battery_current",
    "max_load_current",
    "max_grid_current",
    "max_grid_requested_power",
];

/// Writes one CSV row per step. Floats use the shortest round-trip form.
pub struct CsvStepSink<W: Write> {
    writer: W,
    line: String,
    header_written: bool,
}

impl<W: Write> CsvStepSink<W> {
    pub fn new(writer: W) -> Self {
        CsvStepSink {
            writer,
            line: String::with_capacity(512),
            header_written: false,
        }
    }

    pub fn write_header(&mut self) -> Result<(), SinkError> {
        if !self.header_written {
            self.writer.write_all(STEP_CSV_HEADER.join(",").as_bytes())?;
            self.writer.write_all(b"\n")?;
            self.header_written = true;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, SinkError> {
        self.write_header()?;
        self.writer.flush()?;
        Ok(self.writer)
    }
}

impl<W: Write> StepSink for CsvStepSink<W> {
    fn accept(&mut self, o: &SimulatorStepOutput) -> Result<(), SinkError> {
        self.write_header()?;
        let l = &mut self.line;
        l.clear();
        let pricing = o.grid.pricing.unwrap_or_default();
        let _ = write!(
            l,
            "{},{},{},{},{},",
            o.index, o.start.0, o.end.0, o.seconds, o.context_count
        );
        let floats_a = [
            o.power_source.voltage,
            o.power_source.current,
            o.power_source.power,
            o.load.requested_active_power,
            o.load.requested_apparent_power,
            o.inverter.grid.requested_active_power,
            o.inverter.grid.requested_apparent_power,
        ];
        for v in floats_a {
            let _ = write!(l, "{v},");
        }
        let _ = write!(l, "{},", o.inverter.battery.mode.as_str());
        let floats_b = [
            o.inverter.battery.current,
            o.inverter.pv_power_drawn,
            o.battery.soc,
            o.battery.voltage,
            o.battery.current,
            o.battery.delta_energy,
            o.battery.delta_charge,
            o.grid.delivered_active_power,
            o.grid.delivered_apparent_power,
            pricing.cost,
        ];
        for v in floats_b {
            let _ = write!(l, "{v},");
        }
        let _ = write!(l, "{},", u8::from(pricing.violation));
        let e = &o.energies;
        let a = &o.aggregates;
        let m = &o.maxima;
        let floats_c = [
            e.generated_wh,
            e.charged_wh,
            e.discharged_wh,
            e.consumed_wh,
            e.purchased_wh,
            e.cost,
            a.generated_wh,
            a.charged_wh,
            a.discharged_wh,
            a.consumed_wh,
            a.purchased_wh,
            a.cost,
            m.pv_voltage,
            m.pv_current,
            m.battery_voltage,
            m.battery_current,
            m.load_current,
            m.grid_current,
        ];
        for v in floats_c {
            let _ = write!(l, "{v},");
        }
        let _ = writeln!(l, "{}", m.grid_requested_power);
        self.writer.write_all(l.as_bytes())?;
        Ok(())
    }
}

/// Records step outputs as replayable channels, timestamped at step ends.
pub struct ChannelRecorder {
    subsystem_id: u32,
    table: TimeSeriesTable,
}

impl ChannelRecorder {
    pub fn new(subsystem_id: u32) -> Self {
        ChannelRecorder {
            subsystem_id,
            table: TimeSeriesTable::new(),
        }
    }

    fn put(&mut self, name: &str, t: Timestamp, v: f64) -> Result<(), SinkError> {
        self.table
            .push(ChannelKey::new(self.subsystem_id, name), t, v)
            .map_err(SinkError::from)
    }

    /// Battery state before the first step, so a replayed battery can report
    /// its starting SOC.
    pub fn record_initial(&mut self, at: Timestamp, battery: &BatteryStepResult) -> Result<(), SinkError> {
        self.put(channel::BATTERY_SOC, at, battery.soc * 100.0)?;
        self.put(channel::BATTERY_VOLTAGE, at, battery.voltage)?;
        self.put(channel::BATTERY_CURRENT, at, 0.0)?;
        self.put(channel::BATTERY_POWER, at, 0.0)
    }

    pub fn table(&self) -> &TimeSeriesTable {
        &self.table
    }

    pub fn into_table(self) -> TimeSeriesTable {
        self.table
    }
}

impl StepSink for ChannelRecorder {
    fn accept(&mut self, o: &SimulatorStepOutput) -> Result<(), SinkError> {
        let t = o.end;
        let signed_current = match o.inverter.battery.mode {
            BatteryMode::Charge => o.battery.current,
            BatteryMode::Discharge => -o.battery.current,
            BatteryMode::Idle => 0.0,
        };
        let battery_power = if o.seconds > 0.0 {
            o.battery.delta_energy / o.seconds
        } else {
            0.0
        };
        let rows = [
            (channel::BATTERY_VOLTAGE, o.battery.voltage),
            (channel::BATTERY_CURRENT, signed_current),
            (channel::BATTERY_SOC, o.battery.soc * 100.0),
            (channel::BATTERY_POWER, battery_power),
            (channel::PV_VOLTAGE, o.power_source.voltage),
            (channel::PV_CURRENT, o.power_source.current),
            (channel::PV_POWER, o.power_source.power),
            (channel::LOAD_VOLTAGE, AC_NOMINAL_VOLTAGE),
            (channel::LOAD_CURRENT, o.load.requested_apparent_power / AC_NOMINAL_VOLTAGE),
            (channel::LOAD_FREQUENCY, AC_NOMINAL_FREQUENCY),
            (channel::LOAD_ACTIVE_POWER, o.load.requested_active_power),
            (channel::LOAD_APPARENT_POWER, o.load.requested_apparent_power),
            (channel::GRID_VOLTAGE, AC_NOMINAL_VOLTAGE),
            (channel::GRID_CURRENT, o.grid.delivered_apparent_power / AC_NOMINAL_VOLTAGE),
            (channel::GRID_FREQUENCY, AC_NOMINAL_FREQUENCY),
            (channel::GRID_APPARENT_POWER, o.grid.delivered_apparent_power),
            (channel::GRID_ACTIVE_POWER, o.grid.delivered_active_power),
        ];
        for (name, v) in rows {
            self.put(name, t, v)?;
        }
        Ok(())
    }
}
