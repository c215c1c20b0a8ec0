//! Component contracts the simulator wires together.
//!
//! Every component advances over a [`StepSpan`] of the shared clock. Extra
//! inputs differ per contract, so each contract is its own trait rather than
//! one generic step signature.

use thiserror::Error;

use crate::clock::{ClockError, StepSpan};
use crate::context::ContextRecord;
use crate::models::PriceError;
use crate::records::{
    BatteryStepInput, BatteryStepResult, GridStepInput, GridStepResult, InverterStepInput,
    InverterStepResult, LoadStepResult, PowerSourceStepResult,
};
use crate::replay::ReplayError;

#[derive(Debug, Error)]
pub enum ComponentError {
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error("{0}")]
    Invalid(String),
}

pub type ComponentResult<T> = Result<T, ComponentError>;

/// Any independent DC source, e.g. a PV array.
pub trait PowerSource: Send {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<PowerSourceStepResult>;
}

/// One-way AC grid connection: power can be drawn but not sold.
pub trait Grid: Send {
    fn step(&mut self, span: &StepSpan, input: &GridStepInput) -> ComponentResult<GridStepResult>;
}

/// AC load supplied by the inverter.
pub trait Load: Send {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<LoadStepResult>;
}

/// DC battery driven by the inverter.
pub trait Battery: Send {
    /// State before the first step; deltas are zero.
    fn initial_result(&self, start: &crate::clock::Clock) -> ComponentResult<BatteryStepResult>;

    fn step(
        &mut self,
        span: &StepSpan,
        input: &BatteryStepInput,
    ) -> ComponentResult<BatteryStepResult>;
}

/// Arbitrates between PV, battery and grid to serve the load.
pub trait Inverter: Send {
    fn step(
        &mut self,
        span: &StepSpan,
        input: &InverterStepInput<'_>,
    ) -> ComponentResult<InverterStepResult>;
}

/// Supplies the context records visible at the start of each step.
pub trait Context: Send {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<Vec<ContextRecord>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentKind {
    Context,
    PowerSource,
    Load,
    Inverter,
    Battery,
    Grid,
}

impl std::fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ComponentKind::Context => "context",
            ComponentKind::PowerSource => "power source",
            ComponentKind::Load => "load",
            ComponentKind::Inverter => "inverter",
            ComponentKind::Battery => "battery",
            ComponentKind::Grid => "grid",
        })
    }
}
