//! Context-aware microgrid simulator: clock-driven components, a PV-first
//! hybrid inverter, linear battery and priced grid models, dataset replay,
//! cost-optimal charging with receding-horizon control, and context-based
//! load forecasting.

pub mod cli;
pub mod clock;
pub mod component;
pub mod context;
pub mod control;
pub mod engine;
pub mod experiment;
pub mod forecast;
pub mod models;
pub mod records;
pub mod replay;
pub mod scenario;
pub mod units;

pub use clock::{Clock, ClockError, StepSpan, Timestamp};
pub use component::{Battery, ComponentError, ComponentKind, Context, Grid, Inverter, Load, PowerSource};
pub use context::{context_query, ContextError, ContextRecord};
pub use records::{
    BatteryMode, BatteryStepInput, BatteryStepResult, GridPricing, GridStepInput, GridStepResult,
    InverterStepInput, InverterStepResult, LoadStepResult, PowerSourceStepResult,
};
