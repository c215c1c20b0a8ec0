//! Cost-optimal battery charging and the receding-horizon controller built
//! on it.

mod mpc;
mod solver;
mod tree;

use thiserror::Error;

pub use mpc::{
    receding_horizon_step, ForecastWindow, Forecaster, ModelForecaster, MpcConfig, MpcInverter,
    PerfectForecaster, RecedingDecision, SampledSeries,
};
pub use solver::{check_plan, solve_charging, ChargingPlan, ChargingProblem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid charging problem: {0}")]
    InvalidProblem(String),
    #[error("no feasible purchase covers the deficit at step {step}")]
    Infeasible { step: usize },
    #[error("forecast unavailable: {0}")]
    Forecast(String),
}
