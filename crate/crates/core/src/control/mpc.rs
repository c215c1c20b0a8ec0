use std::sync::Arc;

use super::{solve_charging, ChargingPlan, ChargingProblem, ControlError};
use crate::clock::{StepSpan, Timestamp};
use crate::component::{ComponentError, ComponentResult, Inverter};
use crate::context::ContextRecord;
use crate::forecast::{build_features, EffortEstimator, Predictor};
use crate::models::{InverterPvFirst, PriceSchedule};
use crate::records::{InverterStepInput, InverterStepResult};

/// Forecast load and PV, W, one entry per requested target time.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForecastWindow {
    pub load: Vec<f64>,
    pub pv: Vec<f64>,
}

/// Supplies load and PV forecasts to the controller.
pub trait Forecaster: Send {
    /// Values at each of `targets`, decided at `now` with the context
    /// visible then.
    fn forecast(
        &mut self,
        now: Timestamp,
        targets: &[Timestamp],
        context: &[ContextRecord],
    ) -> Result<ForecastWindow, ControlError>;
}

/// Values known at exact timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampledSeries {
    times: Vec<Timestamp>,
    values: Vec<f64>,
}

impl SampledSeries {
    /// Samples must be sorted by strictly increasing time.
    pub fn new(samples: Vec<(Timestamp, f64)>) -> Result<Self, ControlError> {
        if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(ControlError::Forecast("sample times must increase".into()));
        }
        let (times, values) = samples.into_iter().unzip();
        Ok(SampledSeries { times, values })
    }

    pub fn from_fn(times: impl IntoIterator<Item = Timestamp>, f: impl Fn(Timestamp) -> f64) -> Result<Self, ControlError> {
        Self::new(times.into_iter().map(|t| (t, f(t))).collect())
    }

    pub fn at(&self, t: Timestamp) -> Result<f64, ControlError> {
        self.times
            .binary_search(&t)
            .map(|i| self.values[i])
            .map_err(|_| ControlError::Forecast(format!("no sample at {} ns", t.0)))
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Returns the realized series.
#[derive(Debug, Clone)]
pub struct PerfectForecaster {
    load: SampledSeries,
    pv: SampledSeries,
}

impl PerfectForecaster {
    pub fn new(load: SampledSeries, pv: SampledSeries) -> Self {
        PerfectForecaster { load, pv }
    }
}

impl Forecaster for PerfectForecaster {
    fn forecast(
        &mut self,
        _now: Timestamp,
        targets: &[Timestamp],
        _context: &[ContextRecord],
    ) -> Result<ForecastWindow, ControlError> {
        Ok(ForecastWindow {
            load: targets.iter().map(|t| self.load.at(*t)).collect::<Result<_, _>>()?,
            pv: targets.iter().map(|t| self.pv.at(*t)).collect::<Result<_, _>>()?,
        })
    }
}

/// Load from a fitted predictor over context features; PV from a known
/// series.
pub struct ModelForecaster {
    predictor: Predictor,
    estimator: Arc<dyn EffortEstimator>,
    pv: SampledSeries,
}

impl ModelForecaster {
    pub fn new(predictor: Predictor, estimator: Arc<dyn EffortEstimator>, pv: SampledSeries) -> Self {
        ModelForecaster {
            predictor,
            estimator,
            pv,
        }
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }
}

impl Forecaster for ModelForecaster {
    fn forecast(
        &mut self,
        _now: Timestamp,
        targets: &[Timestamp],
        context: &[ContextRecord],
    ) -> Result<ForecastWindow, ControlError> {
        let mut load = Vec::with_capacity(targets.len());
        for t in targets {
            let x = build_features(context, self.predictor.family, *t, self.estimator.as_ref())
                .map_err(|e| ControlError::Forecast(e.to_string()))?;
            let y = self
                .predictor
                .predict(&x)
                .map_err(|e| ControlError::Forecast(e.to_string()))?;
            load.push(y.max(0.0));
        }
        Ok(ForecastWindow {
            load,
            pv: targets.iter().map(|t| self.pv.at(*t)).collect::<Result<_, _>>()?,
        })
    }
}

/// First-step action of a receding-horizon solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RecedingDecision {
    /// Planned grid purchase for the current step, W.
    pub purchase: f64,
    /// Part of the purchase routed into the battery, W.
    pub grid_to_battery_power: f64,
    /// How much of the current deficit the battery may cover, W.
    pub battery_discharge_limit: f64,
    pub plan: ChargingPlan,
}

/// Solves the window and keeps only the first step. `current_deficit` is
/// the load the PV cannot cover this step, W; the purchase is split into
/// load coverage and battery charging around it.
pub fn receding_horizon_step(
    problem: &ChargingProblem,
    current_deficit: f64,
) -> Result<RecedingDecision, ControlError> {
    let plan = solve_charging(problem)?;
    let purchase = plan.purchase[0];
    Ok(RecedingDecision {
        purchase,
        grid_to_battery_power: (purchase - current_deficit).max(0.0),
        battery_discharge_limit: (current_deficit - purchase).max(0.0),
        plan,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcConfig {
    /// End of the simulated window; the horizon never extends past it.
    pub end: Timestamp,
    /// Rolling horizon length in steps; `None` plans to `end`.
    pub horizon_steps: Option<usize>,
    /// W; `None` is unbounded.
    pub max_grid_power: Option<f64>,
}

/// PV-first inverter whose grid charging and battery discharge are set by a
/// receding-horizon solve every step.
pub struct MpcInverter {
    inner: InverterPvFirst,
    capacity: f64,
    prices: PriceSchedule,
    forecaster: Box<dyn Forecaster>,
    config: MpcConfig,
    fallbacks: u64,
    last_decision: Option<RecedingDecision>,
}

impl MpcInverter {
    /// The inner inverter must know the battery capacity.
    pub fn new(
        inner: InverterPvFirst,
        prices: PriceSchedule,
        forecaster: Box<dyn Forecaster>,
        config: MpcConfig,
    ) -> Result<Self, ControlError> {
        let capacity = inner.config().battery_capacity.ok_or_else(|| {
            ControlError::InvalidProblem("MPC inverter needs battery_capacity on the inner inverter".into())
        })?;
        if config.horizon_steps == Some(0) {
            return Err(ControlError::InvalidProblem("horizon must be at least one step".into()));
        }
        Ok(MpcInverter {
            inner,
            capacity,
            prices,
            forecaster,
            config,
            fallbacks: 0,
            last_decision: None,
        })
    }

    /// Steps where the window was infeasible and plain PV-first ran instead.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn last_decision(&self) -> Option<&RecedingDecision> {
        self.last_decision.as_ref()
    }

    fn decide(&mut self, span: &StepSpan, input: &InverterStepInput<'_>) -> Result<RecedingDecision, ControlError> {
        let c = self.inner.config();
        let now = span.start.now();
        let step_ns = span.duration_ns();
        let remaining = self.config.end.0.saturating_sub(now.0);
        let mut steps = (remaining / step_ns).max(1) as usize;
        if let Some(h) = self.config.horizon_steps {
            steps = steps.min(h);
        }
        let targets: Vec<Timestamp> = (1..steps as u64).map(|k| Timestamp(now.0 + (k + 1) * step_ns)).collect();
        let window = self.forecaster.forecast(now, &targets, input.context)?;

        let mut load = Vec::with_capacity(steps);
        let mut pv = Vec::with_capacity(steps);
        load.push(input.load.requested_active_power + c.self_power);
        pv.push(input.power_source.power.max(0.0));
        load.extend(window.load.iter().map(|l| l + c.self_power));
        pv.extend(window.pv.iter().map(|p| p.max(0.0)));
        let prices = (0..steps as u64)
            .map(|k| self.prices.price_at(Timestamp(now.0 + k * step_ns)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ControlError::Forecast(e.to_string()))?;

        let problem = ChargingProblem {
            step_seconds: span.seconds(),
            prices,
            load,
            pv,
            capacity: self.capacity,
            soc_min: c.soc_min,
            soc_max: c.soc_max,
            soc_initial: input.battery.soc.clamp(c.soc_min, c.soc_max),
            max_grid_power: self.config.max_grid_power,
        };
        let deficit = (problem.load[0] - problem.pv[0] * c.eta_pv_to_load).max(0.0);
        receding_horizon_step(&problem, deficit)
    }
}

impl Inverter for MpcInverter {
    fn step(&mut self, span: &StepSpan, input: &InverterStepInput<'_>) -> ComponentResult<InverterStepResult> {
        let mut adjusted = *input;
        match self.decide(span, input) {
            Ok(d) => {
                adjusted.grid_to_battery_power = d.grid_to_battery_power;
                adjusted.battery_discharge_limit = Some(d.battery_discharge_limit);
                self.last_decision = Some(d);
            }
            Err(ControlError::Infeasible { step }) => {
                log::warn!(
                    "charging window at {} ns infeasible from step {step}; using PV-first",
                    span.start.now().0
                );
                self.fallbacks += 1;
                self.last_decision = None;
            }
            Err(e) => return Err(ComponentError::Invalid(e.to_string())),
        }
        self.inner.dispatch(span.seconds(), &adjusted)
    }
}
