//! Scenario-level experiments: single runs, strategy comparisons and
//! forecast evaluation.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::clock::{StepSpan, Timestamp, NANOS_PER_SECOND, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::component::{ComponentResult, Inverter};
use crate::control::{
    ChargingProblem, ControlError, MpcConfig, MpcInverter, ModelForecaster, PerfectForecaster,
    SampledSeries,
};
use crate::engine::{Aggregates, Components, Maxima, SimulationError, Simulator, SimulatorStepOutput, SinkError, StepSink};
use crate::forecast::{
    evaluate_families, features_for, fit_least_squares, CachedEstimator, EffortEstimator,
    FamilyScore, FeatureFamily, FitOptions, ForecastError, HeuristicEstimator, Observation,
    Predictor, RemoteEstimator, SplitConfig,
};
use crate::models::InverterPvFirst;
use crate::records::{InverterStepInput, InverterStepResult};
use crate::scenario::{EstimatorSpec, InverterSpec, Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("control: {0}")]
    Control(#[from] ControlError),
    #[error("forecast: {0}")]
    Forecast(#[from] ForecastError),
    #[error("{0}")]
    Config(String),
}

impl ExperimentError {
    /// 1 for configuration problems, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Scenario(_) | ExperimentError::Config(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Plain PV-first inverter.
    Default,
    MpcPerfect,
    MpcContext,
    MpcNocontext,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Default,
        Strategy::MpcPerfect,
        Strategy::MpcContext,
        Strategy::MpcNocontext,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Default => "default",
            Strategy::MpcPerfect => "mpc-perfect",
            Strategy::MpcContext => "mpc-context",
            Strategy::MpcNocontext => "mpc-nocontext",
        }
    }

    /// Whether the strategy needs a predictor fitted on training days.
    pub fn needs_training(self) -> bool {
        matches!(self, Strategy::MpcContext | Strategy::MpcNocontext)
    }

    /// Comma-separated list; duplicates are dropped, order kept.
    pub fn parse_list(s: &str) -> Result<Vec<Strategy>, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let st: Strategy = part.parse()?;
            if !out.contains(&st) {
                out.push(st);
            }
        }
        if out.is_empty() {
            return Err("empty strategy list".into());
        }
        Ok(out)
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown strategy '{s}' (expected one of default, mpc-perfect, mpc-context, mpc-nocontext)"))
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn estimator_for(scenario: &Scenario) -> Arc<dyn EffortEstimator> {
    match &scenario.file.forecast.estimator {
        EstimatorSpec::Heuristic => Arc::new(HeuristicEstimator),
        EstimatorSpec::Remote(cfg) => Arc::new(CachedEstimator::new(RemoteEstimator::new(cfg.clone()))),
    }
}

/// Realized load at every step end.
pub fn observations(scenario: &Scenario) -> Result<Vec<Observation>, ExperimentError> {
    Ok(scenario
        .sample_series()?
        .into_iter()
        .map(|(at, load, _)| Observation { at, load })
        .collect())
}

/// Fits `family` on every step of `scenario`.
pub fn train_predictor(
    scenario: &Scenario,
    family: FeatureFamily,
    estimator: &dyn EffortEstimator,
) -> Result<Predictor, ExperimentError> {
    let obs = observations(scenario)?;
    let records = scenario.context_records();
    let x = features_for(&records, &obs, family, estimator)?;
    let y: Vec<f64> = obs.iter().map(|o| o.load).collect();
    let p = fit_least_squares(&x, &y, FitOptions { ridge_fallback: true })?;
    let (first, last) = (obs[0].at, obs[obs.len() - 1].at);
    Ok(p.with_window(first, last))
}

/// RMSE per family over random splits of the scenario's step-end loads.
pub fn forecast_eval(
    scenario: &Scenario,
    families: &[FeatureFamily],
    estimator: &dyn EffortEstimator,
) -> Result<Vec<FamilyScore>, ExperimentError> {
    let obs = observations(scenario)?;
    let f = &scenario.file.forecast;
    let split = SplitConfig {
        train_fraction: f.train_fraction,
        resamples: f.resamples,
        seed: scenario.seed(),
        fit: FitOptions { ridge_fallback: true },
    };
    Ok(evaluate_families(&scenario.context_records(), &obs, families, &split, estimator)?)
}

/// Keeps a shared count of the MPC inverter's fallbacks.
struct CountingMpc {
    inner: MpcInverter,
    fallbacks: Arc<AtomicU64>,
}

impl Inverter for CountingMpc {
    fn step(&mut self, span: &StepSpan, input: &InverterStepInput<'_>) -> ComponentResult<InverterStepResult> {
        let out = self.inner.step(span, input);
        self.fallbacks.store(self.inner.fallbacks(), Ordering::Relaxed);
        out
    }
}

/// Components for `strategy`; the counter reports MPC fallbacks.
pub fn build_components(
    scenario: &Scenario,
    strategy: Strategy,
    predictor: Option<&Predictor>,
    estimator: Arc<dyn EffortEstimator>,
) -> Result<(Components, Arc<AtomicU64>), ExperimentError> {
    let fallbacks = Arc::new(AtomicU64::new(0));
    let inverter: Box<dyn Inverter> = match strategy {
        Strategy::Default => scenario.inverter()?,
        _ => {
            if !matches!(scenario.file.components.inverter, InverterSpec::Linear(_)) {
                return Err(ExperimentError::Config(format!(
                    "strategy {strategy} needs a linear inverter"
                )));
            }
            let series = scenario.sample_series()?;
            let pv = SampledSeries::new(series.iter().map(|(t, _, p)| (*t, *p)).collect())?;
            let forecaster: Box<dyn crate::control::Forecaster> = match strategy {
                Strategy::MpcPerfect => {
                    let load = SampledSeries::new(series.iter().map(|(t, l, _)| (*t, *l)).collect())?;
                    Box::new(PerfectForecaster::new(load, pv))
                }
                _ => {
                    let p = predictor.ok_or_else(|| {
                        ExperimentError::Config(format!("strategy {strategy} needs a trained predictor"))
                    })?;
                    Box::new(ModelForecaster::new(p.clone(), estimator, pv))
                }
            };
            let config = MpcConfig {
                end: scenario.end(),
                horizon_steps: scenario.file.control.horizon_steps,
                max_grid_power: scenario.file.control.max_grid_power,
            };
            let inner = InverterPvFirst::new(scenario.inverter_config()?).map_err(ScenarioError::from)?;
            Box::new(CountingMpc {
                inner: MpcInverter::new(inner, scenario.prices()?, forecaster, config)?,
                fallbacks: fallbacks.clone(),
            })
        }
    };
    let components = Components {
        power_source: scenario.power_source()?,
        load: scenario.load()?,
        inverter,
        battery: scenario.battery()?,
        grid: scenario.grid()?,
        context: scenario.context(),
    };
    Ok((components, fallbacks))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRun {
    pub strategy: Strategy,
    pub steps: u64,
    pub aggregates: Aggregates,
    pub maxima: Maxima,
    pub fallbacks: u64,
    /// (step start, step end, step cost) per step.
    #[serde(skip)]
    pub step_costs: Vec<(Timestamp, Timestamp, f64)>,
    /// Cumulative cost after each step.
    #[serde(skip)]
    pub running_cost: Vec<f64>,
}

/// A simulator assembled for one strategy, not yet run.
pub struct PreparedRun {
    pub strategy: Strategy,
    pub simulator: Simulator,
    fallbacks: Arc<AtomicU64>,
}

impl PreparedRun {
    pub fn new(
        scenario: &Scenario,
        strategy: Strategy,
        predictor: Option<&Predictor>,
        estimator: Arc<dyn EffortEstimator>,
    ) -> Result<Self, ExperimentError> {
        let (components, fallbacks) = build_components(scenario, strategy, predictor, estimator)?;
        Ok(PreparedRun {
            strategy,
            simulator: Simulator::new(scenario.clock(), components)?,
            fallbacks,
        })
    }

    /// Runs the whole scenario, forwarding every step to `sink`.
    pub fn run(mut self, scenario: &Scenario, sink: &mut dyn StepSink) -> Result<(StrategyRun, Simulator), ExperimentError> {
        let mut step_costs = Vec::new();
        let mut running_cost = Vec::new();
        let mut tee = |out: &SimulatorStepOutput| -> Result<(), SinkError> {
            step_costs.push((out.start, out.end, out.energies.cost));
            running_cost.push(out.aggregates.cost);
            sink.accept(out)
        };
        let steps = self
            .simulator
            .run(scenario.total_ticks(), scenario.step_ticks(), &mut tee)?;
        let run = StrategyRun {
            strategy: self.strategy,
            steps,
            aggregates: self.simulator.aggregates(),
            maxima: self.simulator.maxima(),
            fallbacks: self.fallbacks.load(Ordering::Relaxed),
            step_costs,
            running_cost,
        };
        Ok((run, self.simulator))
    }
}

/// Runs `scenario` under `strategy`, forwarding every step to `sink`.
pub fn run_strategy(
    scenario: &Scenario,
    strategy: Strategy,
    predictor: Option<&Predictor>,
    estimator: Arc<dyn EffortEstimator>,
    sink: &mut dyn StepSink,
) -> Result<(StrategyRun, Simulator), ExperimentError> {
    PreparedRun::new(scenario, strategy, predictor, estimator)?.run(scenario, sink)
}

/// Cumulative within-day savings by hour: `values[d][h]` sums savings of
/// steps starting on day `d` at or before hour `h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SavingsTable {
    /// Day index since the epoch for each row.
    pub days: Vec<u64>,
    pub values: Vec<[f64; 24]>,
}

impl SavingsTable {
    pub fn from_costs(
        baseline: &[(Timestamp, Timestamp, f64)],
        candidate: &[(Timestamp, Timestamp, f64)],
    ) -> Result<Self, ExperimentError> {
        if baseline.len() != candidate.len() {
            return Err(ExperimentError::Config("runs differ in step count".into()));
        }
        let mut days: Vec<u64> = Vec::new();
        let mut hourly: Vec<[f64; 24]> = Vec::new();
        for (b, c) in baseline.iter().zip(candidate) {
            let day = b.0.day_index();
            if days.last() != Some(&day) {
                days.push(day);
                hourly.push([0.0; 24]);
            }
            let hour = ((b.0.0 / NANOS_PER_SECOND) % SECONDS_PER_DAY / SECONDS_PER_HOUR) as usize;
            hourly.last_mut().expect("pushed")[hour] += b.2 - c.2;
        }
        let values = hourly
            .into_iter()
            .map(|h| {
                let mut acc = [0.0; 24];
                let mut sum = 0.0;
                for (i, v) in h.iter().enumerate() {
                    sum += v;
                    acc[i] = sum;
                }
                acc
            })
            .collect();
        Ok(SavingsTable { days, values })
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["day".to_owned()];
        header.extend((0..24).map(|h| format!("h{h:02}")));
        w.write_record(&header)?;
        for (day, row) in self.days.iter().zip(&self.values) {
            let mut rec = vec![day.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    /// Simulated window after any training days.
    pub window: (Timestamp, Timestamp),
    pub runs: Vec<StrategyRun>,
    pub predictors: Vec<Predictor>,
    /// mpc-context against default, when both ran.
    pub savings: Option<SavingsTable>,
}

impl Comparison {
    pub fn run(&self, strategy: Strategy) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.strategy == strategy)
    }

    /// One row per step: step end then the running cost of each strategy.
    pub fn write_running_cost<W: std::io::Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_owned(), "end_ns".to_owned()];
        header.extend(self.runs.iter().map(|r| r.strategy.as_str().to_owned()));
        w.write_record(&header)?;
        if let Some(first) = self.runs.first() {
            for (i, (_, end, _)) in first.step_costs.iter().enumerate() {
                let mut rec = vec![i.to_string(), end.0.to_string()];
                rec.extend(self.runs.iter().map(|r| r.running_cost[i].to_string()));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Splits off the training days. Without enough days for a test window the
/// whole scenario is simulated, which only strategies without a fitted
/// predictor accept.
pub fn split_training(scenario: &Scenario) -> Result<(Option<Scenario>, Scenario), ExperimentError> {
    let train_seconds = u64::from(scenario.file.forecast.train_days) * SECONDS_PER_DAY;
    if train_seconds == 0 || train_seconds >= scenario.file.horizon_seconds {
        return Ok((None, scenario.clone()));
    }
    let train = scenario.window(scenario.start(), train_seconds)?;
    let test_start = Timestamp(scenario.start().0 + train_seconds * NANOS_PER_SECOND);
    let test = scenario.window(test_start, scenario.file.horizon_seconds - train_seconds)?;
    Ok((Some(train), test))
}

/// Test window plus the predictors fitted on the training days.
#[derive(Debug, Clone)]
pub struct Trained {
    pub test: Scenario,
    pub context: Option<Predictor>,
    pub plain: Option<Predictor>,
}

impl Trained {
    pub fn predictor_for(&self, strategy: Strategy) -> Option<&Predictor> {
        match strategy {
            Strategy::MpcContext => self.context.as_ref(),
            Strategy::MpcNocontext => self.plain.as_ref(),
            _ => None,
        }
    }

    pub fn predictors(&self) -> Vec<Predictor> {
        self.context.iter().chain(&self.plain).cloned().collect()
    }
}

/// Fits the predictors `strategies` need and returns the window they are
/// evaluated on.
pub fn train_for(
    scenario: &Scenario,
    strategies: &[Strategy],
    estimator: &dyn EffortEstimator,
) -> Result<Trained, ExperimentError> {
    let (train, test) = split_training(scenario)?;
    let mut out = Trained {
        test,
        context: None,
        plain: None,
    };
    if strategies.iter().any(|s| s.needs_training()) {
        let train = train.ok_or_else(|| {
            ExperimentError::Config(format!(
                "forecast strategies need forecast.train_days in [1, horizon days); horizon is {} s",
                scenario.file.horizon_seconds
            ))
        })?;
        if strategies.contains(&Strategy::MpcContext) {
            out.context = Some(train_predictor(&train, scenario.file.forecast.context_family, estimator)?);
        }
        if strategies.contains(&Strategy::MpcNocontext) {
            out.plain = Some(train_predictor(&train, FeatureFamily::None, estimator)?);
        }
    }
    Ok(out)
}

/// Runs every strategy on the same test window.
pub fn compare_strategies(scenario: &Scenario, strategies: &[Strategy]) -> Result<Comparison, ExperimentError> {
    if strategies.is_empty() {
        return Err(ExperimentError::Config("no strategies requested".into()));
    }
    let estimator = estimator_for(scenario);
    let trained = train_for(scenario, strategies, estimator.as_ref())?;
    let test = &trained.test;
    let mut runs = Vec::new();
    for &strategy in strategies {
        let mut discard = |_: &SimulatorStepOutput| Ok(());
        let (run, _) = run_strategy(test, strategy, trained.predictor_for(strategy), estimator.clone(), &mut discard)?;
        log::info!("{} {}: cost {}", scenario.name(), strategy, run.aggregates.cost);
        runs.push(run);
    }
    let savings = match (
        runs.iter().find(|r| r.strategy == Strategy::Default),
        runs.iter().find(|r| r.strategy == Strategy::MpcContext),
    ) {
        (Some(b), Some(c)) => Some(SavingsTable::from_costs(&b.step_costs, &c.step_costs)?),
        _ => None,
    };
    Ok(Comparison {
        window: (test.start(), test.end()),
        runs,
        predictors: trained.predictors(),
        savings,
    })
}

/// The whole-horizon charging problem on realized load and PV, as the
/// controller would see it with perfect forecasts.
pub fn open_loop_problem(scenario: &Scenario) -> Result<ChargingProblem, ExperimentError> {
    let f = &scenario.file;
    if f.horizon_seconds % f.step_seconds != 0 {
        return Err(ExperimentError::Config(
            "open-loop planning needs a horizon that is a whole number of steps".into(),
        ));
    }
    let inv = scenario.inverter_config()?;
    let battery = scenario.battery_config()?;
    let prices = scenario.prices()?;
    let step_ns = f.step_seconds * NANOS_PER_SECOND;
    let series = scenario.sample_series()?;
    let price_list = series
        .iter()
        .map(|(end, _, _)| prices.price_at(Timestamp(end.0 - step_ns)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ExperimentError::Config(e.to_string()))?;
    Ok(ChargingProblem {
        step_seconds: f.step_seconds as f64,
        prices: price_list,
        load: series.iter().map(|(_, l, _)| l + inv.self_power).collect(),
        pv: series.iter().map(|(_, _, p)| p.max(0.0)).collect(),
        capacity: scenario.battery_capacity(),
        soc_min: inv.soc_min,
        soc_max: inv.soc_max,
        soc_initial: battery.initial_soc.clamp(inv.soc_min, inv.soc_max),
        max_grid_power: f.control.max_grid_power,
    })
}
