//! Scenario files: a JSON description selecting one implementation per
//! component, plus the clock, horizon, prices and experiment settings.
//!
//! Relative paths inside a scenario are resolved against the directory of
//! the scenario file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, StepSpan, Timestamp, NANOS_PER_SECOND, SECONDS_PER_DAY};
use crate::component::{Battery, Context, Grid, Inverter, Load, PowerSource};
use crate::context::ContextRecord;
use crate::forecast::{FeatureFamily, RemoteEstimatorConfig};
use crate::models::{
    BatteryLinear, BatteryLinearConfig, GridPriced, GridPricedConfig, InverterPvFirst,
    InverterPvFirstConfig, JobEvent, JobGeneratorConfig, ModelConfigError, PriceBreakpoint,
    PriceSchedule, PriceTiers, ScriptedContext, SyntheticLoad, SyntheticPv,
    SyntheticScenarioConfig,
};
use crate::replay::{
    read_context, read_timeseries, IngestOptions, ReplayBattery, ReplayComponentConfig,
    ReplayContext, ReplayError, ReplayGrid, ReplayInverter, ReplayLoad, ReplayPowerSource,
    TimeSeriesTable, DEFAULT_BOUNDARY_TOLERANCE_SECONDS,
};
use crate::units::JOULES_PER_WH;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", .path.display())]
    Parse { path: PathBuf, message: String },
    #[error("referenced file does not exist: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", .path.display())]
    Replay {
        path: PathBuf,
        #[source]
        source: ReplayError,
    },
    #[error(transparent)]
    Model(#[from] ModelConfigError),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSpec {
    #[serde(default)]
    pub start_ns: u64,
    #[serde(default = "default_resolution")]
    pub resolution_ns: u64,
}

fn default_resolution() -> u64 {
    NANOS_PER_SECOND
}

impl Default for ClockSpec {
    fn default() -> Self {
        ClockSpec {
            start_ns: 0,
            resolution_ns: default_resolution(),
        }
    }
}

/// Physical parameters of the synthetic PV and load plus the job list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub pv_peak_power: f64,
    pub pv_noise_amplitude: f64,
    pub pv_voltage: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    pub base_load: f64,
    pub load_noise_amplitude: f64,
    pub job_events: Vec<JobEvent>,
    pub job_generator: Option<JobGeneratorConfig>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let d = SyntheticScenarioConfig::default();
        SyntheticSpec {
            pv_peak_power: d.pv_peak_power,
            pv_noise_amplitude: d.pv_noise_amplitude,
            pv_voltage: d.pv_voltage,
            sunrise_hour: d.sunrise_hour,
            sunset_hour: d.sunset_hour,
            base_load: d.base_load,
            load_noise_amplitude: d.load_noise_amplitude,
            job_events: Vec::new(),
            job_generator: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriceSpec {
    Flat(f64),
    TwoTier(PriceTiers),
    Breakpoints(Vec<PriceBreakpoint>),
}

impl Default for PriceSpec {
    fn default() -> Self {
        PriceSpec::Flat(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySource {
    pub file: PathBuf,
    #[serde(default = "default_tolerance")]
    pub boundary_tolerance_seconds: u64,
}

fn default_tolerance() -> u64 {
    DEFAULT_BOUNDARY_TOLERANCE_SECONDS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    Synthetic,
    Replay(ReplaySource),
}

impl Default for SourceSpec {
    fn default() -> Self {
        SourceSpec::Synthetic
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearBatterySpec {
    pub capacity_wh: f64,
    pub eta_charge: f64,
    pub eta_discharge: f64,
    pub nominal_voltage: f64,
    pub initial_soc: f64,
}

impl Default for LinearBatterySpec {
    fn default() -> Self {
        let d = BatteryLinearConfig::default();
        LinearBatterySpec {
            capacity_wh: d.capacity / JOULES_PER_WH,
            eta_charge: d.eta_charge,
            eta_discharge: d.eta_discharge,
            nominal_voltage: d.nominal_voltage,
            initial_soc: d.initial_soc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayBatterySpec {
    pub file: PathBuf,
    pub capacity_wh: f64,
    #[serde(default = "default_tolerance")]
    pub boundary_tolerance_seconds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BatterySpec {
    Linear(LinearBatterySpec),
    Replay(ReplayBatterySpec),
}

impl Default for BatterySpec {
    fn default() -> Self {
        BatterySpec::Linear(LinearBatterySpec::default())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearGridSpec {
    pub active_power_limit: Option<f64>,
    pub apparent_power_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridSpec {
    Linear(LinearGridSpec),
    Replay(ReplaySource),
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Linear(LinearGridSpec::default())
    }
}

/// PV-first inverter parameters. The battery capacity is taken from the
/// battery block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearInverterSpec {
    pub eta_pv_to_batt: f64,
    pub eta_pv_to_load: f64,
    pub eta_batt_to_load: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub self_power: f64,
    pub max_charge_power: Option<f64>,
    pub max_discharge_power: Option<f64>,
}

impl Default for LinearInverterSpec {
    fn default() -> Self {
        let d = InverterPvFirstConfig::default();
        LinearInverterSpec {
            eta_pv_to_batt: d.eta_pv_to_batt,
            eta_pv_to_load: d.eta_pv_to_load,
            eta_batt_to_load: d.eta_batt_to_load,
            soc_min: d.soc_min,
            soc_max: d.soc_max,
            self_power: d.self_power,
            max_charge_power: None,
            max_discharge_power: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InverterSpec {
    Linear(LinearInverterSpec),
    Replay(ReplaySource),
}

impl Default for InverterSpec {
    fn default() -> Self {
        InverterSpec::Linear(LinearInverterSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayContextSpec {
    pub file: PathBuf,
    /// Keep only records of the scenario's subsystem.
    #[serde(default = "default_true")]
    pub filter_subsystem: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContextSpec {
    Synthetic,
    Replay(ReplayContextSpec),
    None,
}

impl Default for ContextSpec {
    fn default() -> Self {
        ContextSpec::Synthetic
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentsSpec {
    pub power_source: SourceSpec,
    pub load: SourceSpec,
    pub battery: BatterySpec,
    pub grid: GridSpec,
    pub inverter: InverterSpec,
    pub context: ContextSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSpec {
    /// Rolling horizon in steps; absent plans to the end of the run.
    pub horizon_steps: Option<usize>,
    /// W
    pub max_grid_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EstimatorSpec {
    Heuristic,
    Remote(RemoteEstimatorConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecastSpec {
    /// Leading days used to fit predictors before a strategy comparison.
    pub train_days: u32,
    pub train_fraction: f64,
    pub resamples: u32,
    pub families: Vec<FeatureFamily>,
    /// Feature family of the context-aware forecaster used in comparisons.
    pub context_family: FeatureFamily,
    pub estimator: EstimatorSpec,
}

impl Default for ForecastSpec {
    fn default() -> Self {
        ForecastSpec {
            train_days: 7,
            train_fraction: 0.7,
            resamples: 20,
            families: FeatureFamily::ALL.to_vec(),
            context_family: FeatureFamily::Effort,
            estimator: EstimatorSpec::Heuristic,
        }
    }
}

/// On-disk scenario schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub clock: ClockSpec,
    pub horizon_seconds: u64,
    #[serde(default = "default_step")]
    pub step_seconds: u64,
    #[serde(default = "default_subsystem")]
    pub subsystem_id: u32,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: SyntheticSpec,
    #[serde(default)]
    pub prices: PriceSpec,
    #[serde(default)]
    pub components: ComponentsSpec,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub forecast: ForecastSpec,
}

fn default_step() -> u64 {
    120
}

fn default_subsystem() -> u32 {
    1
}

impl ScenarioFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

/// A validated scenario with its input files loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
    tables: BTreeMap<PathBuf, Arc<TimeSeriesTable>>,
    replay_context: Option<Vec<ContextRecord>>,
    /// Day span the synthetic world is generated over; kept by windows so
    /// a sub-range sees the same jobs and prices as the full run.
    world: Option<(Timestamp, u32)>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        if !path.exists() {
            return Err(ScenarioError::MissingFile(path.to_owned()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })?;
        let file = ScenarioFile::parse(&text, path)?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Scenario::new(file, base)
    }

    pub fn new(file: ScenarioFile, base_dir: PathBuf) -> Result<Self, ScenarioError> {
        let mut s = Scenario {
            file,
            base_dir,
            tables: BTreeMap::new(),
            replay_context: None,
            world: None,
        };
        s.validate()?;
        s.load_inputs()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        let f = &self.file;
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if f.clock.resolution_ns == 0 {
            return bad("clock.resolution_ns must be positive".into());
        }
        if f.horizon_seconds == 0 {
            return bad("horizon_seconds must be positive".into());
        }
        if f.step_seconds == 0 {
            return bad("step_seconds must be positive".into());
        }
        let clock = self.clock();
        if clock.seconds_to_ticks(f.step_seconds).is_none() || clock.seconds_to_ticks(f.horizon_seconds).is_none() {
            return bad("step and horizon must be whole multiples of the clock resolution".into());
        }
        if f.clock.start_ns.checked_add(f.horizon_seconds.saturating_mul(NANOS_PER_SECOND)).is_none() {
            return bad("scenario end overflows the clock".into());
        }
        if f.control.horizon_steps == Some(0) {
            return bad("control.horizon_steps must be at least 1".into());
        }
        if !(f.forecast.train_fraction > 0.0 && f.forecast.train_fraction < 1.0) {
            return bad("forecast.train_fraction must lie in (0, 1)".into());
        }
        if f.forecast.families.is_empty() {
            return bad("forecast.families must not be empty".into());
        }
        if !f.forecast.context_family.uses_context() {
            return bad("forecast.context_family must use context".into());
        }
        self.synthetic_config().validate()?;
        self.inverter_config()?;
        self.battery_config()?;
        self.prices()?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_owned()
        } else {
            self.base_dir.join(p)
        }
    }

    fn replay_files(&self) -> Vec<PathBuf> {
        let c = &self.file.components;
        let mut out = Vec::new();
        for s in [&c.power_source, &c.load] {
            if let SourceSpec::Replay(r) = s {
                out.push(r.file.clone());
            }
        }
        if let BatterySpec::Replay(r) = &c.battery {
            out.push(r.file.clone());
        }
        if let GridSpec::Replay(r) = &c.grid {
            out.push(r.file.clone());
        }
        if let InverterSpec::Replay(r) = &c.inverter {
            out.push(r.file.clone());
        }
        out
    }

    fn load_inputs(&mut self) -> Result<(), ScenarioError> {
        for rel in self.replay_files() {
            let path = self.resolve(&rel);
            if self.tables.contains_key(&path) {
                continue;
            }
            let reader = open(&path)?;
            let ingested = read_timeseries(reader, IngestOptions::default())
                .map_err(|source| ScenarioError::Replay { path: path.clone(), source })?;
            self.tables.insert(path, Arc::new(ingested.value));
        }
        if let ContextSpec::Replay(spec) = &self.file.components.context {
            let path = self.resolve(&spec.file);
            let records = read_context(open(&path)?)
                .map_err(|source| ScenarioError::Replay { path: path.clone(), source })?;
            self.replay_context = Some(records);
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn seed(&self) -> u64 {
        self.file.seed
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.file.seed = seed;
    }

    pub fn set_step_seconds(&mut self, step: u64) -> Result<(), ScenarioError> {
        self.file.step_seconds = step;
        self.validate()
    }

    pub fn clock(&self) -> Clock {
        Clock::new(self.file.clock.start_ns, self.file.clock.resolution_ns.max(1))
            .expect("resolution checked")
    }

    pub fn start(&self) -> Timestamp {
        Timestamp(self.file.clock.start_ns)
    }

    pub fn end(&self) -> Timestamp {
        Timestamp(self.file.clock.start_ns + self.file.horizon_seconds * NANOS_PER_SECOND)
    }

    pub fn step_ticks(&self) -> u64 {
        self.clock().seconds_to_ticks(self.file.step_seconds).expect("validated")
    }

    pub fn total_ticks(&self) -> u64 {
        self.clock().seconds_to_ticks(self.file.horizon_seconds).expect("validated")
    }

    pub fn subsystem_id(&self) -> u32 {
        self.file.subsystem_id
    }

    /// Same scenario over `[start, start + seconds)`.
    pub fn window(&self, start: Timestamp, seconds: u64) -> Result<Scenario, ScenarioError> {
        let mut s = self.clone();
        s.world = Some(self.world_span());
        s.file.clock.start_ns = start.0;
        s.file.horizon_seconds = seconds;
        s.validate()?;
        Ok(s)
    }

    /// Step end times of a full run, including a final partial step.
    pub fn step_ends(&self) -> Vec<Timestamp> {
        let step = self.file.step_seconds * NANOS_PER_SECOND;
        let end = self.end().0;
        let mut out = Vec::new();
        let mut t = self.start().0;
        while t < end {
            t = (t + step).min(end);
            out.push(Timestamp(t));
        }
        out
    }

    fn world_span(&self) -> (Timestamp, u32) {
        if let Some(w) = self.world {
            return w;
        }
        let day_ns = SECONDS_PER_DAY * NANOS_PER_SECOND;
        let first_day = self.file.clock.start_ns / day_ns;
        let last_day = self.end().0.saturating_sub(1) / day_ns;
        (Timestamp(first_day * day_ns), (last_day - first_day + 1) as u32)
    }

    pub fn synthetic_config(&self) -> SyntheticScenarioConfig {
        let f = &self.file;
        let (start, day_count) = self.world_span();
        let s = &f.synthetic;
        SyntheticScenarioConfig {
            seed: f.seed,
            start,
            day_count,
            subsystem_id: f.subsystem_id,
            pv_peak_power: s.pv_peak_power,
            pv_noise_amplitude: s.pv_noise_amplitude,
            pv_voltage: s.pv_voltage,
            sunrise_hour: s.sunrise_hour,
            sunset_hour: s.sunset_hour,
            base_load: s.base_load,
            load_noise_amplitude: s.load_noise_amplitude,
            job_events: s.job_events.clone(),
            job_generator: s.job_generator,
            price_tiers: match f.prices {
                PriceSpec::TwoTier(t) => Some(t),
                _ => None,
            },
        }
    }

    pub fn prices(&self) -> Result<PriceSchedule, ScenarioError> {
        let cfg = self.synthetic_config();
        let schedule = match &self.file.prices {
            PriceSpec::Flat(p) => PriceSchedule::flat(cfg.start, *p),
            PriceSpec::TwoTier(t) => PriceSchedule::two_tier(cfg.start, u64::from(cfg.day_count), t),
            PriceSpec::Breakpoints(b) => PriceSchedule::new(b.clone()),
        };
        schedule.map_err(|e| ScenarioError::Invalid(format!("prices: {e}")))
    }

    pub fn battery_config(&self) -> Result<BatteryLinearConfig, ScenarioError> {
        match &self.file.components.battery {
            BatterySpec::Linear(b) => {
                let cfg = BatteryLinearConfig {
                    capacity: b.capacity_wh * JOULES_PER_WH,
                    eta_charge: b.eta_charge,
                    eta_discharge: b.eta_discharge,
                    nominal_voltage: b.nominal_voltage,
                    initial_soc: b.initial_soc,
                };
                cfg.validate()?;
                Ok(cfg)
            }
            BatterySpec::Replay(r) => Ok(BatteryLinearConfig {
                capacity: r.capacity_wh * JOULES_PER_WH,
                ..BatteryLinearConfig::default()
            }),
        }
    }

    /// Battery capacity, J.
    pub fn battery_capacity(&self) -> f64 {
        match &self.file.components.battery {
            BatterySpec::Linear(b) => b.capacity_wh * JOULES_PER_WH,
            BatterySpec::Replay(r) => r.capacity_wh * JOULES_PER_WH,
        }
    }

    pub fn inverter_config(&self) -> Result<InverterPvFirstConfig, ScenarioError> {
        let spec = match &self.file.components.inverter {
            InverterSpec::Linear(s) => s.clone(),
            InverterSpec::Replay(_) => LinearInverterSpec::default(),
        };
        let cfg = InverterPvFirstConfig {
            eta_pv_to_batt: spec.eta_pv_to_batt,
            eta_pv_to_load: spec.eta_pv_to_load,
            eta_batt_to_load: spec.eta_batt_to_load,
            soc_min: spec.soc_min,
            soc_max: spec.soc_max,
            self_power: spec.self_power,
            max_charge_power: spec.max_charge_power.unwrap_or(f64::INFINITY),
            max_discharge_power: spec.max_discharge_power.unwrap_or(f64::INFINITY),
            battery_capacity: Some(self.battery_capacity()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn replay_config(&self, file: &Path, tolerance: u64) -> ReplayComponentConfig {
        let table = self.tables[&self.resolve(file)].clone();
        ReplayComponentConfig::new(self.subsystem_id(), table).with_tolerance_seconds(tolerance)
    }

    fn replay_err(&self, file: &Path) -> impl Fn(ReplayError) -> ScenarioError {
        let path = self.resolve(file);
        move |source| ScenarioError::Replay { path: path.clone(), source }
    }

    pub fn power_source(&self) -> Result<Box<dyn PowerSource>, ScenarioError> {
        Ok(match &self.file.components.power_source {
            SourceSpec::Synthetic => Box::new(SyntheticPv::new(&self.synthetic_config())?),
            SourceSpec::Replay(r) => Box::new(
                ReplayPowerSource::new(self.replay_config(&r.file, r.boundary_tolerance_seconds))
                    .map_err(self.replay_err(&r.file))?,
            ),
        })
    }

    pub fn load(&self) -> Result<Box<dyn Load>, ScenarioError> {
        Ok(match &self.file.components.load {
            SourceSpec::Synthetic => Box::new(SyntheticLoad::new(&self.synthetic_config())?),
            SourceSpec::Replay(r) => Box::new(
                ReplayLoad::new(self.replay_config(&r.file, r.boundary_tolerance_seconds))
                    .map_err(self.replay_err(&r.file))?,
            ),
        })
    }

    pub fn battery(&self) -> Result<Box<dyn Battery>, ScenarioError> {
        Ok(match &self.file.components.battery {
            BatterySpec::Linear(_) => Box::new(BatteryLinear::new(self.battery_config()?)?),
            BatterySpec::Replay(r) => Box::new(
                ReplayBattery::new(
                    self.replay_config(&r.file, r.boundary_tolerance_seconds),
                    r.capacity_wh * JOULES_PER_WH,
                )
                .map_err(self.replay_err(&r.file))?,
            ),
        })
    }

    pub fn grid(&self) -> Result<Box<dyn Grid>, ScenarioError> {
        Ok(match &self.file.components.grid {
            GridSpec::Linear(g) => Box::new(GridPriced::new(GridPricedConfig {
                active_power_limit: g.active_power_limit,
                apparent_power_limit: g.apparent_power_limit,
                price_schedule: self.prices()?,
            })?),
            GridSpec::Replay(r) => Box::new(
                ReplayGrid::new(self.replay_config(&r.file, r.boundary_tolerance_seconds))
                    .map_err(self.replay_err(&r.file))?,
            ),
        })
    }

    /// The configured inverter: PV-first or replay.
    pub fn inverter(&self) -> Result<Box<dyn Inverter>, ScenarioError> {
        Ok(match &self.file.components.inverter {
            InverterSpec::Linear(_) => Box::new(InverterPvFirst::new(self.inverter_config()?)?),
            InverterSpec::Replay(r) => Box::new(
                ReplayInverter::new(self.replay_config(&r.file, r.boundary_tolerance_seconds))
                    .map_err(self.replay_err(&r.file))?,
            ),
        })
    }

    /// All context records available to the scenario.
    pub fn context_records(&self) -> Vec<ContextRecord> {
        match &self.file.components.context {
            ContextSpec::Synthetic => self.synthetic_config().context_records(),
            ContextSpec::Replay(spec) => {
                let all = self.replay_context.clone().unwrap_or_default();
                if spec.filter_subsystem {
                    all.into_iter()
                        .filter(|r| r.subsystem_id == self.subsystem_id())
                        .collect()
                } else {
                    all
                }
            }
            ContextSpec::None => Vec::new(),
        }
    }

    pub fn context(&self) -> Option<Box<dyn Context>> {
        match &self.file.components.context {
            ContextSpec::None => None,
            ContextSpec::Synthetic => Some(Box::new(ScriptedContext::new(self.context_records()))),
            ContextSpec::Replay(_) => Some(Box::new(ReplayContext::new(self.context_records(), None))),
        }
    }

    /// Load and PV at every step end, sampled from fresh component
    /// instances.
    pub fn sample_series(&self) -> Result<Vec<(Timestamp, f64, f64)>, ScenarioError> {
        let mut load = self.load()?;
        let mut pv = self.power_source()?;
        let mut clock = self.clock();
        let mut out = Vec::new();
        let step = self.step_ticks();
        let mut remaining = self.total_ticks();
        while remaining > 0 {
            let ticks = step.min(remaining);
            let span = StepSpan::new(clock, ticks).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            let l = load.step(&span).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            let p = pv.step(&span).map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            out.push((span.end().now(), l.requested_active_power, p.power));
            clock = span.end();
            remaining -= ticks;
        }
        Ok(out)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, ScenarioError> {
    if !path.exists() {
        return Err(ScenarioError::MissingFile(path.to_owned()));
    }
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| ScenarioError::Io {
            path: path.to_owned(),
            source,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioFile, ScenarioError> {
        ScenarioFile::parse(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let f = parse(r#"{"name": "m", "horizon_seconds": 86400}"#).unwrap();
        assert_eq!(f.step_seconds, 120);
        assert_eq!(f.components.power_source, SourceSpec::Synthetic);
        let s = Scenario::new(f, PathBuf::new()).unwrap();
        assert_eq!(s.step_ends().len(), 720);
        assert_eq!(s.total_ticks(), 86_400);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(r#"{"name": "m", "horizon_seconds": 60, "bogus": 1}"#).is_err());
        assert!(parse(r#"{"name": "m", "horizon_seconds": 60, "components": {"battery": {"type": "linear", "capacity": 1}}}"#).is_err());
        assert!(parse(r#"{"name": "m", "horizon_seconds": 60, "components": {"grid": {"type": "nuclear"}}}"#).is_err());
    }

    #[test]
    fn component_blocks_parse() {
        let f = parse(
            r#"{"name": "m", "horizon_seconds": 60,
                "prices": {"two_tier": {"off_peak_price": 0.1, "peak_price": 0.4, "peak_start_hour": 7, "peak_end_hour": 22}},
                "components": {
                    "battery": {"type": "linear", "capacity_wh": 1000, "initial_soc": 0.3},
                    "inverter": {"type": "linear", "soc_min": 0.2},
                    "load": {"type": "replay", "file": "x.csv"},
                    "context": {"type": "none"}
                }}"#,
        )
        .unwrap();
        assert!(matches!(f.components.load, SourceSpec::Replay(_)));
        assert_eq!(f.components.context, ContextSpec::None);
        match f.components.battery {
            BatterySpec::Linear(b) => assert_eq!((b.capacity_wh, b.initial_soc), (1000.0, 0.3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_replay_file_is_reported() {
        let f = parse(r#"{"name": "m", "horizon_seconds": 60, "components": {"load": {"type": "replay", "file": "nope.csv"}}}"#).unwrap();
        let err = Scenario::new(f, PathBuf::from("/nonexistent")).unwrap_err();
        assert!(err.to_string().contains("nope.csv"), "{err}");
    }

    #[test]
    fn partial_final_step() {
        let f = parse(r#"{"name": "m", "horizon_seconds": 300, "step_seconds": 120}"#).unwrap();
        let s = Scenario::new(f, PathBuf::new()).unwrap();
        let ends = s.step_ends();
        assert_eq!(ends.len(), 3);
        assert_eq!(ends[2], Timestamp::from_secs(300));
    }
}
