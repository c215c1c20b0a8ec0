//! Seeded synthetic PV, load and context sources.
//!
//! Every generated value is a pure function of (seed, timestamp), so two
//! instances built from the same config produce bitwise-identical series no
//! matter how they are stepped.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{ModelConfigError, PriceTiers};
use crate::clock::{StepSpan, Timestamp, NANOS_PER_SECOND, SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::component::{ComponentResult, Context, Load, PowerSource};
use crate::context::{context_query, normalize_order, ContextRecord};
use crate::forecast::estimate_effort_heuristic;
use crate::records::{LoadStepResult, PowerSourceStepResult};

const HOUR_NS: u64 = SECONDS_PER_HOUR * NANOS_PER_SECOND;
const DAY_NS: u64 = SECONDS_PER_DAY * NANOS_PER_SECOND;

/// Payload key linking an abort notice to the job it cancels.
pub const JOB_ID_KEY: &str = "job_id";
pub const ABORTS_JOB_KEY: &str = "aborts_job";

/// A described job that adds load while it runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobEvent {
    pub begins_at: Timestamp,
    /// Announced end.
    pub ends_at: Timestamp,
    pub description: String,
    pub true_effort: f64,
    /// W per unit of effort.
    pub watts_per_effort: f64,
    /// When the announcement was logged; defaults to 12 h before the start.
    #[serde(default)]
    pub recorded_at: Option<Timestamp>,
    /// Early termination (e.g. a crash); load drops and a notice is logged.
    #[serde(default)]
    pub aborted_at: Option<Timestamp>,
    #[serde(default)]
    pub numeric: Map<String, Value>,
}

impl JobEvent {
    pub fn actual_end(&self) -> Timestamp {
        match self.aborted_at {
            Some(t) if t < self.ends_at => t,
            _ => self.ends_at,
        }
    }

    pub fn runs_at(&self, t: Timestamp) -> bool {
        self.begins_at <= t && t < self.actual_end()
    }

    pub fn power(&self) -> f64 {
        self.true_effort * self.watts_per_effort
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobGeneratorConfig {
    pub max_jobs_per_day: u32,
    pub earliest_start_hour: f64,
    pub latest_start_hour: f64,
    pub min_duration_hours: f64,
    pub max_duration_hours: f64,
    pub watts_per_effort: f64,
    /// Upper bound on how long before the start a job is announced.
    pub max_lead_hours: f64,
    /// Fraction of jobs only logged after they started.
    pub log_fraction: f64,
    pub abort_probability: f64,
    /// Relative spread of true effort around the described effort.
    pub effort_jitter: f64,
}

impl Default for JobGeneratorConfig {
    fn default() -> Self {
        JobGeneratorConfig {
            max_jobs_per_day: 3,
            earliest_start_hour: 7.0,
            latest_start_hour: 18.0,
            min_duration_hours: 1.0,
            max_duration_hours: 6.0,
            watts_per_effort: 100.0,
            max_lead_hours: 14.0,
            log_fraction: 0.0,
            abort_probability: 0.0,
            effort_jitter: 0.0,
        }
    }
}

/// Job descriptions with their structured metadata. Text drives the effort
/// estimate; metadata is only loosely related to it.
const JOB_TEMPLATES: &[(&str, &[(&str, f64)])] = &[
    ("CPU-intensive, multi-core numeric robustness test", &[("cpu_cores", 32.0)]),
    ("Extending test to 48h (multi-core numeric robustness)", &[("cpu_cores", 24.0)]),
    ("GPU model fitting run", &[("parameter_count", 120.0)]),
    ("GPU training of a CPU-intensive surrogate", &[("parameter_count", 40.0), ("cpu_cores", 8.0)]),
    ("Compile geometry library", &[("file_count", 850.0)]),
    ("Multi-core build of solver sources", &[("file_count", 420.0), ("cpu_cores", 16.0)]),
    ("CPU-intensive parameter sweep", &[("cpu_cores", 8.0)]),
    ("Interactive notebook session", &[]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticScenarioConfig {
    pub seed: u64,
    /// Start of the first generated day.
    pub start: Timestamp,
    pub day_count: u32,
    pub subsystem_id: u32,
    /// W
    pub pv_peak_power: f64,
    /// Fractional cloud attenuation amplitude in [0, 1].
    pub pv_noise_amplitude: f64,
    pub pv_voltage: f64,
    pub sunrise_hour: f64,
    pub sunset_hour: f64,
    /// W
    pub base_load: f64,
    /// Multiplicative load noise amplitude.
    pub load_noise_amplitude: f64,
    pub job_events: Vec<JobEvent>,
    pub job_generator: Option<JobGeneratorConfig>,
    pub price_tiers: Option<PriceTiers>,
}

impl Default for SyntheticScenarioConfig {
    fn default() -> Self {
        SyntheticScenarioConfig {
            seed: 0,
            start: Timestamp::ZERO,
            day_count: 1,
            subsystem_id: 1,
            pv_peak_power: 1_500.0,
            pv_noise_amplitude: 0.0,
            pv_voltage: 300.0,
            sunrise_hour: 6.0,
            sunset_hour: 18.0,
            base_load: 250.0,
            load_noise_amplitude: 0.0,
            job_events: Vec::new(),
            job_generator: None,
            price_tiers: None,
        }
    }
}

impl SyntheticScenarioConfig {
    pub fn validate(&self) -> Result<(), ModelConfigError> {
        if !(self.pv_peak_power >= 0.0 && self.base_load >= 0.0) {
            return Err(ModelConfigError::new("PV peak and base load must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.pv_noise_amplitude)
            || !(0.0..=1.0).contains(&self.load_noise_amplitude)
        {
            return Err(ModelConfigError::new("noise amplitudes must lie in [0, 1]"));
        }
        if !(self.pv_voltage > 0.0) {
            return Err(ModelConfigError::new("PV voltage must be positive"));
        }
        if !(0.0 <= self.sunrise_hour && self.sunrise_hour < self.sunset_hour && self.sunset_hour <= 24.0) {
            return Err(ModelConfigError::new("need 0 <= sunrise < sunset <= 24"));
        }
        for (i, job) in self.job_events.iter().enumerate() {
            if job.begins_at >= job.ends_at {
                return Err(ModelConfigError::new(format!("job {i} must begin before it ends")));
            }
            if !(job.true_effort >= 0.0 && job.watts_per_effort >= 0.0) {
                return Err(ModelConfigError::new(format!("job {i} effort and watts must be non-negative")));
            }
        }
        Ok(())
    }

    /// Explicit jobs followed by generated ones.
    pub fn jobs(&self) -> Vec<JobEvent> {
        let mut jobs = self.job_events.clone();
        if let Some(generator) = &self.job_generator {
            jobs.extend(generate_jobs(self.seed, self.start, self.day_count, generator));
        }
        jobs
    }

    /// Context records describing the jobs: one announcement per job plus an
    /// abort notice for jobs that end early.
    pub fn context_records(&self) -> Vec<ContextRecord> {
        let mut out = Vec::new();
        for (id, job) in self.jobs().iter().enumerate() {
            let recorded = job
                .recorded_at
                .unwrap_or_else(|| job.begins_at.saturating_sub_nanos(12 * HOUR_NS))
                .min(Timestamp(job.ends_at.0 - 1));
            let mut payload = job.numeric.clone();
            payload.insert("text".into(), Value::String(job.description.clone()));
            payload.insert(JOB_ID_KEY.into(), Value::from(id as u64));
            let record = ContextRecord {
                recorded_at: recorded,
                begins_at: job.begins_at,
                ends_at: job.ends_at,
                subsystem_id: self.subsystem_id,
                payload,
            };
            out.push(record);
            if let Some(abort) = job.aborted_at.filter(|t| *t < job.ends_at) {
                let mut payload = Map::new();
                payload.insert("text".into(), Value::String("Unexpected System Reboot.".into()));
                payload.insert(ABORTS_JOB_KEY.into(), Value::from(id as u64));
                out.push(ContextRecord {
                    recorded_at: abort,
                    begins_at: abort,
                    ends_at: job.ends_at,
                    subsystem_id: self.subsystem_id,
                    payload,
                });
            }
        }
        normalize_order(&mut out);
        out
    }
}

pub fn generate_jobs(
    seed: u64,
    start: Timestamp,
    day_count: u32,
    cfg: &JobGeneratorConfig,
) -> Vec<JobEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a6f_6273);
    let first_day = start.0 - start.0 % DAY_NS;
    let quarter = HOUR_NS / 4;
    let mut jobs = Vec::new();
    for day in 0..day_count as u64 {
        let base = first_day + day * DAY_NS;
        let count = rng.random_range(0..=cfg.max_jobs_per_day);
        for _ in 0..count {
            let start_h = rng.random_range(cfg.earliest_start_hour..=cfg.latest_start_hour.max(cfg.earliest_start_hour));
            let dur_h = rng.random_range(cfg.min_duration_hours..=cfg.max_duration_hours.max(cfg.min_duration_hours));
            let begins = base + ((start_h * HOUR_NS as f64) as u64) / quarter * quarter;
            let ends = begins + (((dur_h * HOUR_NS as f64) as u64) / quarter).max(1) * quarter;
            let (text, numeric) = JOB_TEMPLATES[rng.random_range(0..JOB_TEMPLATES.len())];
            let jitter = 1.0 + cfg.effort_jitter * rng.random_range(-1.0..=1.0);
            let true_effort = (estimate_effort_heuristic(text) * jitter).max(0.0);
            let recorded = if rng.random_bool(cfg.log_fraction.clamp(0.0, 1.0)) {
                begins + rng.random_range(0..(ends - begins))
            } else {
                let lead = rng.random_range(0.5..=cfg.max_lead_hours.max(0.5));
                begins.saturating_sub((lead * HOUR_NS as f64) as u64)
            };
            let aborted_at = rng
                .random_bool(cfg.abort_probability.clamp(0.0, 1.0))
                .then(|| begins + ((ends - begins) as f64 * rng.random_range(0.2..0.8)) as u64);
            jobs.push(JobEvent {
                begins_at: Timestamp(begins),
                ends_at: Timestamp(ends),
                description: text.to_owned(),
                true_effort,
                watts_per_effort: cfg.watts_per_effort,
                recorded_at: Some(Timestamp(recorded)),
                aborted_at: aborted_at.map(Timestamp),
                numeric: numeric.iter().map(|(k, v)| ((*k).to_owned(), Value::from(*v))).collect(),
            });
        }
    }
    jobs
}

/// Uniform draw in [0, 1) determined by (seed, stream, t).
fn unit_noise(seed: u64, stream: u64, t: Timestamp) -> f64 {
    let key = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .rotate_left(17)
        ^ stream.wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ t.0;
    ChaCha8Rng::seed_from_u64(key).random::<f64>()
}

/// Clear-sky bell between sunrise and sunset with multiplicative clouds.
#[derive(Debug, Clone)]
pub struct SyntheticPv {
    seed: u64,
    peak: f64,
    noise: f64,
    voltage: f64,
    sunrise: f64,
    sunset: f64,
}

impl SyntheticPv {
    pub fn new(config: &SyntheticScenarioConfig) -> Result<Self, ModelConfigError> {
        config.validate()?;
        Ok(SyntheticPv {
            seed: config.seed,
            peak: config.pv_peak_power,
            noise: config.pv_noise_amplitude,
            voltage: config.pv_voltage,
            sunrise: config.sunrise_hour,
            sunset: config.sunset_hour,
        })
    }

    pub fn clear_sky_power(&self, t: Timestamp) -> f64 {
        let h = t.hour_of_day();
        if h <= self.sunrise || h >= self.sunset {
            return 0.0;
        }
        let noon = 0.5 * (self.sunrise + self.sunset);
        let width = self.sunset - self.sunrise;
        (self.peak * (PI * (h - noon) / width).cos()).max(0.0)
    }

    pub fn power_at(&self, t: Timestamp) -> f64 {
        let clear = self.clear_sky_power(t);
        if clear == 0.0 || self.noise == 0.0 {
            return clear;
        }
        clear * (1.0 - self.noise * unit_noise(self.seed, 1, t))
    }

    pub fn sample_at(&self, t: Timestamp) -> PowerSourceStepResult {
        let power = self.power_at(t);
        PowerSourceStepResult {
            voltage: if power > 0.0 { self.voltage } else { 0.0 },
            current: if power > 0.0 { power / self.voltage } else { 0.0 },
            power,
        }
    }
}

impl PowerSource for SyntheticPv {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<PowerSourceStepResult> {
        Ok(self.sample_at(span.end().now()))
    }
}

/// Base load plus running jobs, unity power factor.
#[derive(Debug, Clone)]
pub struct SyntheticLoad {
    seed: u64,
    base: f64,
    noise: f64,
    jobs: Vec<JobEvent>,
}

impl SyntheticLoad {
    pub fn new(config: &SyntheticScenarioConfig) -> Result<Self, ModelConfigError> {
        config.validate()?;
        Ok(SyntheticLoad {
            seed: config.seed,
            base: config.base_load,
            noise: config.load_noise_amplitude,
            jobs: config.jobs(),
        })
    }

    pub fn noiseless_power_at(&self, t: Timestamp) -> f64 {
        self.base
            + self
                .jobs
                .iter()
                .filter(|j| j.runs_at(t))
                .map(JobEvent::power)
                .sum::<f64>()
    }

    pub fn power_at(&self, t: Timestamp) -> f64 {
        let p = self.noiseless_power_at(t);
        if self.noise == 0.0 {
            return p;
        }
        let u = 2.0 * unit_noise(self.seed, 2, t) - 1.0;
        (p * (1.0 + self.noise * u)).max(0.0)
    }

    pub fn sample_at(&self, t: Timestamp) -> LoadStepResult {
        let p = self.power_at(t);
        LoadStepResult {
            requested_active_power: p,
            requested_apparent_power: p,
        }
    }
}

impl Load for SyntheticLoad {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<LoadStepResult> {
        Ok(self.sample_at(span.end().now()))
    }
}

/// Context provider over a fixed record list.
#[derive(Debug, Clone, Default)]
pub struct ScriptedContext {
    records: Vec<ContextRecord>,
}

impl ScriptedContext {
    pub fn new(records: Vec<ContextRecord>) -> Self {
        ScriptedContext { records }
    }

    pub fn records(&self) -> &[ContextRecord] {
        &self.records
    }

    pub fn visible_at(&self, now: Timestamp) -> Vec<ContextRecord> {
        context_query(&self.records, now)
    }
}

impl Context for ScriptedContext {
    fn step(&mut self, span: &StepSpan) -> ComponentResult<Vec<ContextRecord>> {
        Ok(self.visible_at(span.start.now()))
    }
}
