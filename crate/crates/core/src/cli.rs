//! Command-line interface.
//!
//! Exit codes: 0 success, 1 configuration or input error, 2 failure while
//! simulating or writing artifacts.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::engine::{ChannelRecorder, CsvStepSink, SinkError, StepSink};
use crate::experiment::{
    compare_strategies, estimator_for, forecast_eval, train_for, ExperimentError, PreparedRun,
    Strategy, StrategyRun,
};
use crate::forecast::{mean_rmse, FeatureFamily};
use crate::replay::{read_context, read_timeseries, write_context, write_timeseries, IngestOptions};
use crate::scenario::{
    BatterySpec, ClockSpec, ComponentsSpec, ContextSpec, GridSpec, InverterSpec, ReplayBatterySpec,
    ReplayContextSpec, ReplaySource, Scenario, ScenarioFile, SourceSpec,
};
use crate::units::JOULES_PER_WH;

pub const SCHEMA_VERSION: u32 = 1;

static QUIET: std::sync::atomic::AtomicBool = std::sync::atomic::AtomicBool::new(false);

macro_rules! report {
    ($($arg:tt)*) => {
        if !QUIET.load(std::sync::atomic::Ordering::Relaxed) {
            println!($($arg)*);
        }
    };
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cemsim", version, about = "Context-aware microgrid simulator")]
pub struct Cli {
    /// Suppress per-scenario result lines on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate scenarios and write step, channel and summary files.
    Run {
        #[command(flatten)]
        common: Common,
        /// Strategy to simulate.
        #[arg(long, default_value = "default")]
        strategy: Strategy,
    },
    /// Run each strategy on the same scenario and compare costs.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = Strategy::parse_list, default_value = "default,mpc-perfect,mpc-context,mpc-nocontext")]
        strategies: std::vec::Vec<Strategy>,
    },
    /// RMSE of each forecast feature family over random splits.
    ForecastEval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = FeatureFamily::parse_list)]
        families: Option<std::vec::Vec<FeatureFamily>>,
    },
    /// Check time series (.csv), context (.jsonl) and scenario (.json) files.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Reject unknown columns and channels.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file; repeat for a batch.
    #[arg(long = "scenario", required = true)]
    pub scenarios: Vec<PathBuf>,
    /// Output root; each scenario writes to OUT/<name>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the scenario step length.
    #[arg(long)]
    pub step_seconds: Option<u64>,
    /// Scenarios simulated concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    init_logging();
    run_cli(std::env::args_os())
}

pub fn init_logging() {
    let env = env_logger::Env::default().filter_or("CEMSIM_LOG", "warn");
    let _ = env_logger::Builder::from_env(env).try_init();
}

/// Parses `args` (program name first) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    QUIET.store(cli.quiet, std::sync::atomic::Ordering::Relaxed);
    match cli.command {
        Command::Run { common, strategy } => batch(&common, |s, out| cmd_run(s, out, strategy)),
        Command::Compare { common, strategies } => batch(&common, |s, out| cmd_compare(s, out, &strategies)),
        Command::ForecastEval { common, families } => {
            batch(&common, |s, out| cmd_forecast_eval(s, out, families.as_deref()))
        }
        Command::Validate { files, strict } => cmd_validate(&files, IngestOptions { strict }),
    }
}

/// Loads every scenario, then runs them on up to `jobs` threads.
fn batch<F>(common: &Common, f: F) -> i32
where
    F: Fn(&Scenario, &Path) -> Result<(), CliError> + Sync,
{
    let mut loaded = Vec::new();
    for path in &common.scenarios {
        match load_scenario(path, common) {
            Ok(s) => loaded.push(s),
            Err(e) => {
                eprintln!("error: {}", e.message);
                return e.code;
            }
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for (_, out) in &loaded {
        if !seen.insert(out.clone()) {
            eprintln!("error: two scenarios write to {}", out.display());
            return EXIT_CONFIG;
        }
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(common.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_RUNTIME;
        }
    };
    let results: Vec<Result<(), CliError>> = pool.install(|| {
        loaded
            .par_iter()
            .map(|(s, out)| {
                fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
                f(s, out)
            })
            .collect()
    });
    let mut code = EXIT_OK;
    for ((s, _), r) in loaded.iter().zip(results) {
        if let Err(e) = r {
            eprintln!("error: {}: {}", s.name(), e.message);
            code = code.max(e.code);
        }
    }
    code
}

fn load_scenario(path: &Path, common: &Common) -> Result<(Scenario, PathBuf), CliError> {
    let mut s = Scenario::from_path(path).map_err(|e| CliError::config(e.to_string()))?;
    if let Some(seed) = common.seed {
        s.set_seed(seed);
    }
    if let Some(step) = common.step_seconds {
        s.set_step_seconds(step).map_err(|e| CliError::config(e.to_string()))?;
    }
    let out = match (&common.out, &s.file.output_dir) {
        (Some(root), _) => root.join(s.name()),
        (None, Some(dir)) if dir.is_absolute() => dir.clone(),
        (None, Some(dir)) => s.base_dir.join(dir),
        (None, None) => PathBuf::from("cemsim-out").join(s.name()),
    };
    Ok((s, out))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

#[derive(Serialize)]
struct RunSummary<'a> {
    schema_version: u32,
    scenario: &'a str,
    seed: u64,
    strategy: Strategy,
    start_ns: u64,
    end_ns: u64,
    step_seconds: u64,
    steps: u64,
    cost: f64,
    final_soc: f64,
    battery_capacity_wh: f64,
    fallbacks: u64,
    aggregates: crate::engine::Aggregates,
    maxima: crate::engine::Maxima,
}

/// Simulates one scenario and writes `steps.csv`, `channels.csv`,
/// `context.jsonl`, `replay.json` and `summary.json` into `out`.
pub fn cmd_run(scenario: &Scenario, out: &Path, strategy: Strategy) -> Result<(), CliError> {
    let estimator = estimator_for(scenario);
    let trained = train_for(scenario, &[strategy], estimator.as_ref())?;
    let window = &trained.test;
    let prepared = PreparedRun::new(window, strategy, trained.predictor_for(strategy), estimator)?;

    let mut recorder = ChannelRecorder::new(window.subsystem_id());
    recorder
        .record_initial(window.start(), prepared.simulator.last_battery())
        .map_err(|e| CliError::runtime(e.to_string()))?;
    let steps_path = out.join("steps.csv");
    let mut csv = CsvStepSink::new(create(&steps_path)?);
    csv.write_header().map_err(|e| io_err(&steps_path, e))?;
    let (run, sim) = {
        let mut both = |o: &crate::engine::SimulatorStepOutput| -> Result<(), SinkError> {
            csv.accept(o)?;
            recorder.accept(o)
        };
        prepared.run(window, &mut both)?
    };
    csv.finish()
        .and_then(|mut w| w.flush().map_err(SinkError::from))
        .map_err(|e| io_err(&steps_path, e))?;

    let channels_path = out.join("channels.csv");
    let mut w = create(&channels_path)?;
    write_timeseries(recorder.table(), &mut w).map_err(|e| io_err(&channels_path, e))?;
    w.flush().map_err(|e| io_err(&channels_path, e))?;

    let context_path = out.join("context.jsonl");
    let mut w = create(&context_path)?;
    write_context(&window.context_records(), &mut w).map_err(|e| io_err(&context_path, e))?;
    w.flush().map_err(|e| io_err(&context_path, e))?;

    let replay = replay_scenario(window);
    let replay_path = out.join("replay.json");
    write_json(&replay_path, &serde_json::to_value(&replay).expect("scenario serializes"))?;

    let summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name(),
        seed: scenario.seed(),
        strategy,
        start_ns: window.start().0,
        end_ns: window.end().0,
        step_seconds: window.file.step_seconds,
        steps: run.steps,
        cost: run.aggregates.cost,
        final_soc: sim.last_battery().soc,
        battery_capacity_wh: window.battery_capacity() / JOULES_PER_WH,
        fallbacks: run.fallbacks,
        aggregates: run.aggregates,
        maxima: run.maxima,
    };
    write_json(&out.join("summary.json"), &serde_json::to_value(&summary).expect("summary serializes"))?;
    report!(
        "{}: {} steps, cost {}, purchased {} Wh",
        scenario.name(),
        run.steps,
        run.aggregates.cost,
        run.aggregates.purchased_wh
    );
    Ok(())
}

/// A scenario replaying the files written by [`cmd_run`] next to it.
pub fn replay_scenario(original: &Scenario) -> ScenarioFile {
    let src = |_: ()| ReplaySource {
        file: PathBuf::from("channels.csv"),
        boundary_tolerance_seconds: crate::replay::DEFAULT_BOUNDARY_TOLERANCE_SECONDS,
    };
    let f = &original.file;
    ScenarioFile {
        name: format!("{}-replay", f.name),
        seed: f.seed,
        clock: ClockSpec {
            start_ns: f.clock.start_ns,
            resolution_ns: f.clock.resolution_ns,
        },
        horizon_seconds: f.horizon_seconds,
        step_seconds: f.step_seconds,
        subsystem_id: f.subsystem_id,
        output_dir: Some(PathBuf::from("replayed")),
        synthetic: Default::default(),
        prices: f.prices.clone(),
        components: ComponentsSpec {
            power_source: SourceSpec::Replay(src(())),
            load: SourceSpec::Replay(src(())),
            battery: BatterySpec::Replay(ReplayBatterySpec {
                file: PathBuf::from("channels.csv"),
                capacity_wh: original.battery_capacity() / JOULES_PER_WH,
                boundary_tolerance_seconds: crate::replay::DEFAULT_BOUNDARY_TOLERANCE_SECONDS,
            }),
            grid: GridSpec::Replay(src(())),
            inverter: InverterSpec::Replay(src(())),
            context: ContextSpec::Replay(ReplayContextSpec {
                file: PathBuf::from("context.jsonl"),
                filter_subsystem: true,
            }),
        },
        control: f.control.clone(),
        forecast: f.forecast.clone(),
    }
}

/// Compares strategies and writes `running_cost.csv`, `savings.csv` and
/// `comparison.json`.
pub fn cmd_compare(scenario: &Scenario, out: &Path, strategies: &[Strategy]) -> Result<(), CliError> {
    let cmp = compare_strategies(scenario, strategies)?;
    let path = out.join("running_cost.csv");
    cmp.write_running_cost(create(&path)?).map_err(|e| io_err(&path, e))?;
    if let Some(savings) = &cmp.savings {
        let path = out.join("savings.csv");
        savings.write_csv(create(&path)?).map_err(|e| io_err(&path, e))?;
    }
    let runs: Vec<&StrategyRun> = cmp.runs.iter().collect();
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": scenario.name(),
        "seed": scenario.seed(),
        "start_ns": cmp.window.0.0,
        "end_ns": cmp.window.1.0,
        "runs": runs,
        "predictors": cmp.predictors,
    });
    write_json(&out.join("comparison.json"), &summary)?;
    for r in &cmp.runs {
        report!("{}: {:<14} cost {}", scenario.name(), r.strategy.as_str(), r.aggregates.cost);
    }
    Ok(())
}

/// Writes `forecast_eval.csv` (one row per resample and family) and
/// `forecast_summary.csv` (mean RMSE per family).
pub fn cmd_forecast_eval(scenario: &Scenario, out: &Path, families: Option<&[FeatureFamily]>) -> Result<(), CliError> {
    let families = families.unwrap_or(&scenario.file.forecast.families);
    let estimator = estimator_for(scenario);
    let scores = forecast_eval(scenario, families, estimator.as_ref())?;

    let path = out.join("forecast_eval.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let fail = |e: csv::Error| io_err(&path, e);
    w.write_record(["resample", "family", "rmse", "train_count", "test_count"]).map_err(fail)?;
    for s in &scores {
        w.write_record([
            s.resample.to_string(),
            s.family.as_str().to_owned(),
            s.rmse.to_string(),
            s.train_count.to_string(),
            s.test_count.to_string(),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;

    let path = out.join("forecast_summary.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let fail = |e: csv::Error| io_err(&path, e);
    w.write_record(["family", "mean_rmse"]).map_err(fail)?;
    for (family, mean) in mean_rmse(&scores, families) {
        w.write_record([family.as_str().to_owned(), mean.to_string()]).map_err(fail)?;
        report!("{}: {:<9} mean RMSE {mean:.3} W", scenario.name(), family.as_str());
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(())
}

/// Validates each file by extension and prints one line per file.
pub fn cmd_validate(files: &[PathBuf], options: IngestOptions) -> i32 {
    let mut code = EXIT_OK;
    for path in files {
        match validate_file(path, options) {
            Ok(warnings) => {
                report!("PASS {}", path.display());
                for w in warnings {
                    report!("  warning: {w}");
                }
            }
            Err(msg) => {
                println!("FAIL {}: {msg}", path.display());
                code = EXIT_CONFIG;
            }
        }
    }
    code
}

fn validate_file(path: &Path, options: IngestOptions) -> Result<Vec<String>, String> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    if ext == "json" {
        return Scenario::from_path(path).map(|_| Vec::new()).map_err(|e| e.to_string());
    }
    let file = File::open(path).map_err(|e| e.to_string())?;
    let reader = BufReader::new(file);
    match ext {
        "csv" => read_timeseries(reader, options)
            .map(|ing| ing.warnings)
            .map_err(|e| e.to_string()),
        "jsonl" => read_context(reader).map(|_| Vec::new()).map_err(|e| e.to_string()),
        other => Err(format!("unsupported extension '{other}' (expected .csv, .jsonl or .json)")),
    }
}
