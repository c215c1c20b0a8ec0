//! Python bindings for the cemsim simulator.
//!
//! Results cross the boundary as plain dicts and lists built from the same
//! serde representations the CLI writes, so the two stay in step.

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyList;

use cemsim_core::control::{solve_charging as solve, ChargingProblem};
use cemsim_core::experiment::{
    compare_strategies, estimator_for, forecast_eval as evaluate, train_for, ExperimentError,
    PreparedRun, Strategy,
};
use cemsim_core::forecast::{estimate_effort_heuristic, mean_rmse, FeatureFamily};
use cemsim_core::models::{BatteryLinear as CoreBattery, BatteryLinearConfig};
use cemsim_core::records::{BatteryMode, BatteryStepInput};
use cemsim_core::scenario::{Scenario as CoreScenario, ScenarioFile};
use cemsim_core::units::JOULES_PER_WH;
use cemsim_core::{context_query as query, ContextRecord, Timestamp};

fn to_py(py: Python<'_>, value: &impl serde::Serialize) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn experiment_err(e: ExperimentError) -> PyErr {
    match e.exit_code() {
        1 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A validated scenario with its input files loaded.
///
///     s = Scenario.from_file("scenarios/minimal.json")
///     s.run("mpc-perfect")["aggregates"]["cost"]
#[pyclass(module = "cemsim")]
struct Scenario {
    inner: CoreScenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        CoreScenario::from_path(&path)
            .map(|inner| Scenario { inner })
            .map_err(value_err)
    }

    /// Parses scenario JSON; relative input paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir=None))]
    fn from_json(text: &str, base_dir: Option<PathBuf>) -> PyResult<Self> {
        let base = base_dir.unwrap_or_else(|| PathBuf::from("."));
        let file = ScenarioFile::parse(text, &base.join("<string>")).map_err(value_err)?;
        CoreScenario::new(file, base)
            .map(|inner| Scenario { inner })
            .map_err(value_err)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_owned()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.set_seed(seed);
    }

    #[getter]
    fn start_ns(&self) -> u64 {
        self.inner.start().as_nanos()
    }

    #[getter]
    fn end_ns(&self) -> u64 {
        self.inner.end().as_nanos()
    }

    /// The scenario as it would be written to disk.
    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.file)
    }

    /// Runs one strategy over the test window and returns its totals plus
    /// the cumulative cost after every step.
    #[pyo3(signature = (strategy="default"))]
    fn run(&self, py: Python<'_>, strategy: &str) -> PyResult<Py<PyAny>> {
        let strategy: Strategy = strategy.parse().map_err(value_err)?;
        let scenario = &self.inner;
        let (run, soc) = py
            .detach(|| {
                let est = estimator_for(scenario);
                let trained = train_for(scenario, &[strategy], est.as_ref())?;
                let prepared = PreparedRun::new(&trained.test, strategy, trained.predictor_for(strategy), est)?;
                let (run, sim) = prepared.run(&trained.test, &mut Vec::new())?;
                Ok::<_, ExperimentError>((run, sim.last_battery().soc))
            })
            .map_err(experiment_err)?;
        let out = to_py(py, &run)?;
        let dict = out.bind(py);
        dict.set_item("final_soc", soc)?;
        dict.set_item("running_cost", PyList::new(py, &run.running_cost)?)?;
        Ok(out)
    }

    /// Runs several strategies on the same window; defaults to all four.
    #[pyo3(signature = (strategies=None))]
    fn compare(&self, py: Python<'_>, strategies: Option<Vec<String>>) -> PyResult<Py<PyAny>> {
        let list: Vec<Strategy> = match strategies {
            Some(names) => names.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(value_err)?,
            None => Strategy::ALL.to_vec(),
        };
        let scenario = &self.inner;
        let cmp = py
            .detach(|| compare_strategies(scenario, &list))
            .map_err(experiment_err)?;
        let report = serde_json::json!({
            "window_ns": [cmp.window.0.as_nanos(), cmp.window.1.as_nanos()],
            "runs": cmp.runs,
            "savings": cmp.savings,
        });
        to_py(py, &report)
    }

    /// Mean forecast RMSE per feature family, W.
    #[pyo3(signature = (families=None))]
    fn forecast_eval(&self, py: Python<'_>, families: Option<Vec<String>>) -> PyResult<Vec<(String, f64)>> {
        let fams: Vec<FeatureFamily> = match families {
            Some(names) => names.iter().map(|s| s.parse()).collect::<Result<_, _>>().map_err(value_err)?,
            None => self.inner.file.forecast.families.clone(),
        };
        let scenario = &self.inner;
        let scores = py
            .detach(|| evaluate(scenario, &fams, estimator_for(scenario).as_ref()))
            .map_err(experiment_err)?;
        Ok(mean_rmse(&scores, &fams)
            .into_iter()
            .map(|(f, m)| (f.as_str().to_owned(), m))
            .collect())
    }

    fn __repr__(&self) -> String {
        format!("Scenario(name={:?}, seed={})", self.inner.name(), self.inner.seed())
    }
}

/// Linear battery with charge/discharge efficiencies.
#[pyclass(module = "cemsim")]
struct BatteryLinear {
    inner: CoreBattery,
}

#[pymethods]
impl BatteryLinear {
    #[new]
    #[pyo3(signature = (capacity_wh, eta_charge=1.0, eta_discharge=1.0, nominal_voltage=51.2, initial_soc=0.5))]
    fn new(capacity_wh: f64, eta_charge: f64, eta_discharge: f64, nominal_voltage: f64, initial_soc: f64) -> PyResult<Self> {
        let config = BatteryLinearConfig {
            capacity: capacity_wh * JOULES_PER_WH,
            eta_charge,
            eta_discharge,
            nominal_voltage,
            initial_soc,
        };
        CoreBattery::new(config).map(|inner| BatteryLinear { inner }).map_err(value_err)
    }

    #[getter]
    fn soc(&self) -> f64 {
        self.inner.soc()
    }

    /// Stored energy, Wh.
    #[getter]
    fn energy_wh(&self) -> f64 {
        self.inner.energy() / JOULES_PER_WH
    }

    /// Advances by `seconds` in `mode` ("idle", "charge", "discharge") at
    /// `current` amperes.
    #[pyo3(signature = (mode, current, seconds))]
    fn step(&mut self, py: Python<'_>, mode: &str, current: f64, seconds: f64) -> PyResult<Py<PyAny>> {
        let mode: BatteryMode = mode.parse().map_err(value_err)?;
        if !(current >= 0.0 && seconds > 0.0) {
            return Err(PyValueError::new_err("current must be >= 0 and seconds > 0"));
        }
        let result = self.inner.advance(seconds, &BatteryStepInput { mode, current });
        to_py(py, &result)
    }
}

/// Optimal grid purchases for a known horizon. Powers in W, capacity in Wh.
#[pyfunction]
#[pyo3(signature = (prices, load, pv, step_seconds, capacity_wh, soc_initial, soc_min=0.0, soc_max=1.0, max_grid_power=None))]
#[allow(clippy::too_many_arguments)]
fn solve_charging(
    py: Python<'_>,
    prices: Vec<f64>,
    load: Vec<f64>,
    pv: Vec<f64>,
    step_seconds: f64,
    capacity_wh: f64,
    soc_initial: f64,
    soc_min: f64,
    soc_max: f64,
    max_grid_power: Option<f64>,
) -> PyResult<Py<PyAny>> {
    let problem = ChargingProblem {
        step_seconds,
        prices,
        load,
        pv,
        capacity: capacity_wh * JOULES_PER_WH,
        soc_min,
        soc_max,
        soc_initial,
        max_grid_power,
    };
    let plan = solve(&problem).map_err(value_err)?;
    to_py(py, &plan)
}

/// Records visible at `now_ns`: logged by then and not yet over.
#[pyfunction]
fn context_query(py: Python<'_>, records: &Bound<'_, PyAny>, now_ns: u64) -> PyResult<Py<PyAny>> {
    let records: Vec<ContextRecord> = from_py(records)?;
    for (i, r) in records.iter().enumerate() {
        r.validate().map_err(|e| PyValueError::new_err(format!("record {i}: {e}")))?;
    }
    to_py(py, &query(&records, Timestamp(now_ns)))
}

/// Keyword-based effort of a job description.
#[pyfunction]
fn estimate_effort(text: &str) -> f64 {
    estimate_effort_heuristic(text)
}

#[pymodule]
fn cemsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<BatteryLinear>()?;
    m.add_function(wrap_pyfunction!(solve_charging, m)?)?;
    m.add_function(wrap_pyfunction!(context_query, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_effort, m)?)?;
    m.add("STRATEGIES", Strategy::ALL.map(|s| s.as_str()).to_vec())?;
    Ok(())
}
