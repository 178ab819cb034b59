//! Python bindings for the population scheduler: construct a benchmark
//! objective, run a seeded experiment, and read back the summary and the
//! recorded schedule.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bgpbt::{RawValue, SchedulerConfig, SyntheticObjective, TReadySchedule};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A black-box training objective over a mixed search space.
#[pyclass(frozen)]
struct Objective {
    inner: Box<dyn bgpbt::Objective>,
}

#[pymethods]
impl Objective {
    /// Quadratic bowl with a drifting optimum over `n_continuous` dims.
    #[staticmethod]
    #[pyo3(signature = (n_continuous=2, drift_rate=0.05, sigma=0.05, world_seed=0))]
    fn drifting_quadratic(
        n_continuous: usize,
        drift_rate: f64,
        sigma: f64,
        world_seed: u64,
    ) -> PyResult<Self> {
        let inner = SyntheticObjective::drifting_quadratic(n_continuous, drift_rate, sigma, world_seed)
            .map_err(value_error)?;
        Ok(Objective { inner: Box::new(inner) })
    }

    /// Drifting mixed-space benchmark gated by a categorical choice.
    #[staticmethod]
    #[pyo3(signature = (n_categories=3, drift_rate=0.05, sigma=0.05, world_seed=0))]
    fn categorical_gated(
        n_categories: usize,
        drift_rate: f64,
        sigma: f64,
        world_seed: u64,
    ) -> PyResult<Self> {
        let inner = SyntheticObjective::categorical_gated(n_categories, drift_rate, sigma, world_seed)
            .map_err(value_error)?;
        Ok(Objective { inner: Box::new(inner) })
    }

    /// Stationary mixed-space benchmark (continuous, ordinal, categorical).
    #[staticmethod]
    #[pyo3(signature = (sigma=0.1, world_seed=0))]
    fn stationary_mixed(sigma: f64, world_seed: u64) -> PyResult<Self> {
        let inner = SyntheticObjective::stationary_mixed(sigma, world_seed).map_err(value_error)?;
        Ok(Objective { inner: Box::new(inner) })
    }

    /// Training simulator with moving optimal learning rate and batch size
    /// and architecture-dependent capacity.
    #[staticmethod]
    #[pyo3(signature = (sigma=0.01, process_noise=0.05))]
    fn agent_sim(sigma: f64, process_noise: f64) -> Self {
        let params = bgpbt::SimParams {
            sigma,
            process_noise,
            ..bgpbt::SimParams::default()
        };
        Objective {
            inner: Box::new(bgpbt::AgentSimObjective::new(params)),
        }
    }

    fn name(&self) -> &str {
        self.inner.name()
    }

    /// The search space as a TOML dimension list.
    fn space_toml(&self) -> String {
        self.inner.space().to_toml_string()
    }

    fn __repr__(&self) -> String {
        format!(
            "Objective(name='{}', dims={})",
            self.inner.name(),
            self.inner.space().n_dims()
        )
    }
}

/// Summary and schedule of one finished run.
#[pyclass(frozen)]
struct RunResult {
    #[pyo3(get)]
    best_return: f64,
    #[pyo3(get)]
    best_tick: u64,
    #[pyo3(get)]
    best_agent_id: usize,
    #[pyo3(get)]
    n_ticks: u64,
    #[pyo3(get)]
    n_restarts: u64,
    #[pyo3(get)]
    n_generations: u32,
    #[pyo3(get)]
    total_steps: u64,
    best_config: BTreeMap<String, RawValue>,
    best_so_far: Vec<f64>,
    jsonl: String,
}

#[pymethods]
impl RunResult {
    /// Decoded config of the best observation.
    #[getter]
    fn best_config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let dict = PyDict::new(py);
        for (name, value) in &self.best_config {
            match value {
                RawValue::Float(v) => dict.set_item(name, *v)?,
                RawValue::Str(s) => dict.set_item(name, s)?,
            }
        }
        Ok(dict)
    }

    /// Best return seen up to each tick.
    #[getter]
    fn best_so_far(&self) -> Vec<f64> {
        self.best_so_far.clone()
    }

    /// The full schedule as line-delimited JSON, one row per agent-tick.
    fn schedule_jsonl(&self) -> &str {
        &self.jsonl
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(best_return={:.6}, n_ticks={}, n_generations={})",
            self.best_return, self.n_ticks, self.n_generations
        )
    }
}

/// Run the full population scheduler on `objective` with a fixed seed.
///
/// Every keyword defaults to the library's default experiment settings;
/// `t_ready` is the constant synchronization interval in objective units.
#[pyfunction]
#[pyo3(signature = (
    objective, seed, *,
    population=None, q_percent=None, t_ready=None, t_max_units=None,
    init_pool=None, generation_units=None, patience=None, max_gp_points=None,
    n_candidates=None, n_bo=None, enable_exploit=None, enable_bo=None,
    enable_trust_region=None, enable_nas=None,
))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    objective: &Objective,
    seed: u64,
    population: Option<usize>,
    q_percent: Option<f64>,
    t_ready: Option<f64>,
    t_max_units: Option<u64>,
    init_pool: Option<usize>,
    generation_units: Option<u64>,
    patience: Option<u32>,
    max_gp_points: Option<usize>,
    n_candidates: Option<usize>,
    n_bo: Option<usize>,
    enable_exploit: Option<bool>,
    enable_bo: Option<bool>,
    enable_trust_region: Option<bool>,
    enable_nas: Option<bool>,
) -> PyResult<RunResult> {
    let mut config = SchedulerConfig::default();
    if let Some(v) = population {
        config.population = v;
    }
    if let Some(v) = q_percent {
        config.q_percent = v;
    }
    if let Some(v) = t_ready {
        config.t_ready = TReadySchedule::constant(v);
    }
    if let Some(v) = t_max_units {
        config.t_max_units = v;
    }
    if let Some(v) = init_pool {
        config.init_pool = v;
    }
    if let Some(v) = generation_units {
        config.generation_units = v;
    }
    if let Some(v) = patience {
        config.patience = v;
    }
    if let Some(v) = max_gp_points {
        config.max_gp_points = v;
    }
    if let Some(v) = n_candidates {
        config.n_candidates = v;
    }
    if let Some(v) = n_bo {
        config.n_bo = v;
    }
    if let Some(v) = enable_exploit {
        config.enable_exploit = v;
    }
    if let Some(v) = enable_bo {
        config.enable_bo = v;
    }
    if let Some(v) = enable_trust_region {
        config.enable_trust_region = v;
    }
    if let Some(v) = enable_nas {
        config.enable_nas = v;
    }
    config.validate().map_err(value_error)?;

    let out = py
        .detach(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            bgpbt::run(&config, objective.inner.as_ref(), &mut rng)
        })
        .map_err(value_error)?;

    let mut jsonl = Vec::new();
    out.record
        .write_jsonl(&mut jsonl)
        .map_err(value_error)?;
    let s = out.summary;
    Ok(RunResult {
        best_return: s.best_return,
        best_tick: s.best_tick,
        best_agent_id: s.best_agent_id,
        n_ticks: s.n_ticks,
        n_restarts: s.n_restarts,
        n_generations: s.n_generations,
        total_steps: s.total_steps,
        best_config: s.best_config,
        best_so_far: s.best_so_far,
        jsonl: String::from_utf8(jsonl).expect("schedule rows are UTF-8"),
    })
}

/// Spearman rank correlation; None for mismatched or too-short inputs.
#[pyfunction]
fn spearman(a: Vec<f64>, b: Vec<f64>) -> Option<f64> {
    bgpbt::spearman(&a, &b)
}

#[pymodule]
fn bgpbt_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Objective>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    Ok(())
}
