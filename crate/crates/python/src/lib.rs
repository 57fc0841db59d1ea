//! Python bindings: `import hrv`.
//!
//! Structured results (critical point, assumption report, scans) are returned
//! as plain dicts built from the same JSON the command-line tool writes.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use hrv_core::levelset::{find_xi_star, trace_level_set, DEFAULT_STEP, NEWTON_TOL};
use hrv_core::mc::{joint_exceedance_prob, simulate_stationary, IsConfig, SampleBatch, SimulationConfig};
use hrv_core::mgf::{check_assumptions, tail_indices, CheckOptions, PhiEvaluator, TailIndices};
use hrv_core::models::{parse_config, read_config, Config};
use hrv_core::renewal::{renewal_measure_estimate, GaussianIncrements, Rect, RenewalConfig};
use hrv_core::tails::{joint_tail_scan, marginal_tail_scan, mixed_moment, parse_t_grid, JointSource};
use hrv_core::ModelSpec;

const ALPHA_TOL: f64 = 1e-12;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(runtime_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn model_of(config: Config) -> PyResult<ModelSpec> {
    match config {
        Config::Model(spec) => Ok(spec),
        Config::Walk { .. } => Err(value_err("expected a model configuration, found a random-walk one")),
    }
}

/// A diagonal recurrence `X = AX + B` with its tail indices.
#[pyclass(module = "hrv", frozen)]
struct Model {
    spec: ModelSpec,
    indices: TailIndices,
}

impl Model {
    fn build(spec: ModelSpec) -> PyResult<Self> {
        let indices = tail_indices(&spec, ALPHA_TOL).map_err(value_err)?;
        Ok(Self { spec, indices })
    }

    fn evaluator(&self) -> PyResult<PhiEvaluator> {
        PhiEvaluator::auto(&self.spec, &self.indices).map_err(value_err)
    }
}

#[pymethods]
impl Model {
    /// Model from a TOML string.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Self::build(model_of(parse_config(text).map_err(value_err)?)?)
    }

    /// Model from a TOML file.
    #[staticmethod]
    fn from_file(path: std::path::PathBuf) -> PyResult<Self> {
        Self::build(model_of(read_config(&path).map_err(value_err)?)?)
    }

    #[getter]
    fn alpha(&self) -> (f64, f64) {
        (self.indices.alpha[0], self.indices.alpha[1])
    }

    #[getter]
    fn dim(&self) -> usize {
        self.indices.coordinates.len()
    }

    /// `(value, stderr)` of `phi(xi)`; the error is zero for exact evaluators.
    fn phi(&self, xi: (f64, f64)) -> PyResult<(f64, f64)> {
        let e = self.evaluator()?.phi([xi.0, xi.1]).map_err(value_err)?;
        Ok((e.value, e.stderr))
    }

    #[pyo3(signature = (tol = NEWTON_TOL))]
    fn critical_point<'py>(&self, py: Python<'py>, tol: f64) -> PyResult<Bound<'py, PyAny>> {
        let cp = find_xi_star(&self.evaluator()?, tol).map_err(runtime_err)?;
        to_py(py, &cp)
    }

    /// Points of the level set `{phi = 1}` from `(1, 0)` to `(0, 1)`.
    #[pyo3(signature = (step = DEFAULT_STEP))]
    fn level_set(&self, step: f64) -> PyResult<Vec<(f64, f64)>> {
        let tr = trace_level_set(&self.evaluator()?, step).map_err(runtime_err)?;
        Ok(tr.points.iter().map(|p| (p[0], p[1])).collect())
    }

    #[pyo3(signature = (n = 200_000, seed = 0))]
    fn check_assumptions<'py>(&self, py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let report = py.detach(|| check_assumptions(&self.spec, &self.indices, &CheckOptions { n, seed }));
        to_py(py, &report)
    }

    #[pyo3(signature = (n, seed = 0, burn_in = None))]
    fn simulate(&self, py: Python<'_>, n: usize, seed: u64, burn_in: Option<usize>) -> PyResult<Samples> {
        let mut cfg = SimulationConfig::new(n, seed);
        if let Some(b) = burn_in {
            cfg.burn_in = b;
        }
        let batch = py
            .detach(|| simulate_stationary(&self.spec, &self.indices, &cfg))
            .map_err(runtime_err)?;
        Ok(Samples { batch })
    }

    /// Importance-sampled `P(X_1 > t, X_2 > eps t)` through the tilted walk.
    #[pyo3(signature = (t, eps = 1.0, paths = 100_000, seed = 0))]
    fn exceedance<'py>(
        &self,
        py: Python<'py>,
        t: f64,
        eps: f64,
        paths: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let ev = self.evaluator()?;
        let cp = find_xi_star(&ev, NEWTON_TOL).map_err(runtime_err)?;
        let est = py
            .detach(|| joint_exceedance_prob(&ev, cp.xi_star, t, eps, &IsConfig { paths, seed }))
            .map_err(runtime_err)?;
        to_py(py, &est)
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(dim={}, alpha=({:.6}, {:.6}))",
            self.dim(),
            self.indices.alpha[0],
            self.indices.alpha[1]
        )
    }
}

/// Stationary draws of `X`.
#[pyclass(module = "hrv", frozen)]
struct Samples {
    batch: SampleBatch,
}

#[pymethods]
impl Samples {
    fn __len__(&self) -> usize {
        self.batch.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.batch.dim()
    }

    fn column(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.batch.dim() {
            return Err(value_err(format!("column {j} out of range")));
        }
        Ok(self.batch.column(j).collect())
    }

    fn rows(&self) -> Vec<Vec<f64>> {
        self.batch.rows().map(<[f64]>::to_vec).collect()
    }

    /// `t P(|X_j|^alpha_j > t)` over a grid such as `"10:1000:7,log"`.
    #[pyo3(signature = (component, t_grid = "10:1000:7,log"))]
    fn marginal_scan<'py>(&self, py: Python<'py>, component: usize, t_grid: &str) -> PyResult<Bound<'py, PyAny>> {
        let grid = parse_t_grid(t_grid).map_err(value_err)?;
        to_py(
            py,
            &marginal_tail_scan(&self.batch, component, &grid).map_err(value_err)?,
        )
    }

    /// Crude `t^{xi_1 + xi_2} P(X_1 > t^{1/alpha_1}, X_2 > t^{1/alpha_2})`.
    #[pyo3(signature = (xi, t_grid = "10:1000:7,log", log_factor = false))]
    fn joint_scan<'py>(
        &self,
        py: Python<'py>,
        xi: (f64, f64),
        t_grid: &str,
        log_factor: bool,
    ) -> PyResult<Bound<'py, PyAny>> {
        let grid = parse_t_grid(t_grid).map_err(value_err)?;
        let scan =
            joint_tail_scan(JointSource::Crude(&self.batch), [xi.0, xi.1], &grid, log_factor).map_err(value_err)?;
        to_py(py, &scan)
    }

    /// Sample estimate of `E|X_1|^{xi_1 alpha_1} |X_2|^{xi_2 alpha_2}` with a stability flag.
    fn mixed_moment<'py>(&self, py: Python<'py>, xi: (f64, f64)) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &mixed_moment(&self.batch, [xi.0, xi.1]))
    }
}

/// Renewal measure of a planar Gaussian walk over `[lo, hi]` shifted along the drift.
#[pyfunction]
#[pyo3(signature = (mean, cov, lo, hi, t_grid = "100:1000:2,log", paths = 100_000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn renewal_estimate<'py>(
    py: Python<'py>,
    mean: (f64, f64),
    cov: ((f64, f64), (f64, f64)),
    lo: (f64, f64),
    hi: (f64, f64),
    t_grid: &str,
    paths: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let law = GaussianIncrements::new(
        [mean.0, mean.1],
        [[cov.0 .0, cov.0 .1], [cov.1 .0, cov.1 .1]],
        [0.0, 0.0],
    )
    .map_err(value_err)?;
    let region = Rect::new([lo.0, lo.1], [hi.0, hi.1]).map_err(value_err)?;
    let grid = parse_t_grid(t_grid).map_err(value_err)?;
    let est = py
        .detach(|| renewal_measure_estimate(&law, region, &grid, &RenewalConfig::new(paths, seed)))
        .map_err(value_err)?;
    to_py(py, &est)
}

#[pymodule]
fn hrv(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Model>()?;
    m.add_class::<Samples>()?;
    m.add_function(wrap_pyfunction!(renewal_estimate, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
