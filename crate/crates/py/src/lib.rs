//! Python bindings: the compression operators, schedule construction, bound
//! evaluators, and full training runs.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use adaptopk::engine::{self, TrainConfig};
use adaptopk::harness::{self, ExperimentSpec};
use adaptopk::problems::QuadraticProblem;
use adaptopk::schedule;
use adaptopk::sparsify;

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Sparse gradient: parallel `indices`/`values` arrays over `dim` coordinates.
#[pyclass(name = "SparseGradient", skip_from_py_object)]
#[derive(Clone)]
struct PySparseGradient {
    inner: sparsify::SparseGradient,
}

#[pymethods]
impl PySparseGradient {
    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn indices(&self) -> Vec<usize> {
        self.inner.entries().iter().map(|&(i, _)| i).collect()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.entries().iter().map(|&(_, v)| v).collect()
    }

    fn densify(&self) -> Vec<f64> {
        sparsify::densify(&self.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SparseGradient(dim={}, nnz={})",
            self.inner.dim(),
            self.inner.len()
        )
    }
}

/// Keep the k largest-magnitude coordinates (ties keep the lower index).
#[pyfunction]
fn top_k(v: Vec<f64>, k: usize) -> PyResult<PySparseGradient> {
    Ok(PySparseGradient {
        inner: sparsify::top_k(&v, k).map_err(value_err)?,
    })
}

/// Squared norm of what Top-K drops from `v` at level `k`.
#[pyfunction]
fn compression_error_sq(v: Vec<f64>, k: usize) -> PyResult<f64> {
    sparsify::compression_error_sq(&v, k).map_err(value_err)
}

/// Error-compensated Top-K: returns `(sparse, new_residual)`.
#[pyfunction]
fn ec_compress(v: Vec<f64>, residual: Vec<f64>, k: usize) -> PyResult<(PySparseGradient, Vec<f64>)> {
    let mem = sparsify::ErrorMemory::from_residual(residual);
    let (out, new_mem) = sparsify::ec_compress(&v, &mem, k).map_err(value_err)?;
    Ok((
        PySparseGradient { inner: out },
        new_mem.residual().to_vec(),
    ))
}

/// Constants feeding the bound evaluators.
#[pyclass(name = "BoundParams", skip_from_py_object)]
#[derive(Clone)]
struct PyBoundParams {
    inner: schedule::BoundParams,
}

#[pymethods]
impl PyBoundParams {
    #[new]
    #[pyo3(signature = (l, mu, sigma_sq, eta, d, k, rounds, f0, f_star = 0.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        l: f64,
        mu: f64,
        sigma_sq: f64,
        eta: f64,
        d: usize,
        k: usize,
        rounds: usize,
        f0: f64,
        f_star: f64,
    ) -> PyResult<Self> {
        let inner = schedule::BoundParams {
            l,
            mu,
            sigma_sq,
            eta,
            d,
            k,
            rounds,
            f0,
            f_star,
        };
        inner.validate().map_err(value_err)?;
        Ok(Self { inner })
    }

    fn alpha_beta(&self) -> (f64, f64) {
        schedule::alpha_beta(&self.inner)
    }

    fn contraction(&self) -> PyResult<f64> {
        schedule::contraction(&self.inner).map_err(value_err)
    }

    fn vanilla_bound(&self) -> PyResult<f64> {
        schedule::vanilla_bound(&self.inner).map_err(value_err)
    }

    fn theorem1_bound(&self, sched: &PySparsitySchedule, grad_norms_sq: Vec<f64>) -> PyResult<f64> {
        schedule::theorem1_bound(&self.inner, &sched.inner, &grad_norms_sq).map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

/// Two-level per-round sparsity plan.
#[pyclass(name = "SparsitySchedule", skip_from_py_object)]
#[derive(Clone)]
struct PySparsitySchedule {
    inner: schedule::SparsitySchedule,
}

#[pymethods]
impl PySparsitySchedule {
    #[getter]
    fn per_round_k(&self) -> Vec<usize> {
        self.inner.per_round_k.clone()
    }

    #[getter]
    fn budget(&self) -> usize {
        self.inner.budget
    }

    #[getter]
    fn t_hat(&self) -> usize {
        self.inner.t_hat
    }

    #[getter]
    fn adjustment(&self) -> usize {
        self.inner.adjustment
    }

    #[getter]
    fn low_start(&self) -> usize {
        self.inner.low_start
    }

    #[getter]
    fn low_end(&self) -> usize {
        self.inner.low_end
    }

    fn total(&self) -> usize {
        self.inner.total()
    }

    fn __repr__(&self) -> String {
        format!(
            "SparsitySchedule(rounds={}, budget={}, t_hat={}, m={})",
            self.inner.rounds(),
            self.inner.budget,
            self.inner.t_hat,
            self.inner.adjustment
        )
    }
}

/// Closed-form transition point; `None` when `beta == 0` (monotone case).
#[pyfunction]
fn transition_point(alpha: f64, beta: f64, b: f64) -> PyResult<Option<usize>> {
    match schedule::transition_point(alpha, beta, b).map_err(value_err)? {
        schedule::TransitionPoint::At(t) => Ok(Some(t)),
        schedule::TransitionPoint::Monotone => Ok(None),
    }
}

/// Build the two-level schedule for `rounds` rounds around `t_hat`.
#[pyfunction]
fn build_schedule(
    rounds: usize,
    k: usize,
    gamma: f64,
    t_hat: usize,
    d: usize,
) -> PyResult<PySparsitySchedule> {
    Ok(PySparsitySchedule {
        inner: schedule::build_schedule(rounds, k, gamma, t_hat, d).map_err(value_err)?,
    })
}

/// The envelope-weighted gap between the adaptive and flat bounds.
#[pyfunction]
fn adaptive_gap_term(
    sched: &PySparsitySchedule,
    alpha: f64,
    beta: f64,
    b: f64,
    eta: f64,
    d: usize,
) -> f64 {
    schedule::adaptive_gap_term(&sched.inner, alpha, beta, b, eta, d)
}

/// Envelope on the expected squared gradient norm at round `t >= 1`.
#[pyfunction]
fn lemma2_envelope(t: usize, alpha: f64, beta: f64) -> PyResult<f64> {
    schedule::lemma2_envelope(t, alpha, beta).map_err(value_err)
}

fn metrics_to_dict<'py>(
    py: Python<'py>,
    metrics: &engine::RunMetrics,
) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item(
        "k_t",
        metrics.records.iter().map(|r| r.k_t).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "loss",
        metrics.records.iter().map(|r| r.loss).collect::<Vec<_>>(),
    )?;
    out.set_item(
        "grad_norm_sq",
        metrics
            .records
            .iter()
            .map(|r| r.grad_norm_sq)
            .collect::<Vec<_>>(),
    )?;
    out.set_item(
        "test_acc",
        metrics
            .records
            .iter()
            .map(|r| r.test_acc)
            .collect::<Vec<_>>(),
    )?;
    out.set_item("final_loss", metrics.final_loss)?;
    out.set_item("final_accuracy", metrics.final_accuracy)?;
    out.set_item("total_coords", metrics.total_coords)?;
    out.set_item("total_bits", metrics.total_bits)?;
    out.set_item(
        "schedule",
        PySparsitySchedule {
            inner: metrics.schedule.clone(),
        }
        .into_pyobject(py)?,
    )?;
    Ok(out)
}

/// Train on the synthetic quadratic and return per-round metrics.
///
/// `config` is a JSON object with the training keys (`rounds`, `workers`,
/// `eta`, `ratio`, `gamma`, `compressor`, `seed`, ...).
#[pyfunction]
#[pyo3(signature = (config, d = 200, lambda_ = 1.0, sigma_sq = 0.5, problem_seed = 7))]
fn run_quadratic<'py>(
    py: Python<'py>,
    config: &str,
    d: usize,
    lambda_: f64,
    sigma_sq: f64,
    problem_seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: TrainConfig = serde_json::from_str(config).map_err(value_err)?;
    let problem = QuadraticProblem::new(d, lambda_, sigma_sq, problem_seed);
    let metrics = engine::run_training(&cfg, &problem)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    metrics_to_dict(py, &metrics)
}

/// Run a full experiment described by an `ExperimentSpec` JSON document and
/// return `{arm: {seed: {final_loss, final_accuracy, total_coords}}}`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, spec_json: &str) -> PyResult<Bound<'py, PyDict>> {
    let spec = ExperimentSpec::from_json(spec_json).map_err(value_err)?;
    let source = harness::load_source(&spec.problem).map_err(value_err)?;
    let runs = harness::run_all(&source, &spec.train, &spec.arms, &spec.seeds)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let out = PyDict::new(py);
    for run in &runs {
        let arm_key = run.arm.name();
        let arm_dict: Bound<'py, PyDict> = match out.get_item(&arm_key)? {
            Some(existing) => existing.cast_into()?,
            None => {
                let d = PyDict::new(py);
                out.set_item(&arm_key, &d)?;
                d
            }
        };
        let entry = PyDict::new(py);
        entry.set_item("final_loss", run.metrics.final_loss)?;
        entry.set_item("final_accuracy", run.metrics.final_accuracy)?;
        entry.set_item("total_coords", run.metrics.total_coords)?;
        arm_dict.set_item(run.seed, entry)?;
    }
    Ok(out)
}

/// Names of the available comparison arms.
#[pyfunction]
fn arm_names() -> Vec<String> {
    ["none", "topk_fixed", "adaptopk", "topk_fixed+ec", "adaptopk+ec"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[pymodule]
fn adaptopk_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySparseGradient>()?;
    m.add_class::<PyBoundParams>()?;
    m.add_class::<PySparsitySchedule>()?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add_function(wrap_pyfunction!(compression_error_sq, m)?)?;
    m.add_function(wrap_pyfunction!(ec_compress, m)?)?;
    m.add_function(wrap_pyfunction!(transition_point, m)?)?;
    m.add_function(wrap_pyfunction!(build_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(adaptive_gap_term, m)?)?;
    m.add_function(wrap_pyfunction!(lemma2_envelope, m)?)?;
    m.add_function(wrap_pyfunction!(run_quadratic, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(arm_names, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
