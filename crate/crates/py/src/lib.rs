//! Python bindings for `hypermorl`: preferences, dominance and hypervolume,
//! oracle fronts, training and checkpoint evaluation.

use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyNotImplementedError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hypermorl::cli::{cmd_train, TrainSummary};
use hypermorl::error::Error;
use hypermorl::hypernet::hypernet_forward;
use hypermorl::io::{parse_config, Checkpoint};
use hypermorl::metrics::{self, evaluate_hypernet, FrontEntry};
use hypermorl::momdp::{self, Preference};
use hypermorl::nn::FlatParams;
use hypermorl::trainer::{self, TrainConfig};

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } | Error::Format(_) => {
            PyValueError::new_err(msg)
        }
        Error::NonFinite(_) => PyArithmeticError::new_err(msg),
        Error::Unsupported(_) => PyNotImplementedError::new_err(msg),
        Error::Io(_) => PyOSError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn pref(weights: Vec<f64>) -> PyResult<Preference> {
    Preference::new(weights).map_err(to_py)
}

type FrontRows = Vec<(Vec<f64>, Vec<f64>, bool)>;

fn rows(entries: &[FrontEntry]) -> FrontRows {
    entries
        .iter()
        .map(|e| (e.preference.weights().to_vec(), e.objectives.clone(), e.dominated))
        .collect()
}

/// Centre of the (m-1)-simplex.
#[pyfunction]
fn uniform_preference(m: usize) -> PyResult<Vec<f64>> {
    Ok(momdp::uniform_preference(m).map_err(to_py)?.into())
}

/// Uniform lattice on the simplex with spacing 1/resolution.
#[pyfunction]
fn preference_grid(m: usize, resolution: usize) -> PyResult<Vec<Vec<f64>>> {
    Ok(momdp::preference_grid(m, resolution)
        .map_err(to_py)?
        .into_iter()
        .map(Vec::from)
        .collect())
}

/// Discounted per-objective return of a reward sequence.
#[pyfunction]
fn discounted_return(rewards: Vec<Vec<f64>>, gamma: f64) -> PyResult<Vec<f64>> {
    let mut t = momdp::Trajectory::new();
    for r in rewards {
        t.push(Vec::new(), Vec::new(), 0.0, r);
    }
    momdp::discounted_return(&t, gamma).map_err(to_py)
}

#[pyfunction]
fn dominates(a: Vec<f64>, b: Vec<f64>) -> PyResult<bool> {
    metrics::dominates(&a, &b).map_err(to_py)
}

/// `flags[i]` is true iff some other point dominates `points[i]`.
#[pyfunction]
fn dominated_flags(points: Vec<Vec<f64>>) -> PyResult<Vec<bool>> {
    metrics::dominated_flags(&points).map_err(to_py)
}

/// Exact hypervolume for 2 or 3 objectives: `(hv, counted, excluded)`.
#[pyfunction]
fn hypervolume(points: Vec<Vec<f64>>, reference: Vec<f64>) -> PyResult<(f64, usize, usize)> {
    let r = metrics::hypervolume_report(&points, &reference).map_err(to_py)?;
    Ok((r.hypervolume, r.counted, r.excluded))
}

#[pyfunction]
fn hvip(hv_x: f64, hv_0: f64) -> PyResult<f64> {
    metrics::hvip(hv_x, hv_0).map_err(to_py)
}

/// `(G_W, G_PSL)` for a step budget.
#[pyfunction]
fn compute_stage_iterations(total_steps: u64, alpha: f64, k: usize, t_tra: u64) -> PyResult<(u64, u64)> {
    trainer::compute_stage_iterations(total_steps, alpha, k, t_tra).map_err(to_py)
}

/// Scores of parameter vectors on their top principal directions.
#[pyfunction]
#[pyo3(signature = (thetas, dim = 2))]
fn project_front_params(thetas: Vec<Vec<f64>>, dim: usize) -> PyResult<Vec<Vec<f64>>> {
    let t: Vec<FlatParams> = thetas.into_iter().map(FlatParams).collect();
    metrics::project_front_params(&t, dim).map_err(to_py)
}

/// A validated run config, parsed from TOML text.
#[pyclass(frozen)]
struct Config {
    inner: TrainConfig,
}

#[pymethods]
impl Config {
    #[new]
    fn new(toml_text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config(toml_text).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: hypermorl::io::load_config(&path).map_err(to_py)?,
        })
    }

    #[getter]
    fn num_objectives(&self) -> PyResult<usize> {
        self.inner.num_objectives().map_err(to_py)
    }

    #[getter]
    fn stage_iterations(&self) -> PyResult<(u64, u64)> {
        let t = &self.inner.training;
        trainer::compute_stage_iterations(t.total_steps, t.alpha, t.k, self.inner.trajectory_steps()).map_err(to_py)
    }

    #[getter]
    fn reference_point(&self) -> PyResult<Vec<f64>> {
        self.inner.reference_point().map_err(to_py)
    }

    /// Copy with a different seed.
    fn with_seed(&self, seed: u64) -> Self {
        let mut inner = self.inner.clone();
        inner.training.seed = seed;
        Self { inner }
    }

    /// Oracle front on the evaluation grid (or `resolution`).
    #[pyo3(signature = (resolution = None))]
    fn oracle_front(&self, resolution: Option<usize>) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
        let m = self.num_objectives()?;
        let grid =
            momdp::preference_grid(m, resolution.unwrap_or(self.inner.evaluation.grid_resolution)).map_err(to_py)?;
        let front = self.inner.environment.oracle_front(&grid).map_err(to_py)?;
        Ok(front.entries.into_iter().map(|(w, j)| (w.into(), j)).collect())
    }
}

fn summary_dict<'py>(py: Python<'py>, s: &TrainSummary) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("seed", s.seed)?;
    d.set_item("d", s.d)?;
    d.set_item("alpha", s.alpha)?;
    d.set_item("hypervolume", s.hypervolume)?;
    d.set_item("counted", s.counted)?;
    d.set_item("excluded", s.excluded)?;
    d.set_item("non_dominated", s.non_dominated)?;
    d.set_item("reference_point", s.reference_point.clone())?;
    d.set_item("env_steps", s.env_steps)?;
    d.set_item("warmup_iterations", s.warmup_iterations)?;
    d.set_item("psl_iterations", s.psl_iterations)?;
    d.set_item("rng_digest", s.rng_digest.clone())?;
    Ok(d)
}

/// Trains and writes the standard output layout under `out`; returns the
/// run summary as a dict. The GIL is released while training.
#[pyfunction]
fn train<'py>(py: Python<'py>, config: &Config, out: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let summary = py.detach(move || cmd_train(&cfg, &out)).map_err(to_py)?;
    summary_dict(py, &summary)
}

/// A saved hypernet.
#[pyclass(frozen)]
struct HypernetCheckpoint {
    inner: Checkpoint,
}

#[pymethods]
impl HypernetCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Checkpoint::load(&path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py)
    }

    #[getter]
    fn num_objectives(&self) -> usize {
        self.inner.phi.num_objectives()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.phi.n
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.phi.d
    }

    #[getter]
    fn training_step(&self) -> u64 {
        self.inner.training_step
    }

    #[getter]
    fn w_is_zero(&self) -> bool {
        self.inner.phi.w_is_zero()
    }

    /// Policy parameters `theta = W f_mu(w) + b`.
    fn generate(&self, preference: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(hypernet_forward(&self.inner.phi, &pref(preference)?)
            .map_err(to_py)?
            .into_inner())
    }

    /// Front on a preference grid as `(preference, objectives, dominated)`.
    #[pyo3(signature = (config, resolution = None))]
    fn evaluate(&self, py: Python<'_>, config: &Config, resolution: Option<usize>) -> PyResult<FrontRows> {
        let cfg = &config.inner;
        self.inner.check_against(cfg).map_err(to_py)?;
        let m = cfg.num_objectives().map_err(to_py)?;
        let grid = momdp::preference_grid(m, resolution.unwrap_or(cfg.evaluation.grid_resolution)).map_err(to_py)?;
        let env = cfg.environment.build().map_err(to_py)?;
        let ck = &self.inner;
        let front = py
            .detach(|| evaluate_hypernet(&ck.phi, &ck.policy, &env, &grid, cfg.evaluation.settings()))
            .map_err(to_py)?;
        Ok(rows(&front.entries))
    }
}

#[pymodule]
fn hypermorl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(uniform_preference, m)?)?;
    m.add_function(wrap_pyfunction!(preference_grid, m)?)?;
    m.add_function(wrap_pyfunction!(discounted_return, m)?)?;
    m.add_function(wrap_pyfunction!(dominates, m)?)?;
    m.add_function(wrap_pyfunction!(dominated_flags, m)?)?;
    m.add_function(wrap_pyfunction!(hypervolume, m)?)?;
    m.add_function(wrap_pyfunction!(hvip, m)?)?;
    m.add_function(wrap_pyfunction!(compute_stage_iterations, m)?)?;
    m.add_function(wrap_pyfunction!(project_front_params, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_class::<Config>()?;
    m.add_class::<HypernetCheckpoint>()?;
    Ok(())
}
