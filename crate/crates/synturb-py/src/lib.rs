//! Python bindings for the synturb toolkit. Exposes the closed-form
//! exponent and regime calculators, the limit-diffusion oracle, exact
//! structure functions, and the preset experiment runner.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};

use synturb::kraichnan::KraichnanOracle;
use synturb::linalg::DynMat;
use synturb::pairs::{log_sample_grid, msd};
use synturb::params::{self, make_params, SpectrumParams};
use synturb::runner;

fn to_py_err(e: synturb::error::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mat_to_rows(m: &DynMat) -> Vec<Vec<f64>> {
    (0..m.dim).map(|i| (0..m.dim).map(|j| m.get(i, j)).collect()).collect()
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        serde_json::Value::Null => py.None().into_bound(py),
        serde_json::Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        serde_json::Value::String(s) => PyString::new(py, s).into_any(),
        serde_json::Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        serde_json::Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, val) in map {
                dict.set_item(key, json_to_py(py, val)?)?;
            }
            dict.into_any()
        }
    })
}

fn build_params(
    alpha: f64,
    beta: f64,
    dim: usize,
    u0: f64,
    c0: f64,
    ell0: f64,
    ell1: f64,
) -> PyResult<SpectrumParams> {
    make_params(alpha, beta, u0, c0, ell0, ell1, dim).map_err(to_py_err)
}

/// Longitudinal increment-variance normalization constant.
#[pyfunction]
#[pyo3(signature = (alpha, dim = 3))]
fn normalization_constant(alpha: f64, dim: usize) -> PyResult<f64> {
    params::c_alpha(alpha, dim).map_err(to_py_err)
}

/// Scaling exponents of the rescaled pair process for one exponent pair.
#[pyfunction]
fn scaling_exponents<'py>(py: Python<'py>, alpha: f64, beta: f64) -> PyResult<Bound<'py, PyDict>> {
    let e = params::exponents(alpha, beta);
    let d = PyDict::new(py);
    d.set_item("branch", format!("{:?}", e.branch))?;
    d.set_item("q", e.q)?;
    d.set_item("p", e.p)?;
    d.set_item("eta", e.eta)?;
    d.set_item("nu", e.nu)?;
    d.set_item("gamma_kappa_zero", e.gamma_kappa_zero)?;
    d.set_item("gamma_kappa_positive", e.gamma_kappa_positive)?;
    Ok(d)
}

/// Scaling-regime classification with the cutoff-coupling constraints an
/// epsilon-sweep must satisfy.
#[pyfunction]
#[pyo3(signature = (alpha, beta, kappa0_positive = false))]
fn classify_regime<'py>(
    py: Python<'py>,
    alpha: f64,
    beta: f64,
    kappa0_positive: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let report = params::classify_regime(alpha, beta, kappa0_positive);
    let d = PyDict::new(py);
    d.set_item("class", format!("{:?}", report.class))?;
    d.set_item("sigma", report.sigma)?;
    d.set_item("kolmogorov", report.kolmogorov)?;
    let constraints: Vec<String> = report.constraints.iter().map(|m| m.to_string()).collect();
    d.set_item("constraints", constraints)?;
    d.set_item("growing_l_constraint", report.growing_l_constraint.to_string())?;
    Ok(d)
}

/// Exact two-time velocity structure function D(r, tau) over the spectral
/// band, returned as a dim x dim nested list.
#[pyfunction]
#[pyo3(signature = (alpha, beta, r, tau = 0.0, dim = 0, u0 = 1.0, c0 = 1.0, ell0 = 1.0, ell1 = 0.1))]
#[allow(clippy::too_many_arguments)]
fn structure_function(
    alpha: f64,
    beta: f64,
    r: Vec<f64>,
    tau: f64,
    dim: usize,
    u0: f64,
    c0: f64,
    ell0: f64,
    ell1: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let dim = if dim == 0 { r.len() } else { dim };
    if r.len() != dim {
        return Err(PyValueError::new_err(format!(
            "separation has {} components for dimension {dim}",
            r.len()
        )));
    }
    let p = build_params(alpha, beta, dim, u0, c0, ell0, ell1)?;
    let exact = synturb::field::structure_function_exact(&p, &r, tau, p.band()).map_err(to_py_err)?;
    Ok(mat_to_rows(&exact))
}

/// Limit-diffusion evaluator for one spectral configuration.
#[pyclass]
struct Oracle {
    inner: KraichnanOracle,
}

#[pymethods]
impl Oracle {
    #[new]
    #[pyo3(signature = (alpha, beta, dim = 2, kappa0 = 0.0, u0 = 1.0, c0 = 1.0, ell0 = 1.0, ell1 = 0.1))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        beta: f64,
        dim: usize,
        kappa0: f64,
        u0: f64,
        c0: f64,
        ell0: f64,
        ell1: f64,
    ) -> PyResult<Self> {
        let p = build_params(alpha, beta, dim, u0, c0, ell0, ell1)?;
        let inner = KraichnanOracle::from_params(&p, kappa0).map_err(to_py_err)?;
        Ok(Oracle { inner })
    }

    /// Mean-square separation grows as t to this power.
    fn dispersion_exponent(&self) -> f64 {
        self.inner.dispersion_exponent()
    }

    /// Hurst exponent of the limiting velocity field.
    fn eta(&self) -> f64 {
        self.inner.eta()
    }

    /// Closed-form scale-invariant limit covariance at coinciding points.
    fn gamma(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.gamma1_closed(&x).map_err(to_py_err)?;
        Ok(mat_to_rows(&m))
    }

    /// Effective diffusion tensor of the separation process.
    fn diffusion(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = self.inner.diffusion(&x).map_err(to_py_err)?;
        Ok(mat_to_rows(&m))
    }

    /// Longitudinal component of the relative diffusivity at separation x.
    fn longitudinal_diffusivity(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.longitudinal_diffusivity(&x).map_err(to_py_err)
    }

    /// Simulate pair separations under the limit diffusion and return
    /// (times, mean-square separation, standard errors).
    #[pyo3(signature = (x0, t_end, dt, n_pairs, seed, n_times = 48, decades = 3.0))]
    #[allow(clippy::too_many_arguments)]
    fn msd(
        &self,
        x0: Vec<f64>,
        t_end: f64,
        dt: f64,
        n_pairs: usize,
        seed: u64,
        n_times: usize,
        decades: f64,
    ) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let times = log_sample_grid(t_end, n_times, decades);
        let ens = self
            .inner
            .simulate_limit_pairs(&x0, t_end, dt, n_pairs, seed, Some(&times))
            .map_err(to_py_err)?;
        let series = msd(&ens).map_err(to_py_err)?;
        Ok((series.t, series.y, series.stderr))
    }
}

/// Names of the built-in experiment presets.
#[pyfunction]
fn preset_names() -> Vec<String> {
    runner::PRESET_NAMES.iter().map(|s| s.to_string()).collect()
}

/// Run one built-in preset, writing tables and the run record under
/// out_dir, and return the run record as a dict.
#[pyfunction]
#[pyo3(signature = (name, out_dir, seed = None, threads = 1))]
fn run_preset<'py>(
    py: Python<'py>,
    name: &str,
    out_dir: &str,
    seed: Option<u64>,
    threads: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let mut cfg = runner::preset(name).map_err(to_py_err)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let record = runner::run(&cfg, std::path::Path::new(out_dir), threads).map_err(to_py_err)?;
    let value = serde_json::to_value(&record)
        .map_err(|e| PyValueError::new_err(format!("run record serialization: {e}")))?;
    json_to_py(py, &value)
}

#[pymodule]
fn synturb_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(normalization_constant, m)?)?;
    m.add_function(wrap_pyfunction!(scaling_exponents, m)?)?;
    m.add_function(wrap_pyfunction!(classify_regime, m)?)?;
    m.add_function(wrap_pyfunction!(structure_function, m)?)?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_class::<Oracle>()?;
    Ok(())
}
