//! Python module `spiked`.

use nalgebra::DMatrix;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde_json::Value;

use spiked_core::{
    ensemble, estimator, master, montecarlo, mp, predictions, spectra, Error, ExperimentConfig, ModelConfig,
    SpikedSample, C64 as Complex64,
};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        e if e.is_numerical() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py(py: Python<'_>, value: &Value) -> PyResult<Py<PyAny>> {
    Ok(match value {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_py_any(py)?,
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_py_any(py)?,
            (None, Some(i)) => i.into_py_any(py)?,
            _ => n.as_f64().unwrap_or(f64::NAN).into_py_any(py)?,
        },
        Value::String(s) => s.into_py_any(py)?,
        Value::Array(items) => {
            let converted: Vec<Py<PyAny>> = items.iter().map(|v| json_to_py(py, v)).collect::<PyResult<_>>()?;
            PyList::new(py, converted)?.into_py_any(py)?
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_py_any(py)?
        }
    })
}

fn serialize_to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

fn rows_of(matrix: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..matrix.nrows()).map(|i| matrix.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("expected a non-empty rectangular list of rows"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(DMatrix::from_row_slice(flat.len() / cols, cols, &flat))
}

/// A spiked ensemble: sizes, spike strengths, noise and signal families, seed.
#[pyclass(name = "Model", module = "spiked", frozen)]
struct PyModel {
    inner: ModelConfig,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (n, m, taus, seed = 0, noise = "gaussian", signal = "gaussian_iid", eps = None))]
    fn new(
        n: usize,
        m: usize,
        taus: Vec<f64>,
        seed: u64,
        noise: &str,
        signal: &str,
        eps: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let noise: ensemble::NoiseFamily = noise.parse().map_err(to_py_err)?;
        let signal: ensemble::SignalFamily = signal.parse().map_err(to_py_err)?;
        let mut inner = ModelConfig::new(n, m, taus).map_err(to_py_err)?.with_seed(seed);
        if let Some(eps) = eps {
            inner = inner.with_eps(eps).map_err(to_py_err)?;
        }
        inner = inner.with_noise(noise).and_then(|c| c.with_signal(signal)).map_err(to_py_err)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    #[getter]
    fn thetas(&self) -> PyResult<Vec<f64>> {
        self.inner.thetas().map_err(to_py_err)
    }

    /// Draws sample number `index`.
    #[pyo3(signature = (index = 0))]
    fn sample(&self, index: u64) -> PyResult<PySample> {
        Ok(PySample { inner: self.inner.sample(index).map_err(to_py_err)? })
    }

    /// Runs `trials` Monte Carlo trials and returns the aggregate report with
    /// per-trial records under `"records"`.
    #[pyo3(signature = (trials, parallelism = 1))]
    fn simulate(&self, py: Python<'_>, trials: usize, parallelism: usize) -> PyResult<Py<PyAny>> {
        let config = ExperimentConfig::new(self.inner.clone(), trials).with_parallelism(parallelism);
        let report = py.detach(|| montecarlo::run_experiment(&config)).map_err(to_py_err)?;
        let out = serialize_to_py(py, &report)?;
        out.bind(py).set_item("records", serialize_to_py(py, &report.records)?)?;
        Ok(out)
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!("Model(n={}, m={}, taus={:?}, seed={})", self.inner.n, self.inner.m, self.inner.taus, self.inner.seed)
    }
}

/// One draw of the spiked model.
#[pyclass(name = "Sample", module = "spiked", frozen)]
struct PySample {
    inner: SpikedSample,
}

#[pymethods]
impl PySample {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.n(), self.inner.m())
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta.clone()
    }

    /// Observed matrix as a list of rows.
    fn x_tilde(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.x_tilde)
    }

    /// Noise matrix as a list of rows.
    fn noise(&self) -> Vec<Vec<f64>> {
        rows_of(&self.inner.x)
    }

    /// Eigenvalues of the observed sample covariance, descending.
    fn eigenvalues(&self) -> Vec<f64> {
        spectra::eigenvalues_desc(&spectra::sample_covariance(&self.inner.x_tilde))
    }

    /// Root certificates for the supercritical spikes.
    #[pyo3(signature = (ell = master::DEFAULT_ELL, nodes = master::DEFAULT_NODES))]
    fn certify(&self, py: Python<'_>, ell: f64, nodes: usize) -> PyResult<Py<PyAny>> {
        let certs = master::certify_outliers(&self.inner, ell, nodes).map_err(to_py_err)?;
        serialize_to_py(py, &certs)
    }

    /// Empirical master determinant at `z`.
    fn det_master(&self, z: Complex64) -> PyResult<Complex64> {
        master::build_m_tilde(&self.inner, z).map(|m| m.determinant()).map_err(to_py_err)
    }
}

/// Marchenko-Pastur Stieltjes transform and its derivative at `z`.
#[pyfunction]
fn mp_stieltjes(z: Complex64, beta: f64) -> PyResult<(Complex64, Complex64)> {
    mp::mp_stieltjes(z, beta).map_err(to_py_err)
}

#[pyfunction]
fn d_transform(z: Complex64, beta: f64) -> PyResult<Complex64> {
    mp::d_transform(z, beta).map_err(to_py_err)
}

#[pyfunction]
fn d_transform_inverse(t: f64, beta: f64) -> PyResult<f64> {
    mp::d_transform_inverse(t, beta).map_err(to_py_err)
}

/// Predicted outlier location for signal strength `theta`.
#[pyfunction]
fn lambda_bar(theta: f64, beta: f64) -> PyResult<f64> {
    predictions::lambda_bar(theta, beta).map_err(to_py_err)
}

/// Theory table for the given spike strengths.
#[pyfunction]
fn predict(py: Python<'_>, taus: Vec<f64>, beta: f64) -> PyResult<Py<PyAny>> {
    serialize_to_py(py, &predictions::predict(&taus, beta).map_err(to_py_err)?)
}

/// `(tau, theta)` estimated from an outlier eigenvalue.
#[pyfunction]
fn estimate_tau(lambda_hat: f64, beta: f64) -> PyResult<(f64, f64)> {
    estimator::estimate_tau(lambda_hat, beta).map_err(to_py_err)
}

/// Outlier detection and strength estimation on a matrix given as rows.
#[pyfunction]
#[pyo3(signature = (rows, eta = estimator::DEFAULT_ETA))]
fn analyze(py: Python<'_>, rows: Vec<Vec<f64>>, eta: f64) -> PyResult<Py<PyAny>> {
    let x = matrix_from_rows(rows)?;
    serialize_to_py(py, &estimator::analyze(&x, eta).map_err(to_py_err)?)
}

#[pymodule]
fn spiked(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PySample>()?;
    m.add_function(wrap_pyfunction!(mp_stieltjes, m)?)?;
    m.add_function(wrap_pyfunction!(d_transform, m)?)?;
    m.add_function(wrap_pyfunction!(d_transform_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_bar, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_tau, m)?)?;
    m.add_function(wrap_pyfunction!(analyze, m)?)?;
    Ok(())
}
