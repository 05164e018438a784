//! Python module `contact_pinn`: case configuration, training, prediction
//! and the analytical reference solutions.

use std::collections::BTreeMap;
use std::path::PathBuf;

use contact_pinn::benchmarks::{self, run_case, CaseConfig};
use contact_pinn::config::{Overrides, RunConfig};
use contact_pinn::contact::{self, KktMethod};
use contact_pinn::elasticity::{ExperimentalData, MaterialParams};
use contact_pinn::network::{forward_batch, input_jacobian, Checkpoint, NetworkParams, OutputTransform};
use contact_pinn::Error;
use ndarray::Array2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn err(e: Error) -> PyErr {
    match e {
        Error::NonFinite(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(what: &str, value: &str) -> PyResult<T> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown {what} '{value}'")))
}

/// Isotropic linear elastic material (plane strain).
#[pyclass(name = "MaterialParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyMaterial {
    inner: MaterialParams,
}

#[pymethods]
impl PyMaterial {
    #[new]
    fn new(young: f64, poisson: f64) -> PyResult<Self> {
        Ok(PyMaterial {
            inner: MaterialParams::new(young, poisson).map_err(err)?,
        })
    }

    #[getter]
    fn young(&self) -> f64 {
        self.inner.young
    }

    #[getter]
    fn poisson(&self) -> f64 {
        self.inner.poisson
    }

    fn __repr__(&self) -> String {
        format!("MaterialParams(young={}, poisson={})", self.inner.young, self.inner.poisson)
    }
}

/// Resolved benchmark configuration.
#[pyclass(name = "CaseConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyCaseConfig {
    inner: CaseConfig,
}

#[pymethods]
impl PyCaseConfig {
    /// Defaults of `case` (`lame`, `block`, `hertz`) for a mode and preset.
    #[new]
    #[pyo3(signature = (case, mode = "forward", preset = "desk"))]
    fn new(case: &str, mode: &str, preset: &str) -> PyResult<Self> {
        Ok(PyCaseConfig {
            inner: CaseConfig::defaults(
                parse_enum("case", case)?,
                parse_enum("mode", mode)?,
                parse_enum("preset", preset)?,
            ),
        })
    }

    /// Resolves a TOML run document.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let rc = RunConfig::from_toml(text).map_err(err)?;
        Ok(PyCaseConfig {
            inner: rc.resolve(&Overrides::default()).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: CaseConfig = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(err)?;
        Ok(PyCaseConfig { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn hidden(&self) -> Vec<usize> {
        self.inner.hidden.clone()
    }

    #[setter]
    fn set_hidden(&mut self, hidden: Vec<usize>) {
        self.inner.hidden = hidden;
    }

    #[getter]
    fn adam_epochs(&self) -> usize {
        self.inner.adam.epochs
    }

    #[setter]
    fn set_adam_epochs(&mut self, n: usize) {
        self.inner.adam.epochs = n;
    }

    #[getter]
    fn lbfgs_max_iters(&self) -> usize {
        self.inner.lbfgs.max_iters
    }

    #[setter]
    fn set_lbfgs_max_iters(&mut self, n: usize) {
        self.inner.lbfgs.max_iters = n;
    }

    /// `(interior, boundary)` training point targets.
    #[getter]
    fn points(&self) -> (usize, usize) {
        (self.inner.points.interior, self.inner.points.boundary)
    }

    #[setter]
    fn set_points(&mut self, counts: (usize, usize)) {
        self.inner.points.interior = counts.0;
        self.inner.points.boundary = counts.1;
    }

    #[getter]
    fn kkt(&self) -> &'static str {
        self.inner.kkt.name()
    }

    /// Selects `sign`, `sigmoid` or `fb` with every weight set to `weight`.
    #[pyo3(signature = (method, weight = 1.0))]
    fn set_kkt(&mut self, method: &str, weight: f64) -> PyResult<()> {
        self.inner.kkt = KktMethod::from_name(method).map_err(err)?.scaled(weight);
        Ok(())
    }

    fn __repr__(&self) -> String {
        format!(
            "CaseConfig(case={}, mode={:?}, preset={:?}, seed={}, hidden={:?})",
            self.inner.case.name(),
            self.inner.mode,
            self.inner.preset,
            self.inner.seed,
            self.inner.hidden
        )
    }
}

/// Trained (or loaded) network with its output transform.
#[pyclass(name = "Model", skip_from_py_object)]
struct PyModel {
    params: NetworkParams,
    transform: OutputTransform,
    case: Option<String>,
    report: Option<String>,
    losses: Vec<(usize, String, f64)>,
}

#[pymethods]
impl PyModel {
    /// Fields `(ux, uy, sxx, syy, sxy)` at rows `[x, y]` (or `[x, y, p]`).
    fn predict(&self, py: Python<'_>, points: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        let width = self.params.architecture().input_width;
        if let Some(r) = points.iter().find(|r| r.len() != width) {
            return Err(PyValueError::new_err(format!(
                "model expects {width} inputs, got a row of {}",
                r.len()
            )));
        }
        let flat: Vec<f64> = points.concat();
        let inputs = Array2::from_shape_vec((points.len(), width), flat).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let fields = py
            .detach(|| forward_batch(&self.params, &self.transform, inputs.view(), false))
            .map_err(err)?;
        Ok(fields.values.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// `d(field)/d(x, y)` at one input row; five rows of two entries.
    fn jacobian(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let j = input_jacobian(&self.params, &self.transform, &point).map_err(err)?;
        Ok(j.rows().into_iter().map(|r| r.to_vec()).collect())
    }

    /// Error report of the training run as JSON, if trained here.
    fn report_json(&self) -> Option<String> {
        self.report.clone()
    }

    /// `(epoch, phase, total loss)` per training record.
    fn loss_history(&self) -> Vec<(usize, String, f64)> {
        self.losses.clone()
    }

    /// Extra trainables by name (the identified load in inverse mode).
    fn identified(&self) -> BTreeMap<String, f64> {
        self.params
            .extra_names()
            .iter()
            .cloned()
            .zip(self.params.extras().iter().copied())
            .collect()
    }

    #[getter]
    fn n_parameters(&self) -> usize {
        self.params.theta().len()
    }

    #[getter]
    fn input_width(&self) -> usize {
        self.params.architecture().input_width
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let ck = Checkpoint::new(&self.params, &self.transform, self.case.as_deref());
        let text = ck.to_json().map_err(err)?;
        contact_pinn::io::write_atomic(&path, text.as_bytes()).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(err)?;
        Ok(PyModel {
            params: ck.params().map_err(err)?,
            transform: ck.transform.clone(),
            case: ck.case.clone(),
            report: None,
            losses: Vec::new(),
        })
    }
}

/// Trains a case; `data` is an experimental-data CSV for the data-enhanced
/// and inverse modes. The GIL is released while training.
#[pyfunction]
#[pyo3(signature = (config, data = None))]
fn train(py: Python<'_>, config: &PyCaseConfig, data: Option<PathBuf>) -> PyResult<PyModel> {
    let cfg = config.inner.clone();
    let run = py
        .detach(move || {
            let data = data.as_deref().map(ExperimentalData::load).transpose()?;
            run_case(&cfg, data.as_ref(), &mut |_, _| Ok(()))
        })
        .map_err(err)?;
    let report = serde_json::to_string_pretty(&run.report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let losses = run
        .records
        .iter()
        .map(|r| (r.epoch, format!("{:?}", r.phase), r.loss.total))
        .collect();
    Ok(PyModel {
        params: run.params,
        transform: run.transform,
        case: Some(run.config.case.name().to_string()),
        report: Some(report),
        losses,
    })
}

/// `a + b - sqrt(a^2 + b^2)`.
#[pyfunction]
fn fischer_burmeister(a: f64, b: f64) -> f64 {
    contact::fischer_burmeister(a, b)
}

/// KKT loss of `method` (`sign`, `sigmoid`, `fb`) over gaps and normal
/// tractions (negative in compression).
#[pyfunction]
#[pyo3(signature = (method, gaps, pressures, weight = 1.0))]
fn kkt_loss(method: &str, gaps: Vec<f64>, pressures: Vec<f64>, weight: f64) -> PyResult<f64> {
    if gaps.len() != pressures.len() {
        return Err(PyValueError::new_err("gaps and pressures differ in length"));
    }
    let m = KktMethod::from_name(method).map_err(err)?.scaled(weight);
    Ok(contact::kkt_loss(&m, &gaps, &pressures))
}

#[pyfunction]
fn hertz_pressure(x: f64, radius: f64, p: f64, young: f64, poisson: f64) -> f64 {
    benchmarks::hertz_pressure(x, radius, p, young, poisson)
}

#[pyfunction]
fn hertz_half_width(radius: f64, p: f64, young: f64, poisson: f64) -> f64 {
    benchmarks::hertz_half_width(radius, p, young, poisson)
}

#[pyfunction]
fn lame_fields(x: f64, y: f64, r_i: f64, r_o: f64, p: f64, young: f64, poisson: f64) -> PyResult<Vec<f64>> {
    Ok(benchmarks::lame_fields(x, y, r_i, r_o, p, young, poisson).map_err(err)?.to_vec())
}

#[pyfunction]
fn block_analytical(x: f64, y: f64, p: f64, young: f64, poisson: f64) -> Vec<f64> {
    benchmarks::block_analytical(x, y, p, young, poisson).to_vec()
}

/// Module initializer; also usable with `pyo3::wrap_pymodule!` for embedding.
#[pymodule]
#[pyo3(name = "contact_pinn")]
pub fn contact_pinn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMaterial>()?;
    m.add_class::<PyCaseConfig>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(fischer_burmeister, m)?)?;
    m.add_function(wrap_pyfunction!(kkt_loss, m)?)?;
    m.add_function(wrap_pyfunction!(hertz_pressure, m)?)?;
    m.add_function(wrap_pyfunction!(hertz_half_width, m)?)?;
    m.add_function(wrap_pyfunction!(lame_fields, m)?)?;
    m.add_function(wrap_pyfunction!(block_analytical, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
