//! Python bindings. Configs cross the boundary as JSON; reports come back as
//! plain dicts and lists.

use std::path::PathBuf;

use lowmach_core::acoustic2d::AcousticState2D;
use lowmach_core::compressible3d::{self, FluidState3D, FluxKind, SolverParams};
use lowmach_core::domain::{Grid2D, Grid3D, ScalarField2D};
use lowmach_core::harness::{self, rows_to_csv, RunConfig};
use lowmach_core::pressure::{check_hypotheses, PressureLaw};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

fn err(e: lowmach_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_flux(name: &str) -> PyResult<FluxKind> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| PyValueError::new_err(format!("unknown flux '{name}'")))
}

#[pyclass(name = "RunConfig", module = "lowmach")]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    /// `RunConfig(json=None, overrides=[])`; missing keys take defaults.
    #[new]
    #[pyo3(signature = (json=None, overrides=Vec::new()))]
    fn new(json: Option<&str>, overrides: Vec<String>) -> PyResult<Self> {
        let base = match json {
            Some(j) => serde_json::from_str(j).map_err(|e| PyValueError::new_err(e.to_string()))?,
            None => RunConfig::default(),
        };
        Ok(Self { inner: base.with_overrides(&overrides).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: RunConfig::load(Some(&path), &[]).map_err(err)? })
    }

    /// Copy with `key=value` overrides applied.
    fn with_overrides(&self, overrides: Vec<String>) -> PyResult<Self> {
        Ok(Self { inner: self.inner.with_overrides(&overrides).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn epsilon_list(&self) -> Vec<f64> {
        self.inner.epsilon_list.clone()
    }

    #[getter]
    fn eta_list(&self) -> Vec<f64> {
        self.inner.eta_list.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(nx={}, ny={}, nz={}, epsilon_list={:?}, end_time={})",
            self.inner.nx, self.inner.ny, self.inner.nz, self.inner.epsilon_list, self.inner.end_time
        )
    }
}

#[pyclass(name = "PressureLaw", module = "lowmach")]
struct PyPressureLaw {
    inner: PressureLaw,
}

#[pymethods]
impl PyPressureLaw {
    /// `p(rho) = coefficient * rho^gamma`.
    #[new]
    #[pyo3(signature = (gamma=2.0, coefficient=1.0, rho_tilde=1.0))]
    fn new(gamma: f64, coefficient: f64, rho_tilde: f64) -> PyResult<Self> {
        Ok(Self { inner: PressureLaw::power(gamma, coefficient, rho_tilde).map_err(err)? })
    }

    fn pressure(&self, rho: f64) -> f64 {
        self.inner.pressure(rho)
    }

    fn potential(&self, rho: f64) -> f64 {
        self.inner.potential(rho)
    }

    /// `H(rho, r)`.
    fn helmholtz(&self, rho: f64, r: f64) -> f64 {
        self.inner.helmholtz(rho, r)
    }

    #[getter]
    fn sound_speed(&self) -> f64 {
        self.inner.sound_speed()
    }

    #[getter]
    fn rho_tilde(&self) -> f64 {
        self.inner.rho_tilde()
    }

    /// Checks the structural hypotheses on the given densities.
    fn check(&self, samples: Vec<f64>) -> PyResult<()> {
        check_hypotheses(&self.inner, &samples).and_then(|r| r.into_result()).map(|_| ()).map_err(err)
    }
}

#[pyclass(name = "AcousticState", module = "lowmach")]
struct PyAcousticState {
    inner: AcousticState2D,
}

#[pymethods]
impl PyAcousticState {
    /// Fields are flat lists of `nx * ny` cell values, `x2` fastest.
    #[new]
    fn new(
        nx: usize,
        ny: usize,
        length: f64,
        s: Vec<f64>,
        psi: Vec<f64>,
        epsilon: f64,
        law: &PyPressureLaw,
    ) -> PyResult<Self> {
        let g = Grid2D::new(nx, ny, length).map_err(err)?;
        let s = ScalarField2D::new(g, s).map_err(err)?;
        let psi = ScalarField2D::new(g, psi).map_err(err)?;
        Ok(Self { inner: AcousticState2D::new(&s, &psi, epsilon, &law.inner).map_err(err)? })
    }

    fn propagate(&self, t: f64) -> Self {
        Self { inner: self.inner.propagate(t) }
    }

    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    fn s(&self) -> Vec<f64> {
        self.inner.s().into_values()
    }

    fn psi(&self) -> Vec<f64> {
        self.inner.psi().into_values()
    }
}

#[pyclass(name = "FluidState", module = "lowmach")]
struct PyFluidState {
    inner: FluidState3D,
}

#[pymethods]
impl PyFluidState {
    #[staticmethod]
    #[pyo3(signature = (nx, ny, nz, length, delta, rho, velocity=[0.0; 3]))]
    fn uniform(
        nx: usize,
        ny: usize,
        nz: usize,
        length: f64,
        delta: f64,
        rho: f64,
        velocity: [f64; 3],
    ) -> PyResult<Self> {
        let g = Grid3D::new(nx, ny, nz, length, delta).map_err(err)?;
        Ok(Self { inner: FluidState3D::uniform(g, rho, velocity).map_err(err)? })
    }

    /// Initial state of a harness member.
    #[staticmethod]
    fn from_config(config: &PyRunConfig, epsilon: f64, eta: f64) -> PyResult<Self> {
        let c = &config.inner;
        let law = c.law().map_err(err)?;
        let g = c.grid(epsilon).map_err(err)?;
        let s = lowmach_core::initialdata::build_initial_3d(&c.recipe, g, &law, epsilon, eta).map_err(err)?;
        Ok(Self { inner: s })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    fn mass(&self) -> f64 {
        self.inner.mass()
    }

    fn momentum(&self) -> [f64; 3] {
        self.inner.momentum()
    }

    fn energy(&self, law: &PyPressureLaw, epsilon: f64) -> f64 {
        self.inner.energy(&law.inner, epsilon)
    }

    fn density(&self) -> Vec<f64> {
        self.inner.rho.values().to_vec()
    }

    /// Advances by `duration` with the finite-volume scheme.
    #[pyo3(signature = (law, epsilon, duration, cfl=0.45, flux="low_mach_rusanov"))]
    fn advance(
        &self,
        py: Python<'_>,
        law: &PyPressureLaw,
        epsilon: f64,
        duration: f64,
        cfl: f64,
        flux: &str,
    ) -> PyResult<Self> {
        let params = SolverParams::new(epsilon, cfl, law.inner.clone(), duration, duration.max(f64::MIN_POSITIVE))
            .map_err(err)?
            .with_flux(parse_flux(flux)?);
        let start = self.inner.clone();
        let out = py.detach(move || compressible3d::run(&start, &params)).map_err(err)?;
        let (_, last) = out.series.last().expect("run records the end state");
        Ok(Self { inner: last.clone() })
    }
}

/// Runs the sweep; returns `(rows_csv, summary)`. Writes files when `out` is given.
#[pyfunction]
#[pyo3(signature = (config, out=None))]
fn sweep<'py>(py: Python<'py>, config: &PyRunConfig, out: Option<PathBuf>) -> PyResult<(String, Bound<'py, PyAny>)> {
    let cfg = config.inner.clone();
    let res = py.detach(move || harness::sweep(&cfg, out.as_deref())).map_err(err)?;
    Ok((rows_to_csv(&res.rows), to_py(py, &res.summary)?))
}

/// Rows of one `(epsilon, eta)` member as dicts.
#[pyfunction]
fn run_single<'py>(py: Python<'py>, config: &PyRunConfig, epsilon: f64, eta: f64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let res = py.detach(move || harness::run_single(&cfg, epsilon, eta)).map_err(err)?;
    to_py(py, &res.rows)
}

#[pyfunction]
fn acoustic_bench<'py>(py: Python<'py>, config: &PyRunConfig) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let rep = py.detach(move || harness::acoustic_bench(&cfg)).map_err(err)?;
    to_py(py, &rep)
}

/// Invariant suite; a list of `{name, passed, detail}`.
#[pyfunction]
fn validate<'py>(py: Python<'py>, config: &PyRunConfig) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let rep = py.detach(move || harness::validate(&cfg));
    to_py(py, &rep.checks)
}

#[pymodule]
fn lowmach(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyPressureLaw>()?;
    m.add_class::<PyAcousticState>()?;
    m.add_class::<PyFluidState>()?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(run_single, m)?)?;
    m.add_function(wrap_pyfunction!(acoustic_bench, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    m.add("CSV_HEADER", harness::CSV_HEADER)?;
    Ok(())
}
