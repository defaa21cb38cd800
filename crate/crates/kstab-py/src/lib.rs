//! Python bindings for `kstab`.
//!
//! Domain objects cross the boundary as JSON (the same schema the CLI reads);
//! reports come back as plain Python dicts.

use clap::ValueEnum;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use kstab::calabi;
use kstab::cli::{self, Case};
use kstab::geometry::Polyhedron;
use kstab::io::FunctionSpec;
use kstab::potentials::{self, SymplecticPotential, WeightJet};
use kstab::quadrature::QuadOptions;
use kstab::rational::parse_q;
use kstab::stability::{self, ScanConfig};
use kstab::weights::{self, Weight};

fn err(e: kstab::Error) -> PyErr {
    let msg = format!("[{}] {e}", e.code());
    if e.is_input_error() {
        PyValueError::new_err(msg)
    } else {
        PyRuntimeError::new_err(msg)
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(format!("[SchemaError] {e}"))
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let s = serde_json::to_string(value).map_err(json_err)?;
    py.import("json")?.call_method1("loads", (s,))
}

fn opts(rel_tol: f64) -> QuadOptions {
    QuadOptions::with_tol(rel_tol)
}

fn rationals(v: &[String]) -> PyResult<Vec<kstab::rational::Q>> {
    v.iter().map(|s| parse_q(s).map_err(err)).collect()
}

#[pyclass(name = "Polyhedron", frozen, module = "kstab_py")]
pub struct PyPolyhedron {
    inner: Polyhedron,
}

#[pymethods]
impl PyPolyhedron {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(json).map_err(json_err)? })
    }

    /// `[a, ∞)`.
    #[staticmethod]
    fn half_line(a: &str) -> PyResult<Self> {
        Ok(Self { inner: Polyhedron::half_line(parse_q(a).map_err(err)?) })
    }

    /// `{x_i ≥ −1}` in n variables.
    #[staticmethod]
    fn shifted_orthant(n: usize) -> Self {
        Self { inner: Polyhedron::shifted_orthant(n) }
    }

    #[staticmethod]
    fn cube(n: usize, lo: &str, hi: &str) -> PyResult<Self> {
        Ok(Self { inner: Polyhedron::cube(n, parse_q(lo).map_err(err)?, parse_q(hi).map_err(err)?) })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    fn is_delzant(&self) -> PyResult<bool> {
        Ok(self.inner.is_delzant().map_err(err)?.delzant)
    }

    fn is_bounded(&self) -> bool {
        self.inner.is_bounded()
    }

    fn is_anticanonical(&self) -> bool {
        self.inner.is_anticanonical()
    }

    fn vertices(&self) -> Vec<Vec<String>> {
        self.inner.vertices().iter().map(|v| v.iter().map(kstab::rational::fmt_q).collect()).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("Polyhedron(dim={}, facets={})", self.inner.dim, self.inner.halfspaces.len())
    }
}

#[pyclass(name = "Weight", frozen, module = "kstab_py")]
pub struct PyWeight {
    inner: Weight,
}

#[pymethods]
impl PyWeight {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(json).map_err(json_err)? })
    }

    /// `e^{−⟨λ,x⟩}`.
    #[staticmethod]
    fn exp(decay: Vec<String>) -> PyResult<Self> {
        Ok(Self { inner: Weight::exp(rationals(&decay)?) })
    }

    /// `2(n v + ⟨∇v, x⟩)`.
    #[staticmethod]
    fn soliton_w(v: &PyWeight, n: usize) -> Self {
        Self { inner: weights::soliton_weight_w(&v.inner, n) }
    }

    fn scale(&self, k: &str) -> PyResult<Self> {
        Ok(Self { inner: self.inner.scale(&parse_q(k).map_err(err)?) })
    }

    #[getter]
    fn nvars(&self) -> usize {
        self.inner.nvars
    }

    fn eval(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.nvars {
            return Err(PyValueError::new_err("point has the wrong dimension"));
        }
        self.inner.eval(&x).map_err(err)
    }

    fn render(&self) -> String {
        self.inner.render()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("Weight({})", self.inner.render())
    }

    fn __eq__(&self, other: &PyWeight) -> bool {
        self.inner == other.inner
    }
}

#[pyclass(name = "Potential", frozen, module = "kstab_py")]
pub struct PyPotential {
    inner: SymplecticPotential,
}

#[pymethods]
impl PyPotential {
    #[new]
    fn new(json: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(json).map_err(json_err)? })
    }

    /// `½ Σ L_i log L_i` over the facets.
    #[staticmethod]
    fn guillemin(p: &PyPolyhedron) -> Self {
        Self { inner: SymplecticPotential::guillemin(&p.inner) }
    }

    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.value(&x).map_err(err)
    }

    /// Scal_v(u) at x.
    fn abreu_scal_v(&self, v: &PyWeight, x: Vec<f64>) -> PyResult<f64> {
        potentials::abreu_scal_v(&self.inner, &WeightJet::new(&v.inner), &x).map_err(err)
    }
}

fn function_spec(f: &str) -> PyResult<FunctionSpec> {
    serde_json::from_str(f).map_err(json_err)
}

/// F_{v,w}(f) for a test function given as JSON (`{"family": "f_x0", "x0": "1"}` and so on).
#[pyfunction]
#[pyo3(signature = (p, v, w, f, rel_tol = 1e-8))]
fn futaki<'py>(py: Python<'py>, p: &PyPolyhedron, v: &PyWeight, w: &PyWeight, f: &str, rel_tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let f = function_spec(f)?.build();
    let r = py.detach(|| stability::futaki(&p.inner, &v.inner, &w.inner, &f, &opts(rel_tol))).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (p, v, w, rel_tol = 1e-8))]
fn futaki_affine<'py>(py: Python<'py>, p: &PyPolyhedron, v: &PyWeight, w: &PyWeight, rel_tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| stability::futaki_affine(&p.inner, &v.inner, &w.inner, &opts(rel_tol))).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
#[pyo3(signature = (p, v, w, rel_tol = 1e-8))]
fn semistability_scan<'py>(py: Python<'py>, p: &PyPolyhedron, v: &PyWeight, w: &PyWeight, rel_tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = ScanConfig::default();
    let r = py.detach(|| stability::semistability_scan(&p.inner, &v.inner, &w.inner, &cfg, &opts(rel_tol))).map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn profile_solve<'py>(py: Python<'py>, v: &PyWeight, w: &PyWeight) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &calabi::profile_solve(&v.inner, &w.inner).map_err(err)?)
}

/// Θ(x) on a list of points.
#[pyfunction]
fn profile_theta(v: &PyWeight, w: &PyWeight, xs: Vec<f64>) -> PyResult<Vec<f64>> {
    let sol = calabi::profile_solve(&v.inner, &w.inner).map_err(err)?;
    xs.iter().map(|&x| sol.theta_at(x).map_err(err)).collect()
}

#[pyfunction]
#[pyo3(signature = (d, k, tau, kappa, mu = 1.0))]
fn li_profile<'py>(py: Python<'py>, d: u32, k: u32, tau: f64, kappa: f64, mu: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &calabi::li_profile(d, k, tau, kappa, mu).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (d, k, tau, kappa, mu = 1.0, phi0 = 1.0, s0 = 1.0, s_lo = 1e2, s_hi = 1e6, points = 41))]
#[allow(clippy::too_many_arguments)]
fn li_decay_check<'py>(
    py: Python<'py>,
    d: u32,
    k: u32,
    tau: f64,
    kappa: f64,
    mu: f64,
    phi0: f64,
    s0: f64,
    s_lo: f64,
    s_hi: f64,
    points: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let prof = calabi::li_profile(d, k, tau, kappa, mu).map_err(err)?;
    let r = py
        .detach(|| calabi::li_decay_check(&prof, phi0, s0, (s_lo, s_hi), points, &opts(1e-12)))
        .map_err(err)?;
    to_py(py, &r)
}

#[pyfunction]
fn find_c_lambda<'py>(py: Python<'py>, lam: f64) -> PyResult<Bound<'py, PyAny>> {
    let r = py.detach(|| stability::find_c_lambda(lam, &QuadOptions::default())).map_err(err)?;
    to_py(py, &r)
}

/// Runs a problem file; returns the CLI exit code.
#[pyfunction]
#[pyo3(signature = (input, out, rel_tol = None, threads = None))]
fn run_problem(py: Python<'_>, input: &str, out: &str, rel_tol: Option<f64>, threads: Option<usize>) -> i32 {
    py.detach(|| cli::run_path(input.as_ref(), out.as_ref(), rel_tol, threads))
}

#[pyfunction]
fn reproduce<'py>(py: Python<'py>, case: &str) -> PyResult<Bound<'py, PyAny>> {
    let c = Case::from_str(case, true).map_err(PyValueError::new_err)?;
    let r = py.detach(|| cli::reproduce(c, &QuadOptions::default())).map_err(err)?;
    to_py(py, &r)
}

#[pymodule]
fn kstab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPolyhedron>()?;
    m.add_class::<PyWeight>()?;
    m.add_class::<PyPotential>()?;
    m.add_function(wrap_pyfunction!(futaki, m)?)?;
    m.add_function(wrap_pyfunction!(futaki_affine, m)?)?;
    m.add_function(wrap_pyfunction!(semistability_scan, m)?)?;
    m.add_function(wrap_pyfunction!(profile_solve, m)?)?;
    m.add_function(wrap_pyfunction!(profile_theta, m)?)?;
    m.add_function(wrap_pyfunction!(li_profile, m)?)?;
    m.add_function(wrap_pyfunction!(li_decay_check, m)?)?;
    m.add_function(wrap_pyfunction!(find_c_lambda, m)?)?;
    m.add_function(wrap_pyfunction!(run_problem, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
