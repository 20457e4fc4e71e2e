//! Python bindings. Points travel as lists of ambient coordinates; structured
//! results (certificates, profiles, audits) come back as plain dicts.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use rigidity_core::closure::{
    derive_to_epsilon, verify_certificate, BarOracle, Bound as Radius, Certificate, ClosureContext, ClosureError,
    DeriveOptions, Regularity, Scalar, Strategy,
};
use rigidity_core::counterexamples::{audit_distance, build_example, example4_demo, ExampleId, ExampleParams};
use rigidity_core::intersect::{self, WITNESS_TOL};
use rigidity_core::lens::{self, DEFAULT_LENS_BUDGET};
use rigidity_core::manifold::{self, GeometryError, Point};

fn geometry(e: GeometryError) -> PyErr {
    match e {
        GeometryError::Convergence { .. } | GeometryError::Diagnostics(_) | GeometryError::Internal(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn scalar(s: &str) -> PyResult<Scalar> {
    s.parse().map_err(value_error)
}

/// A model space: "e2", "s2", "s3:r=2", "h2:k=-1", "t2".
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: manifold::Model,
}

impl PyModel {
    fn pt(&self, coords: Option<Vec<f64>>) -> PyResult<Point> {
        match coords {
            Some(c) => self.inner.point(c).map_err(geometry),
            None => Ok(self.inner.origin()),
        }
    }
}

#[pymethods]
impl PyModel {
    #[new]
    fn new(id: &str) -> PyResult<Self> {
        Ok(PyModel {
            inner: id.parse().map_err(geometry)?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Convexity radius; `inf` when unbounded.
    #[getter]
    fn conv(&self) -> f64 {
        self.inner.conv().finite().unwrap_or(f64::INFINITY)
    }

    #[getter]
    fn inj(&self) -> f64 {
        self.inner.inj().finite().unwrap_or(f64::INFINITY)
    }

    fn origin(&self) -> Vec<f64> {
        self.inner.origin().coords().to_vec()
    }

    fn distance(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
        let (x, y) = (self.pt(Some(x))?, self.pt(Some(y))?);
        self.inner.distance(&x, &y).map_err(geometry)
    }

    /// Point at distance `t` from `x` along `v` (projected to the tangent space).
    fn exp_map(&self, x: Vec<f64>, v: Vec<f64>, t: f64) -> PyResult<Vec<f64>> {
        let x = self.pt(Some(x))?;
        let v = self.inner.tangent(&x, v).map_err(geometry)?;
        Ok(self.inner.exp_map(&x, &v, t).map_err(geometry)?.coords().to_vec())
    }

    /// Unit initial direction from `x` to `y`; pair with `distance(x, y)`.
    fn log_map(&self, x: Vec<f64>, y: Vec<f64>) -> PyResult<Vec<f64>> {
        let (x, y) = (self.pt(Some(x))?, self.pt(Some(y))?);
        Ok(self.inner.log_map(&x, &y).map_err(geometry)?.components)
    }

    /// Point at distance `t` from `x` (default origin) along the reference direction.
    #[pyo3(signature = (t, x=None))]
    fn point_at(&self, t: f64, x: Option<Vec<f64>>) -> PyResult<Vec<f64>> {
        let x = self.pt(x)?;
        let dir = self.inner.reference_direction(&x).map_err(geometry)?;
        Ok(self.inner.exp_map(&x, &dir, t).map_err(geometry)?.coords().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("Model('{}')", self.inner.id())
    }
}

#[pyfunction]
fn intersect_predicate(m: &PyModel, x1: Vec<f64>, r1: f64, x2: Vec<f64>, r2: f64) -> PyResult<bool> {
    let (x1, x2) = (m.pt(Some(x1))?, m.pt(Some(x2))?);
    intersect::intersect_predicate(&m.inner, &x1, r1, &x2, r2).map_err(geometry)
}

#[pyfunction]
#[pyo3(signature = (m, x1, r1, x2, r2, tol=WITNESS_TOL))]
fn intersect_witness(m: &PyModel, x1: Vec<f64>, r1: f64, x2: Vec<f64>, r2: f64, tol: f64) -> PyResult<Option<Vec<f64>>> {
    let (x1, x2) = (m.pt(Some(x1))?, m.pt(Some(x2))?);
    let w = intersect::intersect_witness(&m.inner, &x1, r1, &x2, r2, tol).map_err(geometry)?;
    Ok(w.map(|p| p.coords().to_vec()))
}

/// "empty", "singleton" or "continuum".
#[pyfunction]
fn classify_intersection(m: &PyModel, x1: Vec<f64>, r1: f64, x2: Vec<f64>, r2: f64) -> PyResult<String> {
    let (x1, x2) = (m.pt(Some(x1))?, m.pt(Some(x2))?);
    let c = intersect::classify_intersection(&m.inner, &x1, r1, &x2, r2).map_err(geometry)?;
    Ok(c.name().to_string())
}

/// `(estimate, error_bound)` for the lens of two balls of radius `r`.
#[pyfunction]
#[pyo3(signature = (m, x, y, r, budget=DEFAULT_LENS_BUDGET, seed=0))]
fn lens_diameter(m: &PyModel, x: Vec<f64>, y: Vec<f64>, r: f64, budget: usize, seed: u64) -> PyResult<(f64, f64)> {
    let (x, y) = (m.pt(Some(x))?, m.pt(Some(y))?);
    let e = lens::lens_diameter(&m.inner, &x, &y, r, budget, seed).map_err(geometry)?;
    Ok((e.estimate, e.error_bound))
}

#[pyfunction]
#[pyo3(signature = (m, r, count=50, budget=DEFAULT_LENS_BUDGET, seed=0))]
fn lens_profile<'py>(py: Python<'py>, m: &PyModel, r: f64, count: usize, budget: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let p = lens::lens_profile(&m.inner, r, count, budget, seed).map_err(geometry)?;
    to_py(py, &p)
}

/// Certified bracket `(lo, hi)` for r-bar.
#[pyfunction]
#[pyo3(signature = (m, r, tol=1e-6, budget=DEFAULT_LENS_BUDGET, seed=0))]
fn rbar(m: &PyModel, r: f64, tol: f64, budget: usize, seed: u64) -> PyResult<(f64, f64)> {
    let res = lens::rbar(&m.inner, r, tol, budget, seed).map_err(geometry)?;
    Ok((res.lo, res.hi))
}

/// Derives a certificate for a preserved distance below `eps`. Seeds and
/// `eps` are scalar expressions such as "sqrt2/8". A rational seed set
/// returns `{"outcome": "rational", ...}` instead of raising.
#[pyfunction]
#[pyo3(signature = (seeds, eps, strategy="A", model=None, conv=None, periodic=false, continuous=false, budget=None))]
#[allow(clippy::too_many_arguments)]
fn derive<'py>(
    py: Python<'py>,
    seeds: Vec<String>,
    eps: &str,
    strategy: &str,
    model: Option<&PyModel>,
    conv: Option<&str>,
    periodic: bool,
    continuous: bool,
    budget: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let seeds = seeds.iter().map(|s| scalar(s)).collect::<PyResult<Vec<_>>>()?;
    let eps = scalar(eps)?;
    let regularity = if continuous { Regularity::Continuous } else { Regularity::Surjective };
    let mut ctx = match model {
        Some(m) => {
            let mut ctx = ClosureContext::for_model(&m.inner, regularity);
            if ctx.two_point_homogeneous && ctx.bar_oracle.is_none() {
                ctx.bar_oracle = Some(BarOracle::new(m.inner));
            }
            ctx
        }
        None => ClosureContext::new(Radius::Infinite, Radius::Infinite, regularity),
    };
    if let Some(c) = conv {
        ctx.conv = c.parse().map_err(value_error)?;
        ctx.inj = ctx.conv.scale(&Scalar::integer(2)).map_err(value_error)?;
    }
    ctx.periodic_period_one |= periodic;
    let mut options = DeriveOptions::new(strategy.parse::<Strategy>().map_err(value_error)?);
    if let Some(b) = budget {
        options.budget = b;
    }
    match derive_to_epsilon(&seeds, &ctx, &eps, options) {
        Ok(cert) => to_py(py, &serde_json::json!({ "outcome": "certificate", "certificate": cert })),
        Err(ClosureError::Rational(report)) => to_py(py, &serde_json::json!({ "outcome": "rational", "report": report })),
        Err(e @ (ClosureError::Budget { .. } | ClosureError::Stalled { .. })) => Err(PyRuntimeError::new_err(e.to_string())),
        Err(e) => Err(value_error(e)),
    }
}

/// Replays a certificate given as a dict or JSON string.
#[pyfunction]
fn verify<'py>(py: Python<'py>, certificate: &Bound<'py, PyAny>) -> PyResult<Bound<'py, PyAny>> {
    let text: String = match certificate.extract::<String>() {
        Ok(s) => s,
        Err(_) => py.import("json")?.call_method1("dumps", (certificate,))?.extract()?,
    };
    let cert: Certificate = serde_json::from_str(&text).map_err(value_error)?;
    let report = verify_certificate(&cert, &cert.context);
    to_py(py, &report)
}

/// Audits example map `id` ("ex1", "ex2", "ex3") at distance `r`.
#[pyfunction]
#[pyo3(signature = (id, r, pairs=10_000, seed=0))]
fn audit<'py>(py: Python<'py>, id: &str, r: &str, pairs: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let id: ExampleId = id.parse().map_err(value_error)?;
    let map = build_example(id, ExampleParams::None).map_err(geometry)?;
    let report = audit_distance(&map, &scalar(r)?, pairs, seed).map_err(geometry)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (n=10))]
fn example4<'py>(py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &example4_demo(n).map_err(geometry)?)
}

#[pymodule]
fn rigidity_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(intersect_predicate, m)?)?;
    m.add_function(wrap_pyfunction!(intersect_witness, m)?)?;
    m.add_function(wrap_pyfunction!(classify_intersection, m)?)?;
    m.add_function(wrap_pyfunction!(lens_diameter, m)?)?;
    m.add_function(wrap_pyfunction!(lens_profile, m)?)?;
    m.add_function(wrap_pyfunction!(rbar, m)?)?;
    m.add_function(wrap_pyfunction!(derive, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(example4, m)?)?;
    Ok(())
}
