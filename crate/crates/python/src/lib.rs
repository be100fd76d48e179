//! Python bindings for `iterint`.
//!
//! Indices are zero-based throughout: form components are keyed by tuples
//! of ambient coordinates, slot directions by cube coordinates.

use std::collections::BTreeMap;
use std::path::Path;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyTuple};

use iterint::chen::{self, MatrixConnection};
use iterint::geometry::{self, DEFAULT_ENDPOINT_TOL, DEFAULT_FACE_TOL};
use iterint::membranes::{self, LabeledIntegrand};
use nalgebra::DMatrix;
use iterint::report::{Check, Tolerance};
use iterint::scene::Scene;
use iterint::shuffles;
use iterint::{DifferentialForm, QuadratureConfig, Rule};

create_exception!(iterint_py, IterintError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    IterintError::new_err(e.to_string())
}

#[pyclass(name = "Expr", module = "iterint_py", skip_from_py_object)]
#[derive(Clone)]
struct PyExpr {
    inner: iterint::Expr,
    names: Vec<String>,
}

#[pymethods]
impl PyExpr {
    #[new]
    fn new(source: &str, variables: Vec<String>) -> PyResult<Self> {
        let inner = iterint::parse(source, &variables).map_err(err)?;
        Ok(Self { inner, names: variables })
    }

    fn eval(&self, point: Vec<f64>) -> PyResult<f64> {
        self.inner.eval(&point).map_err(err)
    }

    fn derivative(&self, var: usize) -> Self {
        Self {
            inner: self.inner.derivative(var),
            names: self.names.clone(),
        }
    }

    fn __str__(&self) -> String {
        self.inner.display(&self.names).to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr({:?})", self.__str__())
    }
}

#[pyclass(name = "Form", module = "iterint_py", skip_from_py_object)]
#[derive(Clone)]
struct PyForm {
    inner: DifferentialForm,
}

#[pymethods]
impl PyForm {
    /// `coeffs` maps coordinate tuples to expressions in `x1, ..., x<dim>`.
    #[new]
    fn new(dim: usize, degree: usize, coeffs: BTreeMap<Vec<usize>, String>) -> PyResult<Self> {
        let names = iterint::expr::coordinate_names("x", dim);
        let terms = coeffs
            .into_iter()
            .map(|(index, source)| Ok((index, iterint::parse(&source, &names).map_err(err)?)))
            .collect::<PyResult<Vec<_>>>()?;
        let inner = DifferentialForm::from_terms(dim, degree, terms).map_err(err)?;
        Ok(Self { inner })
    }

    /// The 1-form `dx_i`.
    #[staticmethod]
    fn coordinate(dim: usize, i: usize) -> PyResult<Self> {
        if i >= dim {
            return Err(PyValueError::new_err(format!("coordinate {i} outside R^{dim}")));
        }
        Ok(Self {
            inner: DifferentialForm::coordinate(dim, i),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    fn wedge(&self, other: &PyForm) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.wedge(&other.inner).map_err(err)?,
        })
    }

    fn d(&self) -> Self {
        Self {
            inner: self.inner.exterior_derivative(),
        }
    }

    fn __add__(&self, other: &PyForm) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.add(&other.inner).map_err(err)?,
        })
    }

    fn evaluate<'py>(&self, py: Python<'py>, point: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        tuple_keyed(py, &self.inner.evaluate(&point).map_err(err)?)
    }

    fn __repr__(&self) -> String {
        format!("Form({})", self.inner)
    }
}

#[pyclass(name = "Membrane", module = "iterint_py", skip_from_py_object)]
#[derive(Clone)]
struct PyMembrane {
    inner: geometry::Membrane,
}

#[pymethods]
impl PyMembrane {
    /// Components are expressions in `t` (paths) or `t1, ..., tn`.
    #[new]
    fn new(cube_dim: usize, components: Vec<String>) -> PyResult<Self> {
        let refs: Vec<&str> = components.iter().map(String::as_str).collect();
        Ok(Self {
            inner: geometry::Membrane::parse(cube_dim, &refs).map_err(err)?,
        })
    }

    #[staticmethod]
    fn line(a: Vec<f64>, b: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: geometry::Membrane::line(&a, &b).map_err(err)?,
        })
    }

    #[getter]
    fn cube_dim(&self) -> usize {
        self.inner.cube_dim()
    }

    #[getter]
    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn point(&self, t: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.point(&t).map_err(err)
    }

    fn jacobian(&self, t: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.jacobian(&t).map_err(err)
    }

    fn reverse(&self) -> Self {
        Self {
            inner: self.inner.reverse(),
        }
    }

    /// Path concatenation: `self` then `other`.
    #[pyo3(signature = (other, tol = DEFAULT_ENDPOINT_TOL))]
    fn concat(&self, other: &PyMembrane, tol: f64) -> PyResult<Self> {
        Ok(Self {
            inner: geometry::concat_paths(&self.inner, &other.inner, tol).map_err(err)?,
        })
    }

    /// Gluing along the first direction.
    #[pyo3(signature = (other, tol = DEFAULT_FACE_TOL))]
    fn glue(&self, other: &PyMembrane, tol: f64) -> PyResult<Self> {
        Ok(Self {
            inner: geometry::glue_membranes(&self.inner, &other.inner, tol).map_err(err)?,
        })
    }
}

#[pyclass(name = "Quadrature", module = "iterint_py", skip_from_py_object)]
#[derive(Clone)]
struct PyQuadrature {
    inner: QuadratureConfig,
}

#[pymethods]
impl PyQuadrature {
    #[new]
    #[pyo3(signature = (points_per_axis = 64, rule = "simpson", refinement_levels = 2, rel_tol = 1e-6, abs_tol = 1e-10))]
    fn new(points_per_axis: usize, rule: &str, refinement_levels: usize, rel_tol: f64, abs_tol: f64) -> PyResult<Self> {
        let rule = match rule {
            "trapezoid" => Rule::Trapezoid,
            "simpson" => Rule::Simpson,
            "gauss" => Rule::Gauss,
            other => return Err(PyValueError::new_err(format!("unknown rule '{other}'"))),
        };
        let inner = QuadratureConfig {
            points_per_axis,
            rule,
            refinement_levels,
            rel_tol,
            abs_tol,
            ..QuadratureConfig::default()
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn gauss() -> Self {
        Self {
            inner: QuadratureConfig::gauss(),
        }
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "Integrand", module = "iterint_py", skip_from_py_object)]
#[derive(Clone)]
struct PyIntegrand {
    inner: LabeledIntegrand,
}

#[pymethods]
impl PyIntegrand {
    #[new]
    fn new(cuts: Vec<usize>) -> Self {
        Self {
            inner: LabeledIntegrand::new(cuts),
        }
    }

    /// Places `form` at the 1-based slot `j`, reading the listed cube
    /// `directions`.
    fn add_slot(&mut self, j: Vec<usize>, form: &PyForm, directions: Vec<usize>) {
        self.inner
            .insert(j, membranes::Slot::new(form.inner.clone(), directions));
    }
}

fn tuple_keyed<'py>(py: Python<'py>, map: &BTreeMap<Vec<usize>, f64>) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    for (key, value) in map {
        dict.set_item(PyTuple::new(py, key)?, value)?;
    }
    Ok(dict)
}

fn cfg_or(cfg: Option<&PyQuadrature>, default: QuadratureConfig) -> QuadratureConfig {
    cfg.map(|c| c.inner.clone()).unwrap_or(default)
}

fn to_forms(list: &[PyRef<'_, PyForm>]) -> Vec<DifferentialForm> {
    list.iter().map(|f| f.inner.clone()).collect()
}

fn check_dict(py: Python<'_>, check: &Check) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_string(check).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (json,))?.unbind())
}

/// `(value, error_estimate)` of the iterated integral of `forms` along `path`.
#[pyfunction]
#[pyo3(signature = (path, forms, cfg = None))]
fn iterated_integral(
    path: &PyMembrane,
    forms: Vec<PyRef<'_, PyForm>>,
    cfg: Option<&PyQuadrature>,
) -> PyResult<(f64, Option<f64>)> {
    let est = chen::iterated_path_integral(&path.inner, &to_forms(&forms), &cfg_or(cfg, QuadratureConfig::default()))
        .map_err(err)?;
    Ok((est.value, est.error))
}

/// All iterated integrals up to `level`, keyed by words of form indices.
#[pyfunction]
#[pyo3(signature = (path, forms, level, cfg = None))]
fn signature<'py>(
    py: Python<'py>,
    path: &PyMembrane,
    forms: Vec<PyRef<'_, PyForm>>,
    level: usize,
    cfg: Option<&PyQuadrature>,
) -> PyResult<Bound<'py, PyDict>> {
    let series = chen::transport_series(&path.inner, &to_forms(&forms), level, &cfg_or(cfg, QuadratureConfig::default()))
        .map_err(err)?;
    tuple_keyed(py, series.coefficients())
}

/// Shuffle identity along a path, as a check record.
#[pyfunction]
#[pyo3(signature = (path, first, second, cfg = None, tol = 1e-6))]
fn check_shuffle(
    py: Python<'_>,
    path: &PyMembrane,
    first: Vec<PyRef<'_, PyForm>>,
    second: Vec<PyRef<'_, PyForm>>,
    cfg: Option<&PyQuadrature>,
    tol: f64,
) -> PyResult<Py<PyAny>> {
    let check = chen::check_shuffle(
        &path.inner,
        &to_forms(&first),
        &to_forms(&second),
        &cfg_or(cfg, QuadratureConfig::default()),
        Tolerance::mixed(tol),
    )
    .map_err(err)?;
    check_dict(py, &check)
}

/// `(value, error_estimate)` of a labeled integrand over a membrane.
#[pyfunction]
#[pyo3(signature = (membrane, integrand, cfg = None))]
fn integrate_membrane(
    membrane: &PyMembrane,
    integrand: &PyIntegrand,
    cfg: Option<&PyQuadrature>,
) -> PyResult<(f64, Option<f64>)> {
    let est = membranes::integrate_membrane(&membrane.inner, &integrand.inner, &cfg_or(cfg, QuadratureConfig::gauss()))
        .map_err(err)?;
    Ok((est.value, est.error))
}

/// Shuffle product identity on a membrane, as a check record.
#[pyfunction]
#[pyo3(signature = (membrane, first, second, barred = false, cfg = None, tol = 1e-5))]
fn check_membrane_shuffle(
    py: Python<'_>,
    membrane: &PyMembrane,
    first: &PyIntegrand,
    second: &PyIntegrand,
    barred: bool,
    cfg: Option<&PyQuadrature>,
    tol: f64,
) -> PyResult<Py<PyAny>> {
    let check = membranes::check_membrane_shuffle(
        &membrane.inner,
        &first.inner,
        &second.inner,
        barred,
        &cfg_or(cfg, QuadratureConfig::gauss()),
        Tolerance::mixed(tol),
    )
    .map_err(err)?;
    check_dict(py, &check)
}

/// Holonomy of the connection `A f` around `path`, as nested row lists.
#[pyfunction]
#[pyo3(signature = (path, matrix, form, level = 6, cfg = None))]
fn holonomy(
    path: &PyMembrane,
    matrix: Vec<Vec<f64>>,
    form: &PyForm,
    level: usize,
    cfg: Option<&PyQuadrature>,
) -> PyResult<Vec<Vec<f64>>> {
    let size = matrix.len();
    if matrix.iter().any(|row| row.len() != size) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    let a = DMatrix::from_fn(size, size, |r, c| matrix[r][c]);
    let conn = MatrixConnection::scaled(&a, &form.inner).map_err(err)?;
    let h = chen::holonomy(&path.inner, &conn, level, &cfg_or(cfg, QuadratureConfig::default())).map_err(err)?;
    Ok((0..size).map(|r| (0..size).map(|c| h[(r, c)]).collect()).collect())
}

/// Number of `(m1, m2)` shuffles.
#[pyfunction]
fn shuffle_count(m1: usize, m2: usize) -> u128 {
    shuffles::count_sh(m1, m2)
}

/// `(m1, m2)` shuffles as permutations of `0..m1+m2`.
#[pyfunction]
#[pyo3(signature = (m1, m2, barred = false))]
fn enumerate_shuffles(m1: usize, m2: usize, barred: bool) -> Vec<Vec<usize>> {
    if barred {
        shuffles::enumerate_sh_bar(m1, m2)
    } else {
        shuffles::enumerate_sh(m1, m2)
    }
}

/// Size of a product shuffle family: `product`, `glue` or `transport`.
#[pyfunction]
#[pyo3(signature = (k1, k2, family = "product", copies = 1))]
fn family_count(k1: Vec<usize>, k2: Vec<usize>, family: &str, copies: usize) -> PyResult<u128> {
    match family {
        "product" => Ok(shuffles::count_product(&k1, &k2)),
        "glue" => Ok(shuffles::count_sh1(&k1, &k2)),
        "transport" => Ok(shuffles::count_shn(&k1, &k2, copies)),
        other => Err(PyValueError::new_err(format!("unknown family '{other}'"))),
    }
}

/// Runs a check suite over a scene document given as JSON text and
/// returns the report as JSON text. Relative grid paths resolve against
/// `base`.
#[pyfunction]
#[pyo3(signature = (document, suite = "all", base = "."))]
fn verify(py: Python<'_>, document: &str, suite: &str, base: &str) -> PyResult<String> {
    let scene = Scene::from_str(document, Path::new(base)).map_err(err)?;
    let report = py.detach(|| scene.verify(suite)).map_err(err)?;
    Ok(report.to_json())
}

#[pymodule]
fn iterint_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IterintError", m.py().get_type::<IterintError>())?;
    m.add_class::<PyExpr>()?;
    m.add_class::<PyForm>()?;
    m.add_class::<PyMembrane>()?;
    m.add_class::<PyQuadrature>()?;
    m.add_class::<PyIntegrand>()?;
    m.add_function(wrap_pyfunction!(iterated_integral, m)?)?;
    m.add_function(wrap_pyfunction!(signature, m)?)?;
    m.add_function(wrap_pyfunction!(check_shuffle, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_membrane, m)?)?;
    m.add_function(wrap_pyfunction!(check_membrane_shuffle, m)?)?;
    m.add_function(wrap_pyfunction!(holonomy, m)?)?;
    m.add_function(wrap_pyfunction!(shuffle_count, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_shuffles, m)?)?;
    m.add_function(wrap_pyfunction!(family_count, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
