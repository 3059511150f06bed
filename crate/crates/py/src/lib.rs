//! Python bindings. Reports cross the boundary as plain dicts decoded from the
//! same JSON the command-line tool writes.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use polyscore_core::estimators::{self, Estimator, MleOptions, StudyOptions};
use polyscore_core::expfam::{self, GridSpec};
use polyscore_core::fisher::{self, Source, VerifyOptions};
use polyscore_core::hardness::{self, ParamMode};
use polyscore_core::polybasis::enumerate_basis as core_enumerate_basis;
use polyscore_core::sampler::{self, McmcConfig};
use polyscore_core::Error;

create_exception!(polyscore, PolyscoreError, PyException);

fn err(e: Error) -> PyErr {
    match e {
        Error::InvalidFamily(_)
        | Error::DimensionMismatch { .. }
        | Error::DegreeOverflow { .. }
        | Error::Precondition(_)
        | Error::NonSeparable(_)
        | Error::EmptySamples
        | Error::Dimacs { .. }
        | Error::Format(_) => PyValueError::new_err(e.to_string()),
        other => PolyscoreError::new_err(other.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, value: &impl Serialize) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PolyscoreError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn grid_spec(radius: Option<f64>, points_per_axis: Option<usize>) -> GridSpec {
    GridSpec {
        radius,
        points_per_axis,
        refine: None,
    }
}

/// Parameter vector `theta` over the monomials of degree `1..=d` in `n` variables.
#[pyclass(name = "ParamVector", frozen, module = "polyscore")]
struct PyParamVector {
    inner: expfam::ParamVector,
}

#[pymethods]
impl PyParamVector {
    #[new]
    #[pyo3(signature = (n, d, theta=None, bound=1.0))]
    fn new(n: usize, d: u32, theta: Option<Vec<f64>>, bound: f64) -> PyResult<Self> {
        let basis = Arc::new(core_enumerate_basis(n, d).map_err(err)?);
        let theta = theta.unwrap_or_else(|| vec![0.0; basis.len()]);
        let inner = expfam::ParamVector::new(basis, theta, bound).map_err(err)?;
        Ok(Self { inner })
    }

    /// Parses the `{"n", "d", "B", "terms"}` parameter format.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let json: expfam::ParamJson = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = expfam::ParamVector::from_json(&json).map_err(err)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner.to_json()).map_err(|e| PolyscoreError::new_err(e.to_string()))
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> u32 {
        self.inner.d()
    }

    #[getter]
    fn bound(&self) -> f64 {
        self.inner.bound()
    }

    #[getter]
    fn theta(&self) -> Vec<f64> {
        self.inner.theta().to_vec()
    }

    fn log_density(&self, x: Vec<f64>) -> PyResult<f64> {
        expfam::log_unnormalized_density(&self.inner, &x).map_err(err)
    }

    fn score(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        expfam::score(&self.inner, &x).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "ParamVector(n={}, d={}, B={})",
            self.inner.n(),
            self.inner.d(),
            self.inner.bound()
        )
    }
}

/// `N` draws in `n` dimensions.
#[pyclass(name = "SampleSet", frozen, module = "polyscore")]
struct PySampleSet {
    inner: sampler::SampleSet,
}

#[pymethods]
impl PySampleSet {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            inner: sampler::SampleSet::from_rows(&rows).map_err(err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: sampler::SampleSet::load(&path).map_err(err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        self.inner.rows().map(<[f64]>::to_vec).collect()
    }

    fn provenance<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.provenance())
    }
}

fn parse_estimator(name: &str) -> PyResult<Estimator> {
    name.parse().map_err(PyValueError::new_err)
}

/// Exponent tuples of the basis in graded lexicographic order.
#[pyfunction]
fn enumerate_basis(n: usize, d: u32) -> PyResult<Vec<Vec<u32>>> {
    let b = core_enumerate_basis(n, d).map_err(err)?;
    Ok(b.indices()
        .iter()
        .map(|i| i.degrees().iter().map(|&e| u32::from(e)).collect())
        .collect())
}

/// Exact sampling for separable `theta`, MALA otherwise (or as forced by `method`).
#[pyfunction]
#[pyo3(signature = (p, count, seed=0, method="auto"))]
fn sample(p: &PyParamVector, count: usize, seed: u64, method: &str) -> PyResult<PySampleSet> {
    let separable = p.inner.first_coupling().is_none();
    let s = match (method, separable) {
        ("exact", _) | ("auto", true) => sampler::sample_exact_separable(&p.inner, count, seed),
        ("mala", _) | ("auto", false) => sampler::sample_mala(&p.inner, count, &McmcConfig::default(), seed),
        (other, _) => return Err(PyValueError::new_err(format!("unknown method '{other}'"))),
    }
    .map_err(err)?;
    Ok(PySampleSet { inner: s })
}

/// Fits `theta` of degree `d`; returns the fit report as a dict.
#[pyfunction]
#[pyo3(signature = (samples, d, estimator="sm"))]
fn fit<'py>(py: Python<'py>, samples: &PySampleSet, d: u32, estimator: &str) -> PyResult<Bound<'py, PyAny>> {
    let basis = Arc::new(core_enumerate_basis(samples.inner.n(), d).map_err(err)?);
    let rep = match parse_estimator(estimator)? {
        Estimator::Sm => estimators::fit_score_matching(&samples.inner, &basis),
        Estimator::Mle => estimators::fit_mle(&samples.inner, &basis, &MleOptions::default()),
    }
    .map_err(err)?;
    to_py(py, &rep)
}

/// `sm_loss(theta)` on a sample set.
#[pyfunction]
fn sm_loss(p: &PyParamVector, samples: &PySampleSet) -> PyResult<f64> {
    estimators::sm_loss(&p.inner, &samples.inner).map_err(err)
}

/// `log Z` with its grid-convergence gate.
#[pyfunction]
#[pyo3(signature = (p, radius=None, points_per_axis=None))]
fn log_partition<'py>(
    py: Python<'py>,
    p: &PyParamVector,
    radius: Option<f64>,
    points_per_axis: Option<usize>,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = expfam::grid_for(&p.inner, &grid_spec(radius, points_per_axis)).map_err(err)?;
    to_py(py, &expfam::checked_log_partition(&p.inner, &grid).map_err(err)?)
}

/// `Cov(T)` by quadrature, as a list of rows.
#[pyfunction]
fn fisher_info(p: &PyParamVector) -> PyResult<Vec<Vec<f64>>> {
    let grid = expfam::grid_for(&p.inner, &GridSpec::default()).map_err(err)?;
    let i = fisher::fisher_info(&p.inner, Source::Grid(&grid)).map_err(err)?;
    Ok(i.row_iter().map(|r| r.iter().copied().collect()).collect())
}

/// The seven spectral and moment checks, as a dict.
#[pyfunction]
#[pyo3(signature = (p, seed=0, corrupt_fisher=false))]
fn verify_bounds<'py>(
    py: Python<'py>,
    p: &PyParamVector,
    seed: u64,
    corrupt_fisher: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = expfam::grid_for(&p.inner, &GridSpec::default()).map_err(err)?;
    let opts = VerifyOptions { seed, corrupt_fisher };
    let rep = fisher::verify_bounds(&p.inner, &grid, &opts).map_err(err)?;
    let mut v = serde_json::to_value(&rep).map_err(|e| PolyscoreError::new_err(e.to_string()))?;
    v["all_hold"] = rep.all_hold().into();
    to_py(py, &v)
}

/// `(alpha, beta)` for a prescription such as `"zeroth"` or `"first:scaled(0.1)"`.
#[pyfunction]
fn default_params(n: usize, m: usize, mode: &str) -> PyResult<(f64, f64)> {
    let mode: ParamMode = mode.parse().map_err(err)?;
    hardness::default_params(n, m, mode).map_err(err)
}

/// Encodes DIMACS text as a parameter vector; returns the encoding as a dict.
#[pyfunction]
fn encode_cnf<'py>(py: Python<'py>, dimacs: &str, alpha: f64, beta: f64) -> PyResult<Bound<'py, PyAny>> {
    let f = hardness::parse_dimacs(dimacs).map_err(err)?;
    let inst = hardness::encode(&f, alpha, beta).map_err(err)?;
    to_py(py, &inst.to_json())
}

/// Squared-error study over sample sizes; returns the table as a dict.
#[pyfunction]
#[pyo3(signature = (theta_star, sizes, trials=20, seed=0, estimators=vec!["sm".to_string(), "mle".to_string()]))]
fn convergence_study<'py>(
    py: Python<'py>,
    theta_star: &PyParamVector,
    sizes: Vec<usize>,
    trials: usize,
    seed: u64,
    estimators: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let ests = estimators
        .iter()
        .map(|e| parse_estimator(e))
        .collect::<PyResult<Vec<_>>>()?;
    let opts = StudyOptions {
        sizes,
        trials,
        estimators: ests,
        seed,
        mle: MleOptions::default(),
        mcmc: McmcConfig::default(),
    };
    let table = estimators::convergence_study(&theta_star.inner, &opts).map_err(err)?;
    to_py(py, &table)
}

/// Runs the command-line tool with `args` (without the program name); returns the exit code.
#[pyfunction]
fn cli(args: Vec<String>) -> i32 {
    polyscore_core::cli::run(std::iter::once("polyscore".to_string()).chain(args))
}

#[pymodule]
fn polyscore(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PolyscoreError", m.py().get_type::<PolyscoreError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyParamVector>()?;
    m.add_class::<PySampleSet>()?;
    m.add_function(wrap_pyfunction!(enumerate_basis, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(sm_loss, m)?)?;
    m.add_function(wrap_pyfunction!(log_partition, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_info, m)?)?;
    m.add_function(wrap_pyfunction!(verify_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(default_params, m)?)?;
    m.add_function(wrap_pyfunction!(encode_cnf, m)?)?;
    m.add_function(wrap_pyfunction!(convergence_study, m)?)?;
    m.add_function(wrap_pyfunction!(cli, m)?)?;
    Ok(())
}
