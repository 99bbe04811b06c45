//! Python bindings. Matrices cross the boundary as lists of rows.

use cssdr::asymptotics::covariance_lambda;
use cssdr::data::Dataset;
use cssdr::evaluation::{self, DesignNoise, Model, SimConfig};
use cssdr::fit::{FitConfig, FitReport, KernelParams, Method};
use cssdr::kernels::HBasis;
use cssdr::objective::{GBasis, GBasisKind};
use cssdr::optimizer::OptimOptions;
use cssdr::rotations::{frame_to_angles, AngleVector};
use cssdr::CssError;
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: CssError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(PyValueError::new_err("rows differ in length"));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn dataset(x: &[Vec<f64>], y: Vec<f64>) -> PyResult<Dataset> {
    Dataset::new(matrix(x)?, DVector::from_vec(y)).map_err(err)
}

fn parse<T: std::str::FromStr<Err = CssError>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn g_kind(s: &str) -> PyResult<GBasisKind> {
    match s {
        "full" => Ok(GBasisKind::Full),
        "pure-power" => Ok(GBasisKind::PurePower),
        _ => Err(PyValueError::new_err(
            "g_kind must be \"full\" or \"pure-power\"",
        )),
    }
}

fn noise(s: &str) -> PyResult<DesignNoise> {
    match s {
        "independent" => Ok(DesignNoise::Independent),
        "shared" => Ok(DesignNoise::Shared),
        _ => Err(PyValueError::new_err(
            "noise must be \"independent\" or \"shared\"",
        )),
    }
}

/// Result of `fit`.
#[pyclass(name = "FitResult", get_all, frozen)]
struct PyFit {
    method: String,
    n: usize,
    p: usize,
    d: usize,
    /// p×d basis in input coordinates, as rows.
    beta: Vec<Vec<f64>>,
    beta_working: Vec<Vec<f64>>,
    phi: Vec<f64>,
    objective: Option<f64>,
    initial_objective: Option<f64>,
    trace: Vec<f64>,
    converged: bool,
    iterations: usize,
    eigenvalues: Vec<f64>,
    slice_sizes: Option<Vec<usize>>,
    angle_se: Option<Vec<f64>>,
    warnings: Vec<String>,
}

#[pymethods]
impl PyFit {
    fn __repr__(&self) -> String {
        format!(
            "FitResult(method={:?}, n={}, p={}, d={}, objective={:?})",
            self.method, self.n, self.p, self.d, self.objective
        )
    }
}

impl From<FitReport> for PyFit {
    fn from(r: FitReport) -> Self {
        Self {
            method: r.method.name().to_string(),
            n: r.n,
            p: r.p,
            d: r.d,
            beta: to_rows(&r.beta),
            beta_working: to_rows(&r.beta_working),
            phi: r.phi,
            objective: r.objective,
            initial_objective: r.initial_objective,
            trace: r.trace,
            converged: r.converged,
            iterations: r.iterations,
            eigenvalues: r.eigenvalues,
            slice_sizes: r.slice_sizes,
            angle_se: r.angle_se,
            warnings: r.warnings,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn config(
    method: &str,
    d: usize,
    slices: usize,
    h: f64,
    h_degree: usize,
    g_degree: usize,
    g_kind_name: &str,
    standardize: bool,
    restarts: usize,
    seed: u64,
) -> PyResult<FitConfig> {
    Ok(FitConfig {
        method: parse(method)?,
        d,
        kernel: KernelParams {
            slices,
            bandwidth: h,
            h_degree,
        },
        g_degree,
        g_kind: g_kind(g_kind_name)?,
        standardize,
        optim: OptimOptions {
            restarts,
            seed,
            ..FitConfig::default().optim
        },
        ..FitConfig::default()
    })
}

/// Estimate a `d`-dimensional basis with one of the eight methods.
#[pyfunction]
#[pyo3(signature = (x, y, method = "css-pir", d = 1, slices = 10, h = 0.4, h_degree = 2,
                    g_degree = 2, g_kind = "full", standardize = true, restarts = 4, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn fit(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    method: &str,
    d: usize,
    slices: usize,
    h: f64,
    h_degree: usize,
    g_degree: usize,
    g_kind: &str,
    standardize: bool,
    restarts: usize,
    seed: u64,
) -> PyResult<PyFit> {
    let ds = dataset(&x, y)?;
    let cfg = config(
        method,
        d,
        slices,
        h,
        h_degree,
        g_degree,
        g_kind,
        standardize,
        restarts,
        seed,
    )?;
    cssdr::fit::fit(&ds, &cfg).map(PyFit::from).map_err(err)
}

/// Squared trace correlation between two samples with observations in rows.
#[pyfunction]
fn trace_correlation(u: Vec<Vec<f64>>, v: Vec<Vec<f64>>) -> PyResult<f64> {
    evaluation::trace_correlation(&matrix(&u)?, &matrix(&v)?).map_err(err)
}

/// One simulated dataset `(x, y)`.
#[pyfunction]
#[pyo3(signature = (model, p, n, seed = 7, noise = "independent"))]
fn simulate(
    model: &str,
    p: usize,
    n: usize,
    seed: u64,
    noise: &str,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let ds = evaluation::simulate(parse::<Model>(model)?, p, n, seed, self::noise(noise)?)
        .map_err(err)?;
    Ok((to_rows(ds.x()), ds.y().iter().copied().collect()))
}

/// Orthonormal frame `η(φ)` as rows of a p×d matrix.
#[pyfunction]
fn eta(phi: Vec<f64>, p: usize, d: usize) -> PyResult<Vec<Vec<f64>>> {
    let av = AngleVector::new(phi, p, d).map_err(err)?;
    Ok(to_rows(av.eta().as_matrix()))
}

/// Angles whose frame spans the columns of `beta` (p×d, orthonormal).
#[pyfunction]
fn angles(beta: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    Ok(frame_to_angles(&matrix(&beta)?)
        .map_err(err)?
        .phi()
        .to_vec())
}

/// Mean trace correlation per method over simulated replicates.
#[pyfunction]
#[pyo3(signature = (model, p, n = 100, reps = 100, seed = 7, methods = None, threads = 1))]
fn benchmark(
    model: &str,
    p: usize,
    n: usize,
    reps: usize,
    seed: u64,
    methods: Option<Vec<String>>,
    threads: usize,
) -> PyResult<Vec<(String, f64, f64, usize)>> {
    let mut cfg = SimConfig {
        model: parse(model)?,
        p,
        n,
        reps,
        seed,
        threads,
        ..SimConfig::default()
    };
    if let Some(ms) = methods {
        cfg.methods = ms
            .iter()
            .map(|m| parse::<Method>(m))
            .collect::<PyResult<_>>()?;
    }
    let res = evaluation::run_benchmark(&cfg).map_err(err)?;
    Ok(res
        .summaries
        .iter()
        .map(|s| (s.method.name().to_string(), s.mean, s.se, s.n_success))
        .collect())
}

/// Sandwich covariance of the CSS-PIR angles at `phi` on centered data:
/// returns `(lambda, se, rank of W)`.
#[pyfunction]
#[pyo3(signature = (x, y, phi, d, h_degree = 2, g_degree = 2))]
fn angle_covariance(
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    phi: Vec<f64>,
    d: usize,
    h_degree: usize,
    g_degree: usize,
) -> PyResult<(Vec<Vec<f64>>, Vec<f64>, usize)> {
    let ds = dataset(&x, y)?.center();
    let av = AngleVector::new(phi, ds.p(), d).map_err(err)?;
    let cov = covariance_lambda(&av, &ds, &HBasis::new(h_degree), &GBasis::full(d, g_degree))
        .map_err(err)?;
    Ok((
        to_rows(&cov.lambda),
        cov.se.iter().copied().collect(),
        cov.hessian.rank,
    ))
}

#[pymodule]
fn pycssdr(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(trace_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(eta, m)?)?;
    m.add_function(wrap_pyfunction!(angles, m)?)?;
    m.add_function(wrap_pyfunction!(benchmark, m)?)?;
    m.add_function(wrap_pyfunction!(angle_covariance, m)?)?;
    Ok(())
}
