//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tracereg::experiments::{
    run_alignment_study, run_glm_vs_linear, run_rate_study, AlignmentStudy, GlmVsLinearStudy, RateStudy, SampleGrid,
    StudyKind,
};
use tracereg::expfam::lambda_default;
use tracereg::matcore;
use tracereg::{
    DenseMatrix, Design, Error, ExpFamily, GeneralDesign, OneBitConfig, Problem, RrrDesign, SingletonDesign,
    SolverConfig,
};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Solver { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(rows).map_err(py_err)
}

fn rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn family(name: &str) -> PyResult<ExpFamily> {
    match name {
        "logit" | "bernoulli_logit" => Ok(ExpFamily::BernoulliLogit),
        "gaussian" | "gaussian_identity" => Ok(ExpFamily::GaussianIdentity),
        _ => Err(PyValueError::new_err(format!("unknown family {name:?}; use 'logit' or 'gaussian'"))),
    }
}

fn penalty(p: &Problem, lam: Option<f64>, lambda_c: Option<f64>) -> PyResult<f64> {
    match (lam, lambda_c) {
        (Some(l), _) => Ok(l),
        (None, Some(c)) => lambda_default(p, c).map_err(py_err),
        (None, None) => Err(PyValueError::new_err("pass lam or lambda_c")),
    }
}

/// Estimate and convergence diagnostics of one fit.
#[pyclass(frozen, name = "FitResult")]
struct PyFitResult {
    inner: tracereg::FitResult,
    lambda: f64,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn theta_hat(&self) -> Vec<Vec<f64>> {
        rows(&self.inner.theta_hat)
    }
    #[getter]
    fn lam(&self) -> f64 {
        self.lambda
    }
    #[getter]
    fn outer_iters(&self) -> usize {
        self.inner.outer_iters
    }
    #[getter]
    fn inner_iters_total(&self) -> usize {
        self.inner.inner_iters_total
    }
    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }
    #[getter]
    fn kkt_operator_norm(&self) -> f64 {
        self.inner.kkt_operator_norm
    }
    #[getter]
    fn kkt_alignment_gap(&self) -> f64 {
        self.inner.kkt_alignment_gap
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    fn __repr__(&self) -> String {
        let (r, c) = self.inner.theta_hat.shape();
        format!(
            "FitResult(shape=({r}, {c}), objective={:.6}, outer_iters={}, converged={})",
            self.inner.objective, self.inner.outer_iters, self.inner.converged
        )
    }
}

fn solver_config(lambda: f64, outer_tol: f64, inner_tol: f64, max_iter: usize, seed: u64) -> SolverConfig {
    let mut c = SolverConfig::new(lambda);
    c.outer_tol = outer_tol;
    c.inner_tol = inner_tol;
    c.outer_max_iter = max_iter;
    c.seed = seed;
    c
}

/// Nuclear-penalized GLM with general matrix covariates `designs[i]` (d1 x d2).
#[pyfunction]
#[pyo3(signature = (designs, y, lam=None, lambda_c=None, family="logit", outer_tol=1e-3, inner_tol=1e-6, max_iter=100, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_glm_trace(
    py: Python<'_>,
    designs: Vec<Vec<Vec<f64>>>,
    y: Vec<f64>,
    lam: Option<f64>,
    lambda_c: Option<f64>,
    family: &str,
    outer_tol: f64,
    inner_tol: f64,
    max_iter: usize,
    seed: u64,
) -> PyResult<PyFitResult> {
    let xs = designs.iter().map(|d| matrix(d)).collect::<PyResult<Vec<_>>>()?;
    let design = GeneralDesign::new(&xs).map_err(py_err)?;
    let p = Problem::new(Design::General(design), y, self::family(family)?).map_err(py_err)?;
    let lambda = penalty(&p, lam, lambda_c)?;
    let cfg = solver_config(lambda, outer_tol, inner_tol, max_iter, seed);
    let inner = py.detach(|| tracereg::fit(&p, &cfg)).map_err(py_err)?;
    Ok(PyFitResult { inner, lambda })
}

/// Reduced-rank GLM: `x` is n x p covariates, `y` is n x q responses.
/// Returns the q x p coefficient matrix.
#[pyfunction]
#[pyo3(signature = (x, y, lam=None, lambda_c=None, family="logit", outer_tol=1e-3, inner_tol=1e-6, max_iter=100, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_rrr(
    py: Python<'_>,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    lam: Option<f64>,
    lambda_c: Option<f64>,
    family: &str,
    outer_tol: f64,
    inner_tol: f64,
    max_iter: usize,
    seed: u64,
) -> PyResult<PyFitResult> {
    let x = matrix(&x)?;
    let y = matrix(&y)?;
    if x.rows() != y.rows() {
        return Err(PyValueError::new_err(format!("x has {} rows but y has {}", x.rows(), y.rows())));
    }
    let q = y.cols();
    let p = Problem::new(Design::Rrr(RrrDesign::new(x, q).map_err(py_err)?), y.into_vec(), self::family(family)?)
        .map_err(py_err)?;
    let lambda = penalty(&p, lam, lambda_c)?;
    let cfg = solver_config(lambda, outer_tol, inner_tol, max_iter, seed);
    let inner = py.detach(|| tracereg::fit_rrr(&p, &cfg)).map_err(py_err)?;
    Ok(PyFitResult { inner, lambda })
}

/// Completion on a d x d grid from observed `(row, col)` cells. `R` bounds the
/// linear predictor, so the estimate satisfies `max|theta| <= R/d`.
#[pyfunction]
#[pyo3(signature = (cells, y, d, r, lam=None, lambda_c=None, family="logit", admm_tol=1e-5, outer_tol=1e-3, seed=0))]
#[allow(clippy::too_many_arguments)]
fn fit_onebit(
    py: Python<'_>,
    cells: Vec<(usize, usize)>,
    y: Vec<f64>,
    d: usize,
    r: f64,
    lam: Option<f64>,
    lambda_c: Option<f64>,
    family: &str,
    admm_tol: f64,
    outer_tol: f64,
    seed: u64,
) -> PyResult<PyFitResult> {
    let design = SingletonDesign::square(d, cells).map_err(py_err)?;
    let p = Problem::new(Design::Singleton(design), y, self::family(family)?).map_err(py_err)?;
    let lambda = penalty(&p, lam, lambda_c)?;
    let mut cfg = OneBitConfig::new(lambda, r);
    cfg.admm_tol = admm_tol;
    cfg.outer_tol = outer_tol;
    cfg.seed = seed;
    let inner = py.detach(|| tracereg::fit_onebit(&p, &cfg)).map_err(py_err)?;
    Ok(PyFitResult { inner, lambda })
}

#[pyfunction]
fn soft_threshold_sv(a: Vec<Vec<f64>>, tau: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&matcore::soft_threshold_sv(&matrix(&a)?, tau).map_err(py_err)?))
}

#[pyfunction]
fn project_psd(a: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&matcore::project_psd(&matrix(&a)?).map_err(py_err)?))
}

#[pyfunction]
fn clip_box(a: Vec<Vec<f64>>, r: f64) -> PyResult<Vec<Vec<f64>>> {
    Ok(rows(&matcore::clip_box(&matrix(&a)?, r).map_err(py_err)?))
}

/// Frobenius, operator, nuclear and elementwise-max norms.
#[pyfunction]
fn norms(a: Vec<Vec<f64>>) -> PyResult<BTreeMap<&'static str, f64>> {
    let n = matcore::norms(&matrix(&a)?).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("frobenius", n.frobenius),
        ("operator", n.operator),
        ("nuclear", n.nuclear),
        ("elementwise_max", n.elementwise_max),
    ]))
}

#[pyfunction]
#[pyo3(signature = (a, q=0.0))]
fn bq_measure(a: Vec<Vec<f64>>, q: f64) -> PyResult<f64> {
    matcore::bq_measure(&matrix(&a)?, q).map_err(py_err)
}

fn study_kind(kind: &str) -> PyResult<StudyKind> {
    match kind {
        "matrix_reg" | "matrix-reg" => Ok(StudyKind::MatrixReg),
        "rrr" => Ok(StudyKind::Rrr),
        "onebit" => Ok(StudyKind::Onebit),
        _ => Err(PyValueError::new_err(format!("unknown kind {kind:?}"))),
    }
}

/// Runs a replication study and returns the report as a JSON string.
#[pyfunction]
#[pyo3(signature = (study, kind="matrix_reg", seed=0, reps=None, dims=None, grid=None, paper_scale=false, jobs=0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    study: &str,
    kind: &str,
    seed: u64,
    reps: Option<usize>,
    dims: Option<Vec<usize>>,
    grid: Option<Vec<f64>>,
    paper_scale: bool,
    jobs: usize,
) -> PyResult<String> {
    let kind = study_kind(kind)?;
    let report = match study {
        "rate" => {
            let mut s = RateStudy::preset(kind, paper_scale, seed);
            if let Some(g) = grid {
                s.grid = match s.grid {
                    SampleGrid::Counts(_) => SampleGrid::Counts(g.iter().map(|&v| v.round() as usize).collect()),
                    SampleGrid::Ratios(_) => SampleGrid::Ratios(g),
                };
            }
            s.dims = dims.unwrap_or(s.dims);
            s.reps = reps.unwrap_or(s.reps);
            s.jobs = jobs;
            py.detach(|| run_rate_study(&s))
        }
        "alignment" => {
            let mut s = AlignmentStudy::preset(kind, paper_scale, seed).map_err(py_err)?;
            s.ratio_grid = grid.unwrap_or(s.ratio_grid);
            s.dims = dims.unwrap_or(s.dims);
            s.reps = reps.unwrap_or(s.reps);
            s.jobs = jobs;
            py.detach(|| run_alignment_study(&s))
        }
        "glm_vs_linear" | "glm-vs-linear" => {
            let mut s = GlmVsLinearStudy::preset(paper_scale, seed);
            s.ratio_grid = grid.unwrap_or(s.ratio_grid);
            s.dims = dims.unwrap_or(s.dims);
            s.reps = reps.unwrap_or(s.reps);
            s.jobs = jobs;
            py.detach(|| run_glm_vs_linear(&s))
        }
        _ => return Err(PyValueError::new_err(format!("unknown study {study:?}"))),
    }
    .map_err(py_err)?;
    report.to_json().map_err(py_err)
}

#[pymodule]
fn pytracereg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit_glm_trace, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rrr, m)?)?;
    m.add_function(wrap_pyfunction!(fit_onebit, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold_sv, m)?)?;
    m.add_function(wrap_pyfunction!(project_psd, m)?)?;
    m.add_function(wrap_pyfunction!(clip_box, m)?)?;
    m.add_function(wrap_pyfunction!(norms, m)?)?;
    m.add_function(wrap_pyfunction!(bq_measure, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
