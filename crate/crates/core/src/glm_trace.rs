//! Nuclear-norm penalized maximum likelihood for general matrix designs.
//!
//! Outer loop: local quadratic (Newton) approximation of the loss at the
//! current iterate, with per-sample weights `w_i = b''(η_i)` and working
//! residuals `r_i = Y_i - b'(η_i)`. Inner loop: Peaceman–Rachford splitting on
//! the penalized quadratic, whose `θx` step is a ridge-type linear solve on the
//! `n × d1·d2` stacked design.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::expfam::{Design, ExpFamily, Problem};
use crate::linsolve::QuadraticSolve;
use crate::matcore::{nuclear_norm, operator_norm, DenseMatrix};
use crate::splitting::{peaceman_rachford, SplittingParams};

/// Weights below this are clamped so saturated logits keep a finite working response.
pub const MIN_WEIGHT: f64 = 1e-12;

/// Largest `d1·d2` for which the quadratic step factors the dense normal matrix.
/// Above it the step runs conjugate gradient with the design applied matrix-free.
pub const DEFAULT_DENSE_LIMIT: usize = 1600;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Relaxation of the dual steps, in (0, 1).
    pub alpha: f64,
    /// Penalty parameter of the splitting.
    pub beta: f64,
    /// Frobenius change between outer iterates that ends the fit.
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    /// Relative change of `θy` that ends an inner solve.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub seed: u64,
    /// See [`DEFAULT_DENSE_LIMIT`].
    pub dense_limit: usize,
    /// Reduced-rank solver only: use the `2S/n + βI` system exactly as printed
    /// instead of the one matching the averaged likelihood.
    pub paper_literal_scaling: bool,
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            alpha: 0.9,
            beta: 1.0,
            outer_tol: 1e-3,
            outer_max_iter: 100,
            inner_tol: 1e-6,
            inner_max_iter: 500,
            seed: 0,
            dense_limit: DEFAULT_DENSE_LIMIT,
            paper_literal_scaling: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return invalid(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0) {
            return invalid("tolerances must be positive");
        }
        if self.outer_max_iter == 0 || self.inner_max_iter == 0 {
            return invalid("iteration caps must be positive");
        }
        Ok(())
    }
}

/// Estimate plus convergence diagnostics.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub theta_hat: DenseMatrix,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    /// `loss(θ̂) + λ‖θ̂‖_N`
    pub objective: f64,
    /// `‖∇L(θ̂)‖_op`, at most `λ` at an interior optimum.
    pub kkt_operator_norm: f64,
    /// `|<-∇L(θ̂), θ̂> - λ‖θ̂‖_N|`
    pub kkt_alignment_gap: f64,
    pub converged: bool,
}

/// The scalar part of a [`FitResult`], as written by the CLI.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FitDiagnostics {
    pub objective: f64,
    pub outer_iters: usize,
    pub inner_iters_total: usize,
    pub kkt_operator_norm: f64,
    pub kkt_alignment_gap: f64,
    pub converged: bool,
    pub nuclear_norm: f64,
    pub rank: usize,
}

impl FitResult {
    pub fn diagnostics(&self) -> Result<FitDiagnostics> {
        let sv = crate::matcore::singular_values(&self.theta_hat)?;
        Ok(FitDiagnostics {
            objective: self.objective,
            outer_iters: self.outer_iters,
            inner_iters_total: self.inner_iters_total,
            kkt_operator_norm: self.kkt_operator_norm,
            kkt_alignment_gap: self.kkt_alignment_gap,
            converged: self.converged,
            nuclear_norm: sv.iter().sum(),
            rank: sv.iter().filter(|&&s| s > 1e-6).count(),
        })
    }
}

/// `loss(Θ) + λ‖Θ‖_N`
pub fn objective(p: &Problem, theta: &DenseMatrix, lambda: f64) -> Result<f64> {
    Ok(p.loss(theta)? + lambda * nuclear_norm(theta)?)
}

pub(crate) fn finish(
    p: &Problem,
    theta: DenseMatrix,
    lambda: f64,
    outer_iters: usize,
    inner_iters_total: usize,
    converged: bool,
) -> Result<FitResult> {
    let grad = p.gradient(&theta)?;
    let nuc = nuclear_norm(&theta)?;
    let objective = p.loss(&theta)? + lambda * nuc;
    let kkt_operator_norm = operator_norm(&grad)?;
    let kkt_alignment_gap = (-grad.inner(&theta) - lambda * nuc).abs();
    Ok(FitResult { theta_hat: theta, outer_iters, inner_iters_total, objective, kkt_operator_norm, kkt_alignment_gap, converged })
}

/// Returns the zero fit when `Θ = 0` already satisfies the optimality
/// condition `‖∇L(0)‖_op ≤ λ`.
pub(crate) fn zero_if_optimal(p: &Problem, lambda: f64) -> Result<Option<FitResult>> {
    let (d1, d2) = p.theta_shape();
    let zero = DenseMatrix::zeros(d1, d2);
    if operator_norm(&p.gradient(&zero)?)? <= lambda {
        return Ok(Some(finish(p, zero, lambda, 0, 0, true)?));
    }
    Ok(None)
}

/// Fits a general-design problem.
pub fn fit(p: &Problem, cfg: &SolverConfig) -> Result<FitResult> {
    cfg.validate()?;
    let design = match p.design() {
        Design::General(g) => g,
        _ => return invalid("fit expects a general matrix design; use fit_rrr or fit_onebit"),
    };
    if let Some(zero) = zero_if_optimal(p, cfg.lambda)? {
        return Ok(zero);
    }
    let (d1, d2) = p.theta_shape();
    let dim = d1 * d2;
    let n = p.n_obs() as f64;
    let fam = p.family();
    let y = p.responses();
    let params = SplittingParams {
        alpha: cfg.alpha,
        beta: cfg.beta,
        tau: 2.0 * cfg.lambda / cfg.beta,
        tol: cfg.inner_tol,
        max_iter: cfg.inner_max_iter,
    };

    let mut theta = DenseMatrix::zeros(d1, d2);
    let mut best = (objective(p, &theta, cfg.lambda)?, theta.clone());
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;

    // Gaussian surrogates are exact, so one outer step solves the problem.
    let exact_surrogate = fam == ExpFamily::GaussianIdentity;
    let dense = dim <= cfg.dense_limit;

    while outer < cfg.outer_max_iter {
        outer += 1;
        let eta = p.predictors_unchecked(&theta);
        let coef: Vec<f64> = eta.iter().map(|&e| 2.0 * fam.b_double_prime(e).max(MIN_WEIGHT) / n).collect();
        let resid: Vec<f64> = eta.iter().zip(y).map(|(&e, &yi)| yi - fam.b_prime(e)).collect();
        // 2c = (2/n) Σ r_i x_i = -2 ∇L(Θ)
        let lin: Vec<f64> = p.adjoint(&resid).as_slice().iter().map(|v| 2.0 * v).collect();

        let mut quad = QuadraticSolve::new(design.flat(), dim, coef, cfg.beta, dense)?;
        let step = peaceman_rachford(|rhs| quad.solve(rhs), &lin, &theta, &theta, &params)?;
        inner_total += step.iterations;

        let change = step.theta.sub(&theta).frobenius_norm();
        theta = step.theta;
        let obj = objective(p, &theta, cfg.lambda)?;
        if obj < best.0 {
            best = (obj, theta.clone());
        }
        if step.converged && (change < cfg.outer_tol || exact_surrogate) {
            converged = true;
            break;
        }
    }

    let out = if converged { theta } else { best.1 };
    finish(p, out, cfg.lambda, outer, inner_total, converged)
}
