//! Strictly contractive Peaceman–Rachford splitting for
//!
//! ```text
//! minimize  ½ θxᵀ A θx - <c, θx>  +  (τβ/2) ‖θy‖_N
//! subject to θx - θy = -prev
//! ```
//!
//! where `A = 2H + βI` is handled by the caller's `solve_x`, `lin = 2c`, and
//! `tau` is the singular-value threshold. The quadratic is twice the local
//! surrogate, hence the factors of two.

use crate::error::Result;
use crate::matcore::{soft_threshold_sv, DenseMatrix};

pub(crate) struct SplittingParams {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) struct SplittingOutcome {
    pub theta: DenseMatrix,
    pub iterations: usize,
    pub converged: bool,
}

/// Runs the four-step iteration. `warm` seeds `θy`; `θx` and the dual start at zero.
pub(crate) fn peaceman_rachford(
    mut solve_x: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    lin: &[f64],
    prev: &DenseMatrix,
    warm: &DenseMatrix,
    params: &SplittingParams,
) -> Result<SplittingOutcome> {
    let (rows, cols) = prev.shape();
    let len = rows * cols;
    let SplittingParams { alpha, beta, tau, tol, max_iter } = *params;
    let prev = prev.as_slice();

    let mut theta_y = warm.clone();
    let mut dual = vec![0.0; len];
    let mut rhs = vec![0.0; len];

    for it in 1..=max_iter {
        let y = theta_y.as_slice();
        for k in 0..len {
            rhs[k] = beta * (y[k] - prev[k]) + dual[k] + lin[k];
        }
        let theta_x = solve_x(&rhs)?;

        let mut z = vec![0.0; len];
        for k in 0..len {
            dual[k] -= alpha * beta * (theta_x[k] - y[k] + prev[k]);
            z[k] = theta_x[k] + prev[k] - dual[k] / beta;
        }
        let next = soft_threshold_sv(&DenseMatrix::from_vec_unchecked(rows, cols, z), tau)?;

        let n = next.as_slice();
        let mut change = 0.0;
        let mut resid = 0.0;
        for k in 0..len {
            let r = theta_x[k] + prev[k] - n[k];
            dual[k] -= alpha * beta * r;
            resid += r * r;
            change += (n[k] - y[k]).powi(2);
        }
        let scale = next.frobenius_norm().max(1.0);
        theta_y = next;
        if change.sqrt() <= tol * scale && resid.sqrt() <= tol * scale {
            return Ok(SplittingOutcome { theta: theta_y, iterations: it, converged: true });
        }
    }
    Ok(SplittingOutcome { theta: theta_y, iterations: max_iter, converged: false })
}
