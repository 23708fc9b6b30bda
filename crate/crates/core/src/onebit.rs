//! 1-bit matrix completion under a nuclear penalty and an entrywise box.
//!
//! Observations reveal single cells through `X_i = s · e_a e_bᵀ`, where `s` is
//! the design scale (the side length for [`SingletonDesign::square`]). The box
//! level `R` bounds the linear predictor, so the coefficient constraint is
//! `‖Θ‖_∞ ≤ R/s`.
//!
//! Each outer step replaces the likelihood by its quadratic expansion at the
//! previous iterate and solves the penalized problem by ADMM on the lifted
//! `(d1+d2) × (d1+d2)` variable
//!
//! ```text
//! L = [[W1, Θ], [Θᵀ, W2]] ⪰ 0,   ‖Θ‖_N = min ½(tr W1 + tr W2).
//! ```
//!
//! The split variable `R` carries the step `Δ = Θ - Θprev` in its off-diagonal
//! block, so the constraint reads `L = R + [[0, Θprev], [Θprevᵀ, 0]]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::expfam::{Design, ExpFamily, Problem, SingletonDesign};
use crate::glm_trace::{finish, objective, zero_if_optimal, FitResult, MIN_WEIGHT};
use crate::matcore::{clip_box, project_psd, DenseMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneBitConfig {
    pub lambda: f64,
    /// Bound on `|<Θ, X_i>|`; the coefficients satisfy `‖Θ‖_∞ ≤ R/s`.
    #[serde(rename = "R")]
    pub r: f64,
    pub rho_admm: f64,
    pub gamma_step: f64,
    pub admm_tol: f64,
    pub admm_max_iter: usize,
    pub outer_tol: f64,
    pub outer_max_iter: usize,
    pub seed: u64,
}

impl OneBitConfig {
    pub fn new(lambda: f64, r: f64) -> Self {
        Self {
            lambda,
            r,
            rho_admm: 0.1,
            gamma_step: 1.618,
            admm_tol: 1e-5,
            admm_max_iter: 2000,
            outer_tol: 1e-3,
            outer_max_iter: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return invalid(format!("lambda must be finite and nonnegative, got {}", self.lambda));
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return invalid(format!("R must be positive, got {}", self.r));
        }
        if !(self.rho_admm > 0.0 && self.rho_admm.is_finite()) {
            return invalid(format!("rho_admm must be positive, got {}", self.rho_admm));
        }
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        if !(self.gamma_step > 0.0 && self.gamma_step < golden + 1e-12) {
            return invalid(format!("gamma_step must lie in (0, {golden:.6}), got {}", self.gamma_step));
        }
        if !(self.admm_tol > 0.0 && self.outer_tol > 0.0) {
            return invalid("tolerances must be positive");
        }
        if self.admm_max_iter == 0 || self.outer_max_iter == 0 {
            return invalid("iteration caps must be positive");
        }
        Ok(())
    }
}

/// 0/1 matrix, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMatrix {
    rows: usize,
    cols: usize,
    data: Vec<u8>,
}

impl BinaryMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!("expected {} entries, got {}", rows * cols, data.len()));
        }
        if data.iter().any(|&v| v > 1) {
            return invalid("binary matrix entries must be 0 or 1");
        }
        Ok(Self { rows, cols, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len().max(1) as f64
    }

    /// Fraction of entries equal to those of `other`, i.e. `1 - ‖A - B‖_F² / (rows·cols)`.
    pub fn agreement(&self, other: &BinaryMatrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return invalid(format!("shape mismatch: {:?} vs {:?}", self.shape(), other.shape()));
        }
        let same = self.data.iter().zip(&other.data).filter(|(a, b)| a == b).count();
        Ok(same as f64 / self.data.len().max(1) as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionRule {
    /// 1 iff the entry is `≥ 0` (logistic fits).
    GlmSignZero,
    /// 1 iff the entry is `≥ 0.5` (least-squares fits).
    LinearHalf,
}

pub fn predict_ratings(theta: &DenseMatrix, rule: PredictionRule) -> BinaryMatrix {
    let cut = match rule {
        PredictionRule::GlmSignZero => 0.0,
        PredictionRule::LinearHalf => 0.5,
    };
    let (rows, cols) = theta.shape();
    let data = theta.as_slice().iter().map(|&v| (v >= cut) as u8).collect();
    BinaryMatrix { rows, cols, data }
}

struct Lifted {
    d1: usize,
    d2: usize,
}

impl Lifted {
    fn size(&self) -> usize {
        self.d1 + self.d2
    }

    fn off_diag(&self, m: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(self.d1, self.d2, |a, b| m[(a, self.d1 + b)])
    }

    /// `[[0, t], [tᵀ, 0]]`
    fn shift(&self, t: &DenseMatrix) -> DenseMatrix {
        let mut s = DenseMatrix::zeros(self.size(), self.size());
        self.set_off_diag(&mut s, t);
        s
    }

    fn set_off_diag(&self, m: &mut DenseMatrix, t: &DenseMatrix) {
        for a in 0..self.d1 {
            for b in 0..self.d2 {
                m[(a, self.d1 + b)] = t[(a, b)];
                m[(self.d1 + b, a)] = t[(a, b)];
            }
        }
    }
}

/// ADMM state carried across outer steps.
struct AdmmState {
    l: DenseMatrix,
    w: DenseMatrix,
}

struct AdmmOutcome {
    theta: DenseMatrix,
    iterations: usize,
    converged: bool,
}

/// Solves `min (1/2n) Σ a Δ² - (1/n) Σ b Δ + λ‖Θprev + Δ‖_N` subject to
/// `|Θprev + Δ| ≤ bound`, with per-cell curvature `a` and score `b`.
#[allow(clippy::too_many_arguments)]
fn admm(
    lift: &Lifted,
    prev: &DenseMatrix,
    a: &DenseMatrix,
    b: &DenseMatrix,
    n: f64,
    bound: f64,
    cfg: &OneBitConfig,
    state: &mut AdmmState,
) -> Result<AdmmOutcome> {
    let m = lift.size();
    let rho = cfg.rho_admm;
    let shift = lift.shift(prev);
    let ridge = DenseMatrix::from_diag(m, m, &vec![2.0 * cfg.lambda; m]);
    let mut r = state.l.sub(&shift);

    for it in 1..=cfg.admm_max_iter {
        let l = project_psd(&r.add(&shift).sub(&state.w.add(&ridge).scale(1.0 / rho)))?;
        let c = l.sub(&shift).add_scaled(1.0 / rho, &state.w);

        let mut next = c.clone();
        let c12 = lift.off_diag(&c);
        let mut delta = DenseMatrix::zeros(lift.d1, lift.d2);
        for j in 0..lift.d1 {
            for k in 0..lift.d2 {
                let step = (rho * c12[(j, k)] + 2.0 * b[(j, k)] / n) / (rho + 2.0 * a[(j, k)] / n);
                let base = prev[(j, k)];
                delta[(j, k)] = (base + step).clamp(-bound, bound) - base;
            }
        }
        lift.set_off_diag(&mut next, &delta);

        let primal = l.sub(&next).sub(&shift);
        state.w = state.w.add_scaled(cfg.gamma_step * rho, &primal);
        let change = next.sub(&r).frobenius_norm() / r.frobenius_norm().max(1.0);
        r = next;
        state.l = l;
        if primal.frobenius_norm() < cfg.admm_tol && change < cfg.admm_tol {
            return Ok(AdmmOutcome { theta: clip_box(&lift.off_diag(&state.l), bound)?, iterations: it, converged: true });
        }
    }
    Ok(AdmmOutcome {
        theta: clip_box(&lift.off_diag(&state.l), bound)?,
        iterations: cfg.admm_max_iter,
        converged: false,
    })
}

/// Fits a completion problem. The returned `θ̂` satisfies `‖θ̂‖_∞ ≤ R/s`.
pub fn fit_onebit(p: &Problem, cfg: &OneBitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let design: &SingletonDesign = match p.design() {
        Design::Singleton(s) => s,
        _ => return invalid("fit_onebit expects a singleton (completion) design"),
    };
    if design.n() == 0 {
        return Err(Error::Solver { message: "no observed cells".into(), residual: f64::NAN });
    }
    if let Some(zero) = zero_if_optimal(p, cfg.lambda)? {
        return Ok(zero);
    }
    let (d1, d2) = design.shape();
    let s = design.scale();
    let bound = cfg.r / s;
    let n = p.n_obs() as f64;
    let fam = p.family();
    let y = p.responses();
    let lift = Lifted { d1, d2 };
    let exact_surrogate = fam == ExpFamily::GaussianIdentity;

    let mut state = AdmmState { l: DenseMatrix::zeros(d1 + d2, d1 + d2), w: DenseMatrix::zeros(d1 + d2, d1 + d2) };
    let mut theta = DenseMatrix::zeros(d1, d2);
    let mut best = (objective(p, &theta, cfg.lambda)?, theta.clone());
    let mut inner_total = 0;
    let mut outer = 0;
    let mut converged = false;

    while outer < cfg.outer_max_iter {
        outer += 1;
        let mut a = DenseMatrix::zeros(d1, d2);
        let mut b = DenseMatrix::zeros(d1, d2);
        for (&(j, k), &yi) in design.cells().iter().zip(y) {
            let eta = s * theta[(j, k)];
            a[(j, k)] += s * s * fam.b_double_prime(eta).max(MIN_WEIGHT);
            b[(j, k)] += s * (yi - fam.b_prime(eta));
        }

        let step = admm(&lift, &theta, &a, &b, n, bound, cfg, &mut state)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::operator_norm;

    fn toy(fam: ExpFamily) -> Problem {
        let cells: Vec<(usize, usize)> = (0..60).map(|i| ((i * 7) % 3, (i * 5 + i / 3) % 3)).collect();
        let y = (0..60)
            .map(|i| match fam {
                ExpFamily::BernoulliLogit => ((i * 11) % 7 < 4) as u8 as f64,
                ExpFamily::GaussianIdentity => ((i * 11) % 7) as f64 / 6.0,
            })
            .collect();
        Problem::new(Design::Singleton(SingletonDesign::square(3, cells).unwrap()), y, fam).unwrap()
    }

    #[test]
    fn prediction_rules() {
        let z = DenseMatrix::zeros(2, 2);
        assert_eq!(predict_ratings(&z, PredictionRule::GlmSignZero).as_slice(), &[1, 1, 1, 1]);
        let t = DenseMatrix::from_rows(&[vec![0.4, 0.6]]).unwrap();
        assert_eq!(predict_ratings(&t, PredictionRule::LinearHalf).as_slice(), &[0, 1]);
    }

    #[test]
    fn respects_box() {
        let p = toy(ExpFamily::BernoulliLogit);
        let r = fit_onebit(&p, &OneBitConfig::new(0.001, 0.3)).unwrap();
        assert!(r.theta_hat.max_abs() <= 0.1 + 1e-12);
    }

    #[test]
    fn zero_when_penalty_dominates() {
        let p = toy(ExpFamily::BernoulliLogit);
        let g0 = operator_norm(&p.gradient(&DenseMatrix::zeros(3, 3)).unwrap()).unwrap();
        let r = fit_onebit(&p, &OneBitConfig::new(g0, 5.0)).unwrap();
        assert_eq!(r.theta_hat, DenseMatrix::zeros(3, 3));
    }

    #[test]
    fn converged_fit_meets_kkt_with_loose_box() {
        for fam in [ExpFamily::BernoulliLogit, ExpFamily::GaussianIdentity] {
            let p = toy(fam);
            let mut cfg = OneBitConfig::new(0.02, 50.0);
            cfg.admm_tol = 1e-8;
            cfg.admm_max_iter = 20000;
            let r = fit_onebit(&p, &cfg).unwrap();
            assert!(r.converged);
            assert!(r.kkt_operator_norm <= 0.02 * 1.01, "{}", r.kkt_operator_norm);
        }
    }

    #[test]
    fn config_checks() {
        let mut c = OneBitConfig::new(0.1, 1.0);
        c.gamma_step = 1.7;
        assert!(c.validate().is_err());
        c.gamma_step = 1.618;
        c.r = 0.0;
        assert!(c.validate().is_err());
    }
}
