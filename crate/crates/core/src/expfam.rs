//! Exponential families and the trace-regression likelihood.
//!
//! A [`Problem`] pairs one of three design encodings with responses and a
//! family. For coefficient matrix `Θ` and observation `t` the linear predictor
//! is `η_t = <Θ, X_t>`; the loss is the averaged negative log-likelihood
//!
//! ```text
//! L(Θ) = (1/N) Σ_t [ b(η_t) - Y_t η_t ]
//! ```
//!
//! where `N` counts scalar responses (`n·q` for reduced-rank designs). The
//! Hessian is never materialized; [`curvature_weights`] returns the per
//! observation weights `b''(η_t)` and [`hessian_vec_product`] applies it.
//!
//! Note: the reduced-rank objective as usually printed has `b'` in place of
//! `b` inside the sum. That cannot be a likelihood (its minimizer does not
//! match the model), so `b` is used here.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::matcore::{axpy, dot, pairwise_sum, DenseMatrix};

/// Exponential family with canonical link. The dispersion is fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpFamily {
    /// `b(η) = log(1 + e^η)`, responses in `{0, 1}`.
    BernoulliLogit,
    /// `b(η) = η²/2`, real responses.
    GaussianIdentity,
}

impl ExpFamily {
    pub fn name(self) -> &'static str {
        match self {
            ExpFamily::BernoulliLogit => "bernoulli_logit",
            ExpFamily::GaussianIdentity => "gaussian_identity",
        }
    }

    #[inline]
    pub fn b(self, eta: f64) -> f64 {
        match self {
            ExpFamily::BernoulliLogit => eta.max(0.0) + (-eta.abs()).exp().ln_1p(),
            ExpFamily::GaussianIdentity => 0.5 * eta * eta,
        }
    }

    /// Mean function `b'(η)`.
    #[inline]
    pub fn b_prime(self, eta: f64) -> f64 {
        match self {
            ExpFamily::BernoulliLogit => sigmoid(eta),
            ExpFamily::GaussianIdentity => eta,
        }
    }

    /// Variance function `b''(η)`.
    #[inline]
    pub fn b_double_prime(self, eta: f64) -> f64 {
        match self {
            ExpFamily::BernoulliLogit => {
                let e = (-eta.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            ExpFamily::GaussianIdentity => 1.0,
        }
    }

    pub fn dispersion(self) -> f64 {
        1.0
    }

    fn check_response(self, y: f64) -> bool {
        match self {
            ExpFamily::BernoulliLogit => y == 0.0 || y == 1.0,
            ExpFamily::GaussianIdentity => y.is_finite(),
        }
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Arbitrary matrix covariates, stored as `n` rows of `vec(X_i)` (row-major).
#[derive(Clone, Debug)]
pub struct GeneralDesign {
    d1: usize,
    d2: usize,
    data: Vec<f64>,
}

impl GeneralDesign {
    pub fn new(xs: &[DenseMatrix]) -> Result<Self> {
        let first = match xs.first() {
            Some(x) => x,
            None => return invalid("design needs at least one matrix"),
        };
        let (d1, d2) = first.shape();
        let mut data = Vec::with_capacity(xs.len() * d1 * d2);
        for (i, x) in xs.iter().enumerate() {
            if x.shape() != (d1, d2) {
                return invalid(format!("design matrix {i} is {:?}, expected ({d1}, {d2})", x.shape()));
            }
            data.extend_from_slice(x.as_slice());
        }
        Self::from_flat(d1, d2, data)
    }

    /// `data` holds `vec(X_i)` for each sample back to back.
    pub fn from_flat(d1: usize, d2: usize, data: Vec<f64>) -> Result<Self> {
        let p = d1 * d2;
        if p == 0 || data.is_empty() || data.len() % p != 0 {
            return invalid(format!("flat design of length {} does not split into {d1}x{d2} blocks", data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return invalid("design has non-finite entries");
        }
        Ok(Self { d1, d2, data })
    }

    pub fn n(&self) -> usize {
        self.data.len() / (self.d1 * self.d2)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    /// `vec(X_i)`
    pub fn sample(&self, i: usize) -> &[f64] {
        let p = self.d1 * self.d2;
        &self.data[i * p..(i + 1) * p]
    }

    pub fn matrix(&self, i: usize) -> DenseMatrix {
        DenseMatrix::from_vec_unchecked(self.d1, self.d2, self.sample(i).to_vec())
    }

    /// The `n × d1·d2` stacked design in row-major order.
    pub fn flat(&self) -> &[f64] {
        &self.data
    }
}

/// Multi-response design: `q` responses share the covariate `x_i ∈ R^p`.
/// The coefficient matrix is `q × p` with row `j` predicting response `j`.
#[derive(Clone, Debug)]
pub struct RrrDesign {
    p: usize,
    q: usize,
    covariates: Vec<f64>,
}

impl RrrDesign {
    /// `covariates` is `n × p` row-major.
    pub fn new(covariates: DenseMatrix, responses_per_sample: usize) -> Result<Self> {
        if responses_per_sample == 0 {
            return invalid("need at least one response per sample");
        }
        let p = covariates.cols();
        Ok(Self { p, q: responses_per_sample, covariates: covariates.into_vec() })
    }

    pub fn n(&self) -> usize {
        self.covariates.len() / self.p
    }

    pub fn covariate_dim(&self) -> usize {
        self.p
    }

    pub fn responses_per_sample(&self) -> usize {
        self.q
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub(crate) fn covariate_data(&self) -> &[f64] {
        &self.covariates
    }

    pub fn covariates(&self) -> DenseMatrix {
        DenseMatrix::from_vec_unchecked(self.n(), self.p, self.covariates.clone())
    }
}

/// Completion design: observation `i` reveals cell `(row_i, col_i)` through
/// `X_i = scale · e_row e_colᵀ`. Indices are 0-based.
#[derive(Clone, Debug)]
pub struct SingletonDesign {
    d1: usize,
    d2: usize,
    cells: Vec<(usize, usize)>,
    scale: f64,
}

impl SingletonDesign {
    pub fn new(d1: usize, d2: usize, cells: Vec<(usize, usize)>, scale: f64) -> Result<Self> {
        if d1 == 0 || d2 == 0 {
            return invalid("completion dimensions must be positive");
        }
        if cells.is_empty() {
            return invalid("no observed cells");
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return invalid(format!("scale must be positive, got {scale}"));
        }
        if let Some(k) = cells.iter().position(|&(a, b)| a >= d1 || b >= d2) {
            return invalid(format!("observation {k}: cell {:?} outside {d1}x{d2}", cells[k]));
        }
        Ok(Self { d1, d2, cells, scale })
    }

    /// Square `d × d` completion with the usual `scale = d`.
    pub fn square(d: usize, cells: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(d, d, cells, d as f64)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.d1, self.d2)
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.cells.len()
    }
}

#[derive(Clone, Debug)]
pub enum Design {
    General(GeneralDesign),
    Rrr(RrrDesign),
    Singleton(SingletonDesign),
}

/// Design, responses and family for one estimation problem.
#[derive(Clone, Debug)]
pub struct Problem {
    design: Design,
    responses: Vec<f64>,
    family: ExpFamily,
}

impl Problem {
    /// For RRR designs `responses` is `n × q` row-major, i.e. `Y_{i·q + j} = y_ij`.
    pub fn new(design: Design, responses: Vec<f64>, family: ExpFamily) -> Result<Self> {
        let expected = match &design {
            Design::General(g) => g.n(),
            Design::Rrr(r) => r.n() * r.q,
            Design::Singleton(s) => s.n(),
        };
        if responses.len() != expected {
            return invalid(format!("expected {expected} responses, got {}", responses.len()));
        }
        if let Some(k) = responses.iter().position(|&y| !family.check_response(y)) {
            return invalid(format!(
                "response {k} = {} is not valid for family {}",
                responses[k],
                family.name()
            ));
        }
        Ok(Self { design, responses, family })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn family(&self) -> ExpFamily {
        self.family
    }

    /// Shape of the coefficient matrix.
    pub fn theta_shape(&self) -> (usize, usize) {
        match &self.design {
            Design::General(g) => g.shape(),
            Design::Rrr(r) => (r.q, r.p),
            Design::Singleton(s) => s.shape(),
        }
    }

    /// Number of samples `n` (covariate vectors for RRR).
    pub fn n_samples(&self) -> usize {
        match &self.design {
            Design::General(g) => g.n(),
            Design::Rrr(r) => r.n(),
            Design::Singleton(s) => s.n(),
        }
    }

    /// Number of scalar responses `N`, the loss normalizer.
    pub fn n_obs(&self) -> usize {
        self.responses.len()
    }

    pub(crate) fn check_theta(&self, theta: &DenseMatrix) -> Result<()> {
        if theta.shape() != self.theta_shape() {
            return invalid(format!(
                "coefficient matrix is {:?}, design expects {:?}",
                theta.shape(),
                self.theta_shape()
            ));
        }
        if !theta.is_finite() {
            return invalid("coefficient matrix has non-finite entries");
        }
        Ok(())
    }

    /// `η_t = <Θ, X_t>` in observation order.
    pub fn linear_predictors(&self, theta: &DenseMatrix) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        Ok(self.predictors_unchecked(theta))
    }

    pub(crate) fn predictors_unchecked(&self, theta: &DenseMatrix) -> Vec<f64> {
        match &self.design {
            Design::General(g) => (0..g.n()).map(|i| dot(theta.as_slice(), g.sample(i))).collect(),
            Design::Rrr(r) => {
                let mut eta = Vec::with_capacity(r.n() * r.q);
                for i in 0..r.n() {
                    let x = r.x(i);
                    for j in 0..r.q {
                        eta.push(dot(theta.row(j), x));
                    }
                }
                eta
            }
            Design::Singleton(s) => s.cells.iter().map(|&(a, b)| s.scale * theta[(a, b)]).collect(),
        }
    }

    /// `(1/N) Σ_t z_t X_t` for observation-indexed coefficients `z`.
    pub(crate) fn adjoint(&self, z: &[f64]) -> DenseMatrix {
        let (d1, d2) = self.theta_shape();
        let inv_n = 1.0 / self.n_obs() as f64;
        let mut out = DenseMatrix::zeros(d1, d2);
        match &self.design {
            Design::General(g) => {
                let acc = out.as_mut_slice();
                for (i, &zi) in z.iter().enumerate() {
                    if zi != 0.0 {
                        axpy(zi, g.sample(i), acc);
                    }
                }
                for v in acc.iter_mut() {
                    *v *= inv_n;
                }
            }
            Design::Rrr(r) => {
                let q = r.q;
                let p = r.p;
                let acc = out.as_mut_slice();
                for i in 0..r.n() {
                    let x = r.x(i);
                    for j in 0..q {
                        let zij = z[i * q + j];
                        if zij != 0.0 {
                            axpy(zij, x, &mut acc[j * p..(j + 1) * p]);
                        }
                    }
                }
                for v in acc.iter_mut() {
                    *v *= inv_n;
                }
            }
            Design::Singleton(s) => {
                for (&(a, b), &zi) in s.cells.iter().zip(z) {
                    out[(a, b)] += zi;
                }
                let f = s.scale * inv_n;
                for v in out.as_mut_slice() {
                    *v *= f;
                }
            }
        }
        out
    }

    pub fn loss(&self, theta: &DenseMatrix) -> Result<f64> {
        let eta = self.linear_predictors(theta)?;
        Ok(self.loss_from_predictors(&eta))
    }

    pub(crate) fn loss_from_predictors(&self, eta: &[f64]) -> f64 {
        let fam = self.family;
        let terms: Vec<f64> = eta.iter().zip(&self.responses).map(|(&e, &y)| fam.b(e) - y * e).collect();
        pairwise_sum(&terms) / self.n_obs() as f64
    }

    pub fn gradient(&self, theta: &DenseMatrix) -> Result<DenseMatrix> {
        let eta = self.linear_predictors(theta)?;
        Ok(self.gradient_from_predictors(&eta))
    }

    pub(crate) fn gradient_from_predictors(&self, eta: &[f64]) -> DenseMatrix {
        let fam = self.family;
        let z: Vec<f64> = eta.iter().zip(&self.responses).map(|(&e, &y)| fam.b_prime(e) - y).collect();
        self.adjoint(&z)
    }

    pub fn curvature_weights(&self, theta: &DenseMatrix) -> Result<Vec<f64>> {
        let fam = self.family;
        Ok(self.linear_predictors(theta)?.into_iter().map(|e| fam.b_double_prime(e)).collect())
    }

    /// `∇²L(Θ)[D] = (1/N) Σ_t b''(η_t) <D, X_t> X_t`
    pub fn hessian_vec_product(&self, theta: &DenseMatrix, direction: &DenseMatrix) -> Result<DenseMatrix> {
        let w = self.curvature_weights(theta)?;
        let u = self.linear_predictors(direction)?;
        let z: Vec<f64> = w.iter().zip(&u).map(|(a, b)| a * b).collect();
        Ok(self.adjoint(&z))
    }

    /// Rewrites an RRR or completion problem as the equivalent general design.
    pub fn to_general(&self) -> Result<Problem> {
        let design = match &self.design {
            Design::General(g) => g.clone(),
            Design::Rrr(r) => {
                let (q, p) = (r.q, r.p);
                let mut data = Vec::with_capacity(r.n() * q * q * p);
                for i in 0..r.n() {
                    for j in 0..q {
                        for jj in 0..q {
                            if jj == j {
                                data.extend_from_slice(r.x(i));
                            } else {
                                data.extend(std::iter::repeat_n(0.0, p));
                            }
                        }
                    }
                }
                GeneralDesign::from_flat(q, p, data)?
            }
            Design::Singleton(s) => {
                let mut data = Vec::with_capacity(s.n() * s.d1 * s.d2);
                for &(a, b) in &s.cells {
                    let mut x = vec![0.0; s.d1 * s.d2];
                    x[a * s.d2 + b] = s.scale;
                    data.extend(x);
                }
                GeneralDesign::from_flat(s.d1, s.d2, data)?
            }
        };
        Problem::new(Design::General(design), self.responses.clone(), self.family)
    }
}

pub fn loss(p: &Problem, theta: &DenseMatrix) -> Result<f64> {
    p.loss(theta)
}

pub fn gradient(p: &Problem, theta: &DenseMatrix) -> Result<DenseMatrix> {
    p.gradient(theta)
}

pub fn curvature_weights(p: &Problem, theta: &DenseMatrix) -> Result<Vec<f64>> {
    p.curvature_weights(theta)
}

pub fn hessian_vec_product(p: &Problem, theta: &DenseMatrix, direction: &DenseMatrix) -> Result<DenseMatrix> {
    p.hessian_vec_product(theta, direction)
}

/// Default penalty level `c · rate` with `d = max(d1, d2)`:
///
/// * general designs: `c √(d/n)`
/// * completion designs: `c √(d log d / n)`
/// * reduced-rank designs: `(c/q) √(d log d / n)`. The loss averages over
///   `N = n·q` responses, so the level that balances its score is `q` times
///   smaller than the one quoted for the per-sample normalization.
pub fn lambda_default(p: &Problem, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return invalid(format!("lambda constant must be positive, got {c}"));
    }
    let (d1, d2) = p.theta_shape();
    let d = d1.max(d2) as f64;
    let n = p.n_samples() as f64;
    let log_d = d.ln().max(f64::MIN_POSITIVE);
    Ok(match p.design() {
        Design::General(_) => c * (d / n).sqrt(),
        Design::Singleton(_) => c * (d * log_d / n).sqrt(),
        Design::Rrr(r) => c * (d * log_d / n).sqrt() / r.q as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn one_sample(x: DenseMatrix, y: f64, fam: ExpFamily) -> Problem {
        Problem::new(Design::General(GeneralDesign::new(&[x]).unwrap()), vec![y], fam).unwrap()
    }

    #[test]
    fn logit_primitives_are_overflow_safe() {
        let f = ExpFamily::BernoulliLogit;
        assert_abs_diff_eq!(f.b(0.0), std::f64::consts::LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(f.b(800.0), 800.0, epsilon = 1e-12);
        assert!(f.b(-800.0) >= 0.0 && f.b(-800.0) < 1e-300);
        assert_eq!(f.b_prime(0.0), 0.5);
        assert_eq!(f.b_double_prime(0.0), 0.25);
        assert!(f.b_double_prime(1000.0) >= 0.0);
        assert!(f.b_prime(-1000.0).is_finite());
    }

    #[test]
    fn logit_loss_at_zero_is_log2() {
        let x = DenseMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        for y in [0.0, 1.0] {
            let p = one_sample(x.clone(), y, ExpFamily::BernoulliLogit);
            assert_abs_diff_eq!(p.loss(&DenseMatrix::zeros(2, 2)).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        }
    }

    #[test]
    fn gaussian_loss_at_zero() {
        let p = one_sample(DenseMatrix::identity(2), 1.0, ExpFamily::GaussianIdentity);
        assert_eq!(p.loss(&DenseMatrix::zeros(2, 2)).unwrap(), 0.0);
    }

    #[test]
    fn logit_gradient_single_identity_sample() {
        let p = one_sample(DenseMatrix::identity(2), 1.0, ExpFamily::BernoulliLogit);
        let g = p.gradient(&DenseMatrix::zeros(2, 2)).unwrap();
        assert!(g.sub(&DenseMatrix::identity(2).scale(-0.5)).max_abs() < 1e-15);
    }

    #[test]
    fn weights_at_zero() {
        let x = DenseMatrix::identity(2);
        let p = one_sample(x.clone(), 0.0, ExpFamily::BernoulliLogit);
        assert_eq!(p.curvature_weights(&DenseMatrix::zeros(2, 2)).unwrap(), vec![0.25]);
        let p = one_sample(x, 0.3, ExpFamily::GaussianIdentity);
        assert_eq!(p.curvature_weights(&DenseMatrix::identity(2)).unwrap(), vec![1.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = GeneralDesign::new(&[DenseMatrix::identity(2)]).unwrap();
        assert!(Problem::new(Design::General(g.clone()), vec![0.5], ExpFamily::BernoulliLogit).is_err());
        assert!(Problem::new(Design::General(g.clone()), vec![1.0, 0.0], ExpFamily::BernoulliLogit).is_err());
        let p = Problem::new(Design::General(g), vec![1.0], ExpFamily::BernoulliLogit).unwrap();
        assert!(p.loss(&DenseMatrix::zeros(3, 2)).is_err());
        assert!(SingletonDesign::square(3, vec![(0, 3)]).is_err());
        assert!(SingletonDesign::square(3, vec![]).is_err());
    }

    #[test]
    fn lambda_defaults() {
        let xs: Vec<DenseMatrix> = (0..2000).map(|_| DenseMatrix::zeros(20, 20)).collect();
        let p = Problem::new(
            Design::General(GeneralDesign::new(&xs).unwrap()),
            vec![0.0; 2000],
            ExpFamily::BernoulliLogit,
        )
        .unwrap();
        assert_abs_diff_eq!(lambda_default(&p, 1.0).unwrap(), 0.1, epsilon = 1e-15);
        assert!(lambda_default(&p, 0.0).is_err());

        let d = 20usize;
        let n = (20.0 * (20f64).ln() * 10.0).round() as usize;
        let cells: Vec<(usize, usize)> = (0..n).map(|i| (i % d, (i / d) % d)).collect();
        let p = Problem::new(
            Design::Singleton(SingletonDesign::square(d, cells).unwrap()),
            vec![1.0; n],
            ExpFamily::BernoulliLogit,
        )
        .unwrap();
        let expected = 0.2 * (20.0 * (20f64).ln() / n as f64).sqrt();
        assert_abs_diff_eq!(lambda_default(&p, 0.2).unwrap(), expected, epsilon = 1e-15);
        // n was rounded from 20·log(20)·10, so this is 0.2·√(1/10) up to that rounding
        assert_abs_diff_eq!(lambda_default(&p, 0.2).unwrap(), 0.2 * 0.1f64.sqrt(), epsilon = 1e-4);
    }
}
