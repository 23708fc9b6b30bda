//! Seeded synthetic designs.
//!
//! Every generator takes a `u64` seed and is a pure function of its arguments.
//! Randomness comes from ChaCha20 (`rand_chacha`): the seed is expanded with
//! `seed_from_u64` and each independent draw (coefficients, covariates,
//! responses, sampled cells) reads its own 64-bit stream via `set_stream`, so
//! any one of them can be regenerated without the others. [`mix_seed`] derives
//! per-replication seeds from a master seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::expfam::{lambda_default, sigmoid, Design, ExpFamily, GeneralDesign, Problem, RrrDesign, SingletonDesign};
use crate::matcore::{bq_measure, svd, symmetric_eigen, DenseMatrix};
use crate::onebit::{BinaryMatrix, OneBitConfig};

const STREAM_THETA: u64 = 1;
const STREAM_DESIGN: u64 = 2;
const STREAM_RESPONSE: u64 = 3;
const STREAM_CELLS: u64 = 4;
const STREAM_RATINGS: u64 = 5;

/// Samples used for the sample-covariance construction.
pub const EIGENSPACE_SAMPLES: usize = 100;

/// Penalty constant placed in the configuration returned by [`gen_onebit`].
pub const ONEBIT_LAMBDA_C: f64 = 0.5;

/// ChaCha20 generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Order-sensitive SplitMix64 hash of a master seed and a path of indices.
pub fn mix_seed(seed: u64, path: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    path.iter().fold(splitmix(seed), |acc, &k| splitmix(acc ^ splitmix(k)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    /// `U Vᵀ` with Haar-random orthonormal `U, V`: every nonzero singular value is 1.
    UnitSingularValues,
    /// `U Vᵀ / √r`, so `‖Θ*‖_F = 1`.
    UnitFrobenius,
    /// `U Uᵀ` for the top-`r` eigenvectors of the sample covariance of
    /// [`EIGENSPACE_SAMPLES`] standard normal vectors.
    EigenspaceOfGaussianSampleCov,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrueModel {
    pub theta_star: DenseMatrix,
    pub rank_r: usize,
    pub q: f64,
    /// `B_q(Θ*)`
    pub rho_bq: f64,
    pub construction: Construction,
}

impl TrueModel {
    /// The same model with `Θ*` multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let theta_star = self.theta_star.scale(s);
        Ok(Self { rho_bq: bq_measure(&theta_star, self.q)?, theta_star, ..self.clone() })
    }
}

fn gaussian_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn orthonormal_columns(rng: &mut ChaCha20Rng, d: usize, r: usize) -> Result<DenseMatrix> {
    Ok(svd(&gaussian_matrix(rng, d, r))?.u)
}

/// Draws a `d × d` coefficient matrix of rank `r`.
pub fn gen_theta_star(d: usize, r: usize, construction: Construction, seed: u64) -> Result<TrueModel> {
    if r == 0 || r > d {
        return invalid(format!("rank must satisfy 1 <= r <= d, got r={r}, d={d}"));
    }
    let mut rng = rng_for(seed, STREAM_THETA);
    let theta_star = match construction {
        Construction::UnitSingularValues | Construction::UnitFrobenius => {
            let u = orthonormal_columns(&mut rng, d, r)?;
            let v = orthonormal_columns(&mut rng, d, r)?;
            let t = u.matmul(&v.transpose())?;
            if construction == Construction::UnitFrobenius {
                t.scale(1.0 / (r as f64).sqrt())
            } else {
                t
            }
        }
        Construction::EigenspaceOfGaussianSampleCov => {
            let z = gaussian_matrix(&mut rng, EIGENSPACE_SAMPLES, d);
            let mean: Vec<f64> = (0..d).map(|j| (0..EIGENSPACE_SAMPLES).map(|i| z[(i, j)]).sum::<f64>() / EIGENSPACE_SAMPLES as f64).collect();
            let centered = DenseMatrix::from_fn(EIGENSPACE_SAMPLES, d, |i, j| z[(i, j)] - mean[j]);
            let cov = centered.transpose().matmul(&centered)?.scale(1.0 / (EIGENSPACE_SAMPLES - 1) as f64);
            let (_, vecs) = symmetric_eigen(&cov)?;
            let u = DenseMatrix::from_fn(d, r, |i, j| vecs[(i, j)]);
            u.matmul(&u.transpose())?.symmetrized()
        }
    };
    Ok(TrueModel { rho_bq: bq_measure(&theta_star, 0.0)?, theta_star, rank_r: r, q: 0.0, construction })
}

fn bernoulli(rng: &mut ChaCha20Rng, eta: f64) -> f64 {
    (rng.random::<f64>() < sigmoid(eta)) as u8 as f64
}

/// `n` designs with i.i.d. standard normal entries and logistic responses.
pub fn gen_matrix_regression(tm: &TrueModel, n: usize, seed: u64) -> Result<Problem> {
    let (d1, d2) = tm.theta_star.shape();
    let p = d1 * d2;
    let mut xr = rng_for(seed, STREAM_DESIGN);
    let data: Vec<f64> = (0..n * p).map(|_| xr.sample::<f64, _>(StandardNormal)).collect();
    let mut yr = rng_for(seed, STREAM_RESPONSE);
    let theta = tm.theta_star.as_slice();
    let y = data
        .chunks_exact(p)
        .map(|x| bernoulli(&mut yr, x.iter().zip(theta).map(|(a, b)| a * b).sum()))
        .collect();
    Problem::new(Design::General(GeneralDesign::from_flat(d1, d2, data)?), y, ExpFamily::BernoulliLogit)
}

/// `n` standard normal covariates, one logistic response per row of `Θ*`.
pub fn gen_rrr(tm: &TrueModel, n: usize, seed: u64) -> Result<Problem> {
    let (q, p) = tm.theta_star.shape();
    let mut xr = rng_for(seed, STREAM_DESIGN);
    let x = gaussian_matrix(&mut xr, n, p);
    let mut yr = rng_for(seed, STREAM_RESPONSE);
    let mut y = Vec::with_capacity(n * q);
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..q {
            let eta: f64 = tm.theta_star.row(j).iter().zip(xi).map(|(a, b)| a * b).sum();
            y.push(bernoulli(&mut yr, eta));
        }
    }
    Problem::new(Design::Rrr(RrrDesign::new(x, q)?), y, ExpFamily::BernoulliLogit)
}

/// `n` cells sampled uniformly with replacement, design scale `d`, logistic
/// responses at `η = d · Θ*_ab`.
///
/// The returned configuration sets `R = R_mult · d · ‖Θ*‖_∞`, so the fitted
/// coefficients obey `‖Θ̂‖_∞ ≤ R_mult · ‖Θ*‖_∞`, and
/// `λ = lambda_default(·, ONEBIT_LAMBDA_C)`.
pub fn gen_onebit(tm: &TrueModel, n: usize, r_mult: f64, seed: u64) -> Result<(Problem, OneBitConfig)> {
    gen_completion(tm, n, r_mult, seed, ExpFamily::BernoulliLogit)
}

pub(crate) fn gen_completion(
    tm: &TrueModel,
    n: usize,
    r_mult: f64,
    seed: u64,
    family: ExpFamily,
) -> Result<(Problem, OneBitConfig)> {
    let (d1, d2) = tm.theta_star.shape();
    if d1 != d2 {
        return invalid("completion designs need a square coefficient matrix");
    }
    if !(r_mult > 0.0) {
        return invalid(format!("R multiplier must be positive, got {r_mult}"));
    }
    let d = d1;
    let s = d as f64;
    let mut cr = rng_for(seed, STREAM_CELLS);
    let cells: Vec<(usize, usize)> = (0..n).map(|_| (cr.random_range(0..d), cr.random_range(0..d))).collect();
    let mut yr = rng_for(seed, STREAM_RESPONSE);
    let y = cells.iter().map(|&(a, b)| bernoulli(&mut yr, s * tm.theta_star[(a, b)])).collect();
    let p = Problem::new(Design::Singleton(SingletonDesign::square(d, cells)?), y, family)?;
    let mut cfg = OneBitConfig::new(lambda_default(&p, ONEBIT_LAMBDA_C)?, r_mult * s * tm.theta_star.max_abs());
    cfg.seed = seed;
    Ok((p, cfg))
}

/// `T_ij ~ Bernoulli(sigmoid(Θ*_ij))`, independently.
pub fn gen_rating_matrix(tm: &TrueModel, seed: u64) -> BinaryMatrix {
    let (rows, cols) = tm.theta_star.shape();
    let mut rng = rng_for(seed, STREAM_RATINGS);
    let data = tm.theta_star.as_slice().iter().map(|&eta| bernoulli(&mut rng, eta) as u8).collect();
    BinaryMatrix::new(rows, cols, data).expect("shape and values are valid by construction")
}
