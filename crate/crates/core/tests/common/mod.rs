//! Test-only reference implementations. Nothing here calls the solver code
//! paths under test: losses and gradients are re-derived from the raw design
//! matrices and the nuclear prox goes straight to nalgebra's SVD.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use tracereg::{Design, DenseMatrix, ExpFamily, GeneralDesign, Problem, RrrDesign, SingletonDesign};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

pub fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| normal(r))
}

/// A problem written out as explicit `(X_t, y_t)` pairs.
#[derive(Clone, Debug)]
pub struct Raw {
    pub d1: usize,
    pub d2: usize,
    pub xs: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub logistic: bool,
}

fn softplus(e: f64) -> f64 {
    if e > 0.0 {
        e + (-e).exp().ln_1p()
    } else {
        e.exp().ln_1p()
    }
}

fn logistic(e: f64) -> f64 {
    if e >= 0.0 {
        1.0 / (1.0 + (-e).exp())
    } else {
        let z = e.exp();
        z / (1.0 + z)
    }
}

impl Raw {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    fn eta(&self, t: usize, theta: &[f64]) -> f64 {
        self.xs[t].iter().zip(theta).map(|(a, b)| a * b).sum()
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let mut s = 0.0;
        for t in 0..self.len() {
            let e = self.eta(t, theta);
            let b = if self.logistic { softplus(e) } else { 0.5 * e * e };
            s += b - self.y[t] * e;
        }
        s / self.len() as f64
    }

    pub fn grad(&self, theta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d1 * self.d2];
        for t in 0..self.len() {
            let e = self.eta(t, theta);
            let mean = if self.logistic { logistic(e) } else { e };
            let c = (mean - self.y[t]) / self.len() as f64;
            for (gk, xk) in g.iter_mut().zip(&self.xs[t]) {
                *gk += c * xk;
            }
        }
        g
    }

    /// Upper bound on the gradient's Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        let p = self.d1 * self.d2;
        let mut gram = DMatrix::<f64>::zeros(p, p);
        for x in &self.xs {
            let v = DMatrix::from_column_slice(p, 1, x);
            gram += &v * v.transpose();
        }
        let top = gram.symmetric_eigenvalues().iter().cloned().fold(0.0, f64::max) / self.len() as f64;
        top * if self.logistic { 0.25 } else { 1.0 }
    }
}

pub fn nuclear(m: &[f64], d1: usize, d2: usize) -> f64 {
    DMatrix::from_row_slice(d1, d2, m).singular_values().iter().sum()
}

pub fn operator(m: &[f64], d1: usize, d2: usize) -> f64 {
    DMatrix::from_row_slice(d1, d2, m).singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn svt(z: &[f64], d1: usize, d2: usize, tau: f64) -> Vec<f64> {
    let svd = DMatrix::from_row_slice(d1, d2, z).svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = DMatrix::<f64>::zeros(d1, d2);
    for (k, s) in svd.singular_values.iter().enumerate() {
        let s = (s - tau).max(0.0);
        if s > 0.0 {
            out += s * u.column(k) * vt.row(k);
        }
    }
    let mut v = Vec::with_capacity(d1 * d2);
    for r in 0..d1 {
        for c in 0..d2 {
            v.push(out[(r, c)]);
        }
    }
    v
}

/// `argmin ½‖X - z‖² + tau‖X‖_N` subject to `|X_jk| ≤ bound`, by the Dykstra-type
/// alternating prox iteration.
pub fn prox_nuclear_box(z: &[f64], d1: usize, d2: usize, tau: f64, bound: Option<f64>) -> Vec<f64> {
    let Some(b) = bound else { return svt(z, d1, d2, tau) };
    let k = z.len();
    let mut y = z.to_vec();
    let mut p = vec![0.0; k];
    let mut q = vec![0.0; k];
    let mut x = vec![0.0; k];
    for _ in 0..2000 {
        let a: Vec<f64> = (0..k).map(|i| y[i] + p[i]).collect();
        let xn = svt(&a, d1, d2, tau);
        for i in 0..k {
            p[i] = a[i] - xn[i];
        }
        let c: Vec<f64> = (0..k).map(|i| xn[i] + q[i]).collect();
        let yn: Vec<f64> = c.iter().map(|v| v.clamp(-b, b)).collect();
        for i in 0..k {
            q[i] = c[i] - yn[i];
        }
        let diff: f64 = yn.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
            + xn.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        x = xn;
        y = yn;
        if diff.sqrt() < 1e-14 {
            break;
        }
    }
    y
}

/// Accelerated proximal gradient with adaptive restart on the penalized
/// objective, optionally restricted to an entrywise box.
pub fn proximal_gradient(raw: &Raw, lambda: f64, bound: Option<f64>, iters: usize) -> Vec<f64> {
    let (d1, d2) = (raw.d1, raw.d2);
    let step = 1.0 / raw.lipschitz().max(1e-12);
    let obj = |t: &[f64]| raw.loss(t) + lambda * nuclear(t, d1, d2);
    let mut x = vec![0.0; d1 * d2];
    let mut y = x.clone();
    let mut tk: f64 = 1.0;
    let mut fx = obj(&x);
    for _ in 0..iters {
        let g = raw.grad(&y);
        let z: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        let xn = prox_nuclear_box(&z, d1, d2, step * lambda, bound);
        let fxn = obj(&xn);
        if fxn > fx {
            // restart momentum
            tk = 1.0;
            y = x.clone();
            continue;
        }
        let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
        let mom = (tk - 1.0) / tn;
        let change: f64 = xn.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        y = xn.iter().zip(&x).map(|(a, b)| a + mom * (a - b)).collect();
        x = xn;
        fx = fxn;
        tk = tn;
        if change < 1e-13 {
            break;
        }
    }
    x
}

pub fn frob_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn bernoulli(r: &mut ChaCha8Rng, eta: f64) -> f64 {
    (r.random::<f64>() < logistic(eta)) as u8 as f64
}

fn response(r: &mut ChaCha8Rng, eta: f64, logistic: bool) -> f64 {
    if logistic {
        bernoulli(r, eta)
    } else {
        eta + 0.5 * normal(r)
    }
}

fn family(logistic: bool) -> ExpFamily {
    if logistic {
        ExpFamily::BernoulliLogit
    } else {
        ExpFamily::GaussianIdentity
    }
}

fn low_rank_truth(r: &mut ChaCha8Rng, d1: usize, d2: usize, scale: f64) -> Vec<f64> {
    let u: Vec<f64> = (0..d1).map(|_| normal(r)).collect();
    let v: Vec<f64> = (0..d2).map(|_| normal(r)).collect();
    let mut t = Vec::with_capacity(d1 * d2);
    for a in &u {
        for b in &v {
            t.push(scale * a * b);
        }
    }
    t
}

/// Random general-design instance with a rank-one truth.
pub fn general_instance(seed: u64, d1: usize, d2: usize, n: usize, logistic: bool) -> (Problem, Raw) {
    let mut r = rng(seed);
    let truth = low_rank_truth(&mut r, d1, d2, 0.5);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d1 * d2).map(|_| normal(&mut r)).collect()).collect();
    let y: Vec<f64> = xs
        .iter()
        .map(|x| {
            let e: f64 = x.iter().zip(&truth).map(|(a, b)| a * b).sum();
            response(&mut r, e, logistic)
        })
        .collect();
    let design = GeneralDesign::from_flat(d1, d2, xs.concat()).unwrap();
    let p = Problem::new(Design::General(design), y.clone(), family(logistic)).unwrap();
    (p, Raw { d1, d2, xs, y, logistic })
}

/// Random reduced-rank instance; the raw form expands sample `i`, response `j`
/// into `X = e_j x_iᵀ`.
pub fn rrr_instance(seed: u64, q: usize, p: usize, n: usize, logistic: bool) -> (Problem, Raw) {
    let mut r = rng(seed);
    let truth = low_rank_truth(&mut r, q, p, 0.5);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| normal(&mut r)).collect()).collect();
    let mut xs = Vec::new();
    let mut y = Vec::new();
    for xi in &x {
        for j in 0..q {
            let mut m = vec![0.0; q * p];
            m[j * p..(j + 1) * p].copy_from_slice(xi);
            let e: f64 = xi.iter().zip(&truth[j * p..(j + 1) * p]).map(|(a, b)| a * b).sum();
            y.push(response(&mut r, e, logistic));
            xs.push(m);
        }
    }
    let cov = DenseMatrix::new(n, p, x.concat()).unwrap();
    let prob = Problem::new(Design::Rrr(RrrDesign::new(cov, q).unwrap()), y.clone(), family(logistic)).unwrap();
    (prob, Raw { d1: q, d2: p, xs, y, logistic })
}

/// Random completion instance on a `d × d` grid, design scale `d`, every cell observed.
pub fn completion_instance(seed: u64, d: usize, n: usize, logistic: bool) -> (Problem, Raw) {
    let mut r = rng(seed);
    let truth = low_rank_truth(&mut r, d, d, 0.3 / d as f64);
    loop {
        let cells: Vec<(usize, usize)> = (0..n).map(|_| (r.random_range(0..d), r.random_range(0..d))).collect();
        let mut seen = vec![false; d * d];
        for &(a, b) in &cells {
            seen[a * d + b] = true;
        }
        if seen.iter().any(|s| !s) {
            continue;
        }
        let s = d as f64;
        let mut xs = Vec::new();
        let mut y = Vec::new();
        for &(a, b) in &cells {
            let mut m = vec![0.0; d * d];
            m[a * d + b] = s;
            y.push(response(&mut r, s * truth[a * d + b], logistic));
            xs.push(m);
        }
        let design = SingletonDesign::square(d, cells).unwrap();
        let p = Problem::new(Design::Singleton(design), y.clone(), family(logistic)).unwrap();
        return (p, Raw { d1: d, d2: d, xs, y, logistic });
    }
}

/// `‖∇L(0)‖_op` from the raw form.
pub fn lambda_max(raw: &Raw) -> f64 {
    operator(&raw.grad(&vec![0.0; raw.d1 * raw.d2]), raw.d1, raw.d2)
}
pub mod checks;
