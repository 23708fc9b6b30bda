//! Linear solves for the quadratic step of the splitting iteration.
//!
//! The operator is `v ↦ Σ_i c_i <x_i, v> x_i + β v` over the rows `x_i` of a
//! stacked design. Small problems form and factor it; larger ones apply it
//! matrix-free inside conjugate gradient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matcore::{axpy, dot, SpdFactor};

const GRAM_BLOCK: usize = 256;

/// `Σ_i c_i x_i x_iᵀ + β I` for rows `x_i` of the `n × p` row-major `data`.
pub(crate) fn weighted_gram_plus_ridge(data: &[f64], p: usize, coef: &[f64], beta: f64) -> DMatrix<f64> {
    let n = coef.len();
    debug_assert_eq!(data.len(), n * p);
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut start = 0;
    while start < n {
        let end = (start + GRAM_BLOCK).min(n);
        let b = end - start;
        // row-major b×p read column-major is the p×b matrix with x_i as columns
        let mut cols = DMatrix::from_column_slice(p, b, &data[start * p..end * p]);
        for (k, mut col) in cols.column_iter_mut().enumerate() {
            col *= coef[start + k].max(0.0).sqrt();
        }
        let rows = cols.transpose();
        gram.gemm(1.0, &cols, &rows, 1.0);
        start = end;
    }
    for i in 0..p {
        gram[(i, i)] += beta;
    }
    gram
}

/// Matrix-free form of the same operator.
pub(crate) struct WeightedGramOp<'a> {
    data: &'a [f64],
    p: usize,
    coef: Vec<f64>,
    beta: f64,
}

impl<'a> WeightedGramOp<'a> {
    pub(crate) fn new(data: &'a [f64], p: usize, coef: Vec<f64>, beta: f64) -> Self {
        Self { data, p, coef, beta }
    }

    pub(crate) fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, vi) in out.iter_mut().zip(v) {
            *o = self.beta * vi;
        }
        for (i, &c) in self.coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let x = &self.data[i * self.p..(i + 1) * self.p];
            let s = c * dot(x, v);
            axpy(s, x, out);
        }
    }
}

/// Conjugate gradient for an SPD operator, starting from `x`.
///
/// Stops when `‖b - Ax‖ ≤ tol·‖b‖`. Returns the iteration count.
pub(crate) fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let target = tol * b_norm;
    let mut ax = vec![0.0; n];
    apply(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    let mut rr = dot(&r, &r);
    if rr.sqrt() <= target {
        return Ok(0);
    }
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                message: "conjugate gradient met a non-positive curvature direction".into(),
                residual: rr.sqrt(),
            });
        }
        let step = rr / pap;
        axpy(step, &p, x);
        axpy(-step, &ap, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(it);
        }
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::Solver {
        message: format!("conjugate gradient did not reach tolerance {tol:e} in {max_iter} iterations"),
        residual: rr.sqrt(),
    })
}

/// Solver for `(Σ c_i x_i x_iᵀ + β I) v = rhs`, dense or matrix-free.
pub(crate) enum QuadraticSolve<'a> {
    Dense(SpdFactor),
    Iterative { op: WeightedGramOp<'a>, warm: Vec<f64>, tol: f64, matvecs: usize },
}

pub(crate) const CG_TOL: f64 = 1e-10;

impl<'a> QuadraticSolve<'a> {
    pub(crate) fn new(data: &'a [f64], p: usize, coef: Vec<f64>, beta: f64, dense: bool) -> Result<Self> {
        if dense {
            Ok(Self::Dense(SpdFactor::new(weighted_gram_plus_ridge(data, p, &coef, beta))?))
        } else {
            Ok(Self::Iterative { op: WeightedGramOp::new(data, p, coef, beta), warm: vec![0.0; p], tol: CG_TOL, matvecs: 0 })
        }
    }

    pub(crate) fn solve(&mut self, rhs: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Dense(f) => {
                let mut b = DMatrix::from_column_slice(rhs.len(), 1, rhs);
                f.solve_mut(&mut b);
                Ok(b.as_slice().to_vec())
            }
            Self::Iterative { op, warm, tol, matvecs } => {
                let cap = (4 * rhs.len()).max(200);
                let it = conjugate_gradient(|v, out| op.apply(v, out), rhs, warm, *tol, cap)?;
                *matvecs += it + 1;
                Ok(warm.clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Vec<f64>, usize, Vec<f64>) {
        // 5 samples in R^3
        let data = vec![
            1.0, 0.5, -0.2, //
            0.3, -1.0, 0.8, //
            -0.7, 0.2, 0.1, //
            0.0, 1.5, -0.4, //
            0.9, -0.3, 1.2,
        ];
        (data, 3, vec![0.4, 0.1, 0.25, 0.3, 0.05])
    }

    #[test]
    fn dense_and_matrix_free_agree() {
        let (data, p, coef) = toy();
        let gram = weighted_gram_plus_ridge(&data, p, &coef, 0.7);
        let op = WeightedGramOp::new(&data, p, coef.clone(), 0.7);
        let v = [0.3, -1.1, 2.0];
        let mut out = [0.0; 3];
        op.apply(&v, &mut out);
        for i in 0..3 {
            let dense: f64 = (0..3).map(|j| gram[(i, j)] * v[j]).sum();
            assert!((dense - out[i]).abs() < 1e-13);
        }
        let rhs = [1.0, 2.0, -0.5];
        let mut d = QuadraticSolve::new(&data, p, coef.clone(), 0.7, true).unwrap();
        let mut it = QuadraticSolve::new(&data, p, coef, 0.7, false).unwrap();
        let a = d.solve(&rhs).unwrap();
        let b = it.solve(&rhs).unwrap();
        for i in 0..3 {
            assert!((a[i] - b[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let (data, p, coef) = toy();
        let op = WeightedGramOp::new(&data, p, coef, 1e-3);
        let mut x = vec![0.0; 3];
        let err = conjugate_gradient(|v, o| op.apply(v, o), &[1.0, 1.0, 1.0], &mut x, 1e-30, 1).unwrap_err();
        assert!(matches!(err, Error::Solver { .. }));
    }
}
