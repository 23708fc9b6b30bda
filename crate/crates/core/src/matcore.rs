//! Dense linear-algebra kernels.
//!
//! [`DenseMatrix`] is a small row-major `f64` matrix used for coefficient
//! matrices, design matrices and residual blocks. The decompositions behind
//! [`svd`] and [`project_psd`] are delegated to `nalgebra`; everything on top
//! of them (sign conventions, thresholding, projections, norms) lives here.

use std::fmt;
use std::ops::{Index, IndexMut};

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{invalid, Error, Result};

/// Relative cut-off used when counting nonzero singular values.
pub const RANK_TOL: f64 = 1e-10;

/// Real matrix stored in row-major order.
#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    /// Builds a matrix from row-major entries, rejecting bad shapes and non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return invalid(format!("matrix dimensions must be positive, got {rows}x{cols}"));
        }
        if data.len() != rows * cols {
            return invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return invalid(format!(
                "non-finite entry at ({}, {})",
                pos / cols,
                pos % cols
            ));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return invalid("ragged rows");
        }
        Self::new(nrows, ncols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Square (or rectangular) matrix with `diag` on the main diagonal.
    pub fn from_diag(rows: usize, cols: usize, diag: &[f64]) -> Self {
        let mut m = Self::zeros(rows, cols);
        for (i, &v) in diag.iter().enumerate().take(rows.min(cols)) {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Wraps a buffer without validation; callers guarantee the length.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major entries; this is also the `vec(·)` layout used by the solvers.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return invalid(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for (o, b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// `self + s * other`, shapes must agree.
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in add_scaled");
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(-1.0, other)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(1.0, other)
    }

    /// Trace inner product `<A, B> = tr(AᵀB)`.
    pub fn inner(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "shape mismatch in inner");
        dot(&self.data, &other.data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `(A + Aᵀ)/2`; panics for non-square input.
    pub fn symmetrized(&self) -> Self {
        assert_eq!(self.rows, self.cols, "symmetrized requires a square matrix");
        Self::from_fn(self.rows, self.cols, |r, c| 0.5 * (self[(r, c)] + self[(c, r)]))
    }

    pub(crate) fn to_na(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Dot product with four independent accumulators (fixed reduction order).
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0_f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += s * x`
pub(crate) fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

/// Pairwise summation; the split points depend only on the length.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    /// `rows × k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: DenseMatrix,
    /// Nonincreasing, nonnegative.
    pub singular_values: Vec<f64>,
    /// `cols × k` with orthonormal columns.
    pub v: DenseMatrix,
}

impl SvdFactors {
    /// `U diag(σ) Vᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(&self.singular_values)
    }

    pub(crate) fn reconstruct_with(&self, sigma: &[f64]) -> DenseMatrix {
        let (m, k) = self.u.shape();
        let n = self.v.rows();
        let mut out = DenseMatrix::zeros(m, n);
        for (j, &s) in sigma.iter().enumerate().take(k) {
            if s == 0.0 {
                continue;
            }
            for r in 0..m {
                let a = s * self.u[(r, j)];
                if a == 0.0 {
                    continue;
                }
                let row = &mut out.data[r * n..(r + 1) * n];
                for (c, o) in row.iter_mut().enumerate() {
                    *o += a * self.v[(c, j)];
                }
            }
        }
        out
    }
}

fn ensure_finite(a: &DenseMatrix, what: &str) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        invalid(format!("{what}: matrix has non-finite entries"))
    }
}

/// Singular value decomposition with singular values sorted nonincreasing.
///
/// Column signs are fixed so that the largest-magnitude entry of each column
/// of `U` is nonnegative (ties go to the first such entry).
pub fn svd(a: &DenseMatrix) -> Result<SvdFactors> {
    ensure_finite(a, "svd")?;
    let (m, n) = a.shape();
    let k = m.min(n);
    if a.max_abs() == 0.0 {
        return Ok(SvdFactors {
            u: DenseMatrix::from_diag(m, k, &vec![1.0; k]),
            singular_values: vec![0.0; k],
            v: DenseMatrix::from_diag(n, k, &vec![1.0; k]),
        });
    }
    let dec = a
        .to_na()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Solver { message: "SVD failed to converge".into(), residual: f64::NAN })?;
    let u = dec.u.expect("u requested");
    let v_t = dec.v_t.expect("v requested");
    let sv = dec.singular_values;

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| sv[j].total_cmp(&sv[i]).then(i.cmp(&j)));

    let mut uu = DenseMatrix::zeros(m, k);
    let mut vv = DenseMatrix::zeros(n, k);
    let mut sigma = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut best = 0usize;
        for r in 0..m {
            if u[(r, src)].abs() > u[(best, src)].abs() {
                best = r;
            }
        }
        let sign = if u[(best, src)] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..m {
            uu[(r, dst)] = sign * u[(r, src)];
        }
        for c in 0..n {
            vv[(c, dst)] = sign * v_t[(src, c)];
        }
        sigma.push(sv[src].max(0.0));
    }
    Ok(SvdFactors { u: uu, singular_values: sigma, v: vv })
}

/// Singular values only, nonincreasing.
pub fn singular_values(a: &DenseMatrix) -> Result<Vec<f64>> {
    ensure_finite(a, "singular_values")?;
    if a.max_abs() == 0.0 {
        return Ok(vec![0.0; a.rows().min(a.cols())]);
    }
    let mut sv: Vec<f64> = a
        .to_na()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Solver { message: "SVD failed to converge".into(), residual: f64::NAN })?
        .singular_values
        .iter()
        .map(|s| s.max(0.0))
        .collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv)
}

/// The four matrix norms used throughout the crate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub frobenius: f64,
    pub operator: f64,
    pub nuclear: f64,
    pub elementwise_max: f64,
}

pub fn norms(a: &DenseMatrix) -> Result<Norms> {
    let sv = singular_values(a)?;
    Ok(Norms {
        frobenius: a.frobenius_norm(),
        operator: sv.first().copied().unwrap_or(0.0),
        nuclear: pairwise_sum(&sv),
        elementwise_max: a.max_abs(),
    })
}

pub fn operator_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(singular_values(a)?.first().copied().unwrap_or(0.0))
}

pub fn nuclear_norm(a: &DenseMatrix) -> Result<f64> {
    Ok(pairwise_sum(&singular_values(a)?))
}

/// Number of singular values above `RANK_TOL · σ₁`.
pub fn numerical_rank(a: &DenseMatrix) -> Result<usize> {
    let sv = singular_values(a)?;
    let cut = RANK_TOL * sv.first().copied().unwrap_or(0.0);
    Ok(sv.iter().filter(|&&s| s > cut && s > 0.0).count())
}

/// `Σ_j σ_j(A)^q` with `0⁰ = 0`; for `q = 0` this is the numerical rank.
pub fn bq_measure(a: &DenseMatrix, q: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&q) {
        return invalid(format!("q must lie in [0, 1), got {q}"));
    }
    let sv = singular_values(a)?;
    let cut = RANK_TOL * sv.first().copied().unwrap_or(0.0);
    let terms: Vec<f64> = sv
        .iter()
        .filter(|&&s| s > cut && s > 0.0)
        .map(|&s| if q == 0.0 { 1.0 } else { s.powf(q) })
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Singular value soft thresholding `U diag((σ - τ)₊) Vᵀ`, the prox of `τ‖·‖_N`.
pub fn soft_threshold_sv(a: &DenseMatrix, tau: f64) -> Result<DenseMatrix> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return invalid(format!("threshold must be a finite nonnegative number, got {tau}"));
    }
    if tau == 0.0 {
        ensure_finite(a, "soft_threshold_sv")?;
        return Ok(a.clone());
    }
    let f = svd(a)?;
    let shrunk: Vec<f64> = f.singular_values.iter().map(|s| (s - tau).max(0.0)).collect();
    Ok(f.reconstruct_with(&shrunk))
}

/// Eigen-decomposition of the symmetric part of a square matrix.
/// Eigenvalues are returned nonincreasing with matching eigenvector columns.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix)> {
    if a.rows() != a.cols() {
        return invalid(format!("expected a square matrix, got {}x{}", a.rows(), a.cols()));
    }
    ensure_finite(a, "symmetric_eigen")?;
    let n = a.rows();
    let eig = SymmetricEigen::new(a.symmetrized().to_na());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DenseMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((vals, vecs))
}

/// Frobenius-nearest positive semidefinite matrix to `(A + Aᵀ)/2`.
pub fn project_psd(a: &DenseMatrix) -> Result<DenseMatrix> {
    if a.rows() != a.cols() {
        return invalid(format!("project_psd requires a square matrix, got {}x{}", a.rows(), a.cols()));
    }
    ensure_finite(a, "project_psd")?;
    let n = a.rows();
    let eig = SymmetricEigen::new(a.symmetrized().to_na());
    let mut out = DenseMatrix::zeros(n, n);
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 0.0 {
            continue;
        }
        let v = eig.eigenvectors.column(j);
        for r in 0..n {
            let s = lam * v[r];
            let row = &mut out.data[r * n..(r + 1) * n];
            for (c, o) in row.iter_mut().enumerate() {
                *o += s * v[c];
            }
        }
    }
    Ok(out.symmetrized())
}

/// Entrywise `sgn(a) · min(|a|, r)`.
pub fn clip_box(a: &DenseMatrix, r: f64) -> Result<DenseMatrix> {
    if !(r >= 0.0) {
        return invalid(format!("box level must be nonnegative, got {r}"));
    }
    Ok(a.map(|v| v.clamp(-r, r)))
}

/// Cached Cholesky factor of a symmetric positive definite matrix.
pub(crate) struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    /// `a` is column-major `n × n`; only the lower triangle is read.
    pub(crate) fn new(a: DMatrix<f64>) -> Result<Self> {
        Cholesky::new(a)
            .map(|chol| Self { chol })
            .ok_or_else(|| Error::Solver { message: "matrix is not positive definite".into(), residual: f64::NAN })
    }

    /// Solves in place for each column of `b`.
    pub(crate) fn solve_mut(&self, b: &mut DMatrix<f64>) {
        self.chol.solve_mut(b);
    }
}
