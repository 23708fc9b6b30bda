//! Pass/fail checks shared by the property tests and the acceptance runner.
//! Each returns `Err` with a description of the first violated condition.

use nalgebra::DMatrix;
use tracereg::matcore::{clip_box, nuclear_norm, operator_norm, project_psd, soft_threshold_sv};
use tracereg::{DenseMatrix, Problem};

use super::{frob_diff, svt, Raw};

pub type Check = Result<(), String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Singular value thresholding: agrees with the SVD oracle and carries a
/// subgradient certificate `‖A - Y‖_op ≤ τ`, `<A - Y, Y> = τ‖Y‖_N`.
pub fn svt_certificate(a: &DenseMatrix, tau: f64) -> Check {
    let (d1, d2) = a.shape();
    let y = soft_threshold_sv(a, tau).map_err(|e| e.to_string())?;
    let scale = 1.0 + a.frobenius_norm();
    let oracle = svt(a.as_slice(), d1, d2, tau);
    let diff = frob_diff(y.as_slice(), &oracle);
    ensure(diff <= 1e-9 * scale, || format!("svt differs from oracle by {diff:e}"))?;
    let r = a.sub(&y);
    let op = operator_norm(&r).unwrap();
    ensure(op <= tau * (1.0 + 1e-9) + 1e-12 * scale, || format!("residual operator norm {op} > tau {tau}"))?;
    let gap = (r.inner(&y) - tau * nuclear_norm(&y).unwrap()).abs();
    ensure(gap <= 1e-9 * scale * scale, || format!("alignment gap {gap:e}"))
}

/// `‖svt(A) - svt(B)‖_F ≤ ‖A - B‖_F`
pub fn svt_nonexpansive(a: &DenseMatrix, b: &DenseMatrix, tau: f64) -> Check {
    let pa = soft_threshold_sv(a, tau).unwrap();
    let pb = soft_threshold_sv(b, tau).unwrap();
    let lhs = pa.sub(&pb).frobenius_norm();
    let rhs = a.sub(b).frobenius_norm();
    ensure(lhs <= rhs * (1.0 + 1e-10) + 1e-12, || format!("{lhs} > {rhs}"))
}

fn min_eigenvalue(m: &DenseMatrix) -> f64 {
    let n = m.rows();
    DMatrix::from_row_slice(n, n, m.as_slice()).symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// PSD projection: output is symmetric PSD and satisfies the variational
/// inequality `<S - P, Q - P> ≤ 0` against the supplied PSD matrices `Q`.
pub fn psd_projection(a: &DenseMatrix, probes: &[DenseMatrix]) -> Check {
    let p = project_psd(a).map_err(|e| e.to_string())?;
    let scale = 1.0 + a.frobenius_norm();
    ensure(p == p.transpose(), || "projection is not symmetric".into())?;
    let lo = min_eigenvalue(&p);
    ensure(lo >= -1e-10 * scale, || format!("negative eigenvalue {lo:e}"))?;
    let s = a.symmetrized();
    let again = project_psd(&p).unwrap();
    ensure(again.sub(&p).frobenius_norm() <= 1e-10 * scale, || "projection is not idempotent".into())?;
    for q in probes {
        let vi = s.sub(&p).inner(&q.sub(&p));
        ensure(vi <= 1e-9 * scale * (1.0 + q.frobenius_norm()), || format!("variational inequality violated: {vi:e}"))?;
    }
    Ok(())
}

/// Clipping is idempotent, bounded by `r`, and the nearest point of the box.
pub fn clip(a: &DenseMatrix, r: f64) -> Check {
    let c = clip_box(a, r).map_err(|e| e.to_string())?;
    ensure(c.max_abs() <= r, || "entry outside the box".into())?;
    ensure(clip_box(&c, r).unwrap() == c, || "clip is not idempotent".into())?;
    for (x, y) in a.as_slice().iter().zip(c.as_slice()) {
        ensure((x - y).abs() == (x.abs() - r).max(0.0), || format!("{x} clipped to {y}"))?;
    }
    Ok(())
}

/// `‖A‖_max ≤ ‖A‖_op ≤ ‖A‖_F ≤ ‖A‖_N ≤ √rank ‖A‖_F`
pub fn norm_ordering(a: &DenseMatrix) -> Check {
    let n = tracereg::matcore::norms(a).unwrap();
    let rank = tracereg::matcore::numerical_rank(a).unwrap() as f64;
    let t = 1.0 + 1e-12;
    ensure(n.elementwise_max <= n.operator * t, || "max > op".into())?;
    ensure(n.operator <= n.frobenius * t, || "op > frobenius".into())?;
    ensure(n.frobenius <= n.nuclear * t, || "frobenius > nuclear".into())?;
    ensure(n.nuclear <= rank.sqrt() * n.frobenius * t + 1e-12, || "nuclear > sqrt(rank) frobenius".into())
}

/// Gradient and Hessian-vector product against central differences, the
/// gradient against the explicit-sum oracle, and the loss against the oracle.
pub fn derivatives(p: &Problem, raw: &Raw, theta: &DenseMatrix, dir: &DenseMatrix) -> Check {
    let (d1, d2) = theta.shape();
    let loss = p.loss(theta).unwrap();
    let ol = raw.loss(theta.as_slice());
    ensure((loss - ol).abs() <= 1e-12 * (1.0 + ol.abs()), || format!("loss {loss} vs oracle {ol}"))?;

    let g = p.gradient(theta).unwrap();
    let og = raw.grad(theta.as_slice());
    let gn = g.frobenius_norm();
    ensure(frob_diff(g.as_slice(), &og) <= 1e-12 * (1.0 + gn), || "gradient differs from oracle".into())?;

    let h = 1e-5;
    let mut fd = vec![0.0; d1 * d2];
    for (k, f) in fd.iter_mut().enumerate() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus.as_mut_slice()[k] += h;
        minus.as_mut_slice()[k] -= h;
        *f = (p.loss(&plus).unwrap() - p.loss(&minus).unwrap()) / (2.0 * h);
    }
    let rel = frob_diff(g.as_slice(), &fd) / (gn + 1e-8);
    ensure(rel < 1e-5, || format!("gradient finite-difference relative error {rel:e}"))?;

    let hv = p.hessian_vec_product(theta, dir).unwrap();
    let hd = 1e-4;
    let gp = p.gradient(&theta.add_scaled(hd, dir)).unwrap();
    let gm = p.gradient(&theta.add_scaled(-hd, dir)).unwrap();
    let fd_hv = gp.sub(&gm).scale(1.0 / (2.0 * hd));
    let rel = hv.sub(&fd_hv).frobenius_norm() / (hv.frobenius_norm() + 1e-8);
    ensure(rel < 1e-4, || format!("Hessian-vector finite-difference relative error {rel:e}"))?;
    ensure(dir.inner(&hv) >= -1e-12, || "negative curvature".into())?;

    for t in [1e-3, 1e-1, 1.0] {
        let second = p.loss(&theta.add_scaled(t, dir)).unwrap() + p.loss(&theta.add_scaled(-t, dir)).unwrap() - 2.0 * loss;
        ensure(second >= -1e-13 * (1.0 + loss.abs()), || format!("second difference {second:e} at t={t}"))?;
    }
    Ok(())
}
