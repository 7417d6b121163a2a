//! Small dense linear-algebra helpers shared by the estimator and the
//! information objectives.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// First jitter added to the diagonal when a Cholesky factorization fails.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-6;

/// Returns `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Lower Cholesky factor of a symmetric PSD matrix.
///
/// An exactly-zero matrix factors to zero. Otherwise the diagonal is jittered
/// starting at `JITTER_START`, growing by ×10 up to `JITTER_MAX`, before the
/// factorization is reported as failed.
pub fn psd_factor(m: &DMatrix<f64>, context: &'static str) -> Result<DMatrix<f64>> {
    if m.iter().all(|&x| x == 0.0) {
        return Ok(DMatrix::zeros(m.nrows(), m.ncols()));
    }
    let m = symmetrize(m);
    if let Some(ch) = Cholesky::new(m.clone()) {
        return Ok(ch.l());
    }
    let n = m.nrows();
    let mut jitter = JITTER_START;
    while jitter <= JITTER_MAX * (1.0 + 1e-9) {
        let jittered = &m + DMatrix::<f64>::identity(n, n) * jitter;
        if let Some(ch) = Cholesky::new(jittered) {
            return Ok(ch.l());
        }
        jitter *= 10.0;
    }
    Err(Error::numerical(
        context,
        "covariance is not positive semi-definite after jitter escalation",
    ))
}

/// Cholesky decomposition of an SPD matrix, failing with context on error.
pub fn spd_cholesky(m: &DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::numerical(context, "matrix is not positive definite"))
}

/// Natural log-determinant of an SPD matrix.
pub fn log_det_spd(m: &DMatrix<f64>, context: &'static str) -> Result<f64> {
    let ch = spd_cholesky(m, context)?;
    Ok(2.0 * ch.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Block-diagonal matrix from square blocks.
pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((at, at), (k, k)).copy_from(b);
        at += k;
    }
    out
}

/// `vᵀ m v`.
pub fn quad_form(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v))
}

/// Cholesky factorization of a small SPD matrix stored row-major in `a`
/// (in place, lower triangle). Returns false if a pivot is not positive.
///
/// Used on the hot path of placement search, where allocating a `DMatrix`
/// per candidate dominates the cost.
pub fn small_cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    true
}

/// Solves `L y = b` in place for the lower factor produced by
/// [`small_cholesky_in_place`].
pub fn small_forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}
