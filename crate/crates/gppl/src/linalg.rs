//! Dense linear-algebra helpers shared by the inference modules: Cholesky
//! factorization with an escalating diagonal jitter, and a few small
//! utilities built on top of it.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

/// First jitter added to the diagonal, relative to the mean diagonal entry.
pub const BASE_JITTER: f64 = 1e-6;
/// Largest relative jitter tried before reporting a singular model.
pub const MAX_JITTER: f64 = 1e-2;

/// Cholesky of `m`, falling back to `m + j·mean(diag m)·I` with j escalating
/// from 1e-6 by factors of 10 up to 1e-2 when the clean factorization fails.
/// The escalation path is deterministic, so repeated calls on the same
/// matrix produce bit-identical factors; well-conditioned matrices are
/// factorized without any perturbation at all.
pub fn jittered_cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let n = m.nrows();
    if let Some(chol) = Cholesky::new(m.clone()) {
        return Ok(chol);
    }
    if n == 0 {
        return Err(Error::SingularModel(format!("{what}: empty matrix")));
    }
    let mean_diag = (m.diagonal().sum() / n as f64).abs().max(f64::MIN_POSITIVE);
    let mut rel = BASE_JITTER;
    while rel <= MAX_JITTER * (1.0 + 1e-12) {
        let mut jm = m.clone();
        for i in 0..n {
            jm[(i, i)] += rel * mean_diag;
        }
        if let Some(chol) = Cholesky::new(jm) {
            return Ok(chol);
        }
        rel *= 10.0;
    }
    Err(Error::SingularModel(format!(
        "{what}: Cholesky failed after jitter escalation to {MAX_JITTER:.0e} (relative)"
    )))
}

/// log-determinant of the factorized matrix: 2·Σ log Lᵢᵢ.
pub fn ln_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Inverse of a symmetric positive-definite matrix via jittered Cholesky,
/// symmetrized to remove round-off drift.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let mut inv = jittered_cholesky(m, what)?.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Averages a nearly-symmetric matrix with its transpose in place.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    debug_assert_eq!(n, m.ncols());
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
