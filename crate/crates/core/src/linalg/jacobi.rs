//! One-sided (Hestenes) Jacobi SVD.
//!
//! Slow but simple and accurate; kept as an independent reference for the
//! bidiagonal QR path and the inverse-iteration fast path. Shares nothing
//! with them beyond the matrix type.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Singular values, non-increasing.
pub fn jacobi_singular_values<T: Scalar>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    // Work on columns of the tall orientation.
    let tall = if a.n_rows() >= a.n_cols() { a.clone() } else { a.transpose() };
    let (m, n) = (tall.n_rows(), tall.n_cols());
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| (0..m).map(|i| tall[(i, j)]).collect()).collect();
    let eps = T::epsilon();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = cols[p].iter().zip(&cols[q]).fold(
                    (T::zero(), T::zero(), T::zero()),
                    |(a, b, g), (&x, &y)| (a + x * x, b + y * y, g + x * y),
                );
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == T::zero() {
                    continue;
                }
                rotated = true;
                let two = T::one() + T::one();
                let zeta = (beta - alpha) / (two * gamma);
                let t = T::one().with_sign_of(zeta) / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                for (x, y) in left[p].iter_mut().zip(right[0].iter_mut()) {
                    let (xp, yq) = (*x, *y);
                    *x = c * xp - s * yq;
                    *y = s * xp + c * yq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numerical(format!("one-sided Jacobi did not converge in {MAX_SWEEPS} sweeps")));
    }
    let mut s: Vec<T> = cols
        .iter()
        .map(|c| c.iter().fold(T::zero(), |acc, &x| acc.hypot(x)))
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    Ok(s)
}
