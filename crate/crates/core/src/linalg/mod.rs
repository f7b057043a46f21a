//! Dense real linear algebra for the spectral experiments.
//!
//! Two independent SVD routes live here: [`svd`] (Golub-Kahan
//! bidiagonalization with implicit-shift QR, the production path) and
//! [`jacobi`] (one-sided Jacobi, the reference). The least singular value
//! has its own fast path, shifted-at-zero inverse iteration on `A^T A`
//! carried out through a QR factor of `A`, which falls back to the full
//! decomposition whenever its residual certificate does not close.

mod matrix;
mod qr;

pub mod jacobi;
pub mod svd;

pub use jacobi::jacobi_singular_values;
pub use matrix::DenseMatrix;
pub use svd::{golub_kahan_svd, Svd};

use crate::error::{Error, Result};
use crate::rng::{Stream, Substream};
use crate::scalar::Scalar;
use qr::HouseholderQr;

const START_SEED: u64 = 0x57A7_7E55;
const INVERSE_ITERATIONS: usize = 500;
const POWER_ITERATIONS: usize = 20_000;

/// `s1`, `sn`, `kappa = s1/sn` and `log kappa` of one matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralSummary<T> {
    pub s1: T,
    pub sn: T,
    /// `+inf` when the matrix is numerically singular.
    pub kappa: T,
    pub log_kappa: T,
}

impl<T: Scalar> SpectralSummary<T> {
    /// Builds the summary from non-increasing singular values. `sn` counts as
    /// zero once it drops to `1e-12 max(1, s1)` (or 64 ulps for short types).
    pub fn from_singular_values(values: &[T]) -> Result<Self> {
        let (&s1, &sn) = match (values.first(), values.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Input("no singular values".into())),
        };
        let floor = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
        let singular = sn <= floor * s1.max(T::one());
        let kappa = if singular { T::infinity() } else { s1 / sn };
        Ok(SpectralSummary { s1, sn, kappa, log_kappa: kappa.ln() })
    }

    pub fn is_singular(&self) -> bool {
        self.kappa.is_infinite()
    }
}

pub fn spectral_summary<T: Scalar>(a: &DenseMatrix<T>) -> Result<SpectralSummary<T>> {
    SpectralSummary::from_singular_values(&singular_values(a)?)
}

/// All singular values, non-increasing (Golub-Kahan path).
pub fn singular_values<T: Scalar>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    svd::golub_kahan_values(a)
}

fn start_vector<T: Scalar>(n: usize) -> Vec<T> {
    let mut s = Stream::new(START_SEED, Substream::AUDIT);
    let mut x: Vec<T> = (0..n).map(|_| T::lit(1.0 + s.uniform())).collect();
    normalize(&mut x);
    x
}

fn norm2<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc.hypot(v))
}

fn normalize<T: Scalar>(x: &mut [T]) -> T {
    let nrm = norm2(x);
    if nrm > T::zero() {
        for v in x.iter_mut() {
            *v /= nrm;
        }
    }
    nrm
}

fn dot<T: Scalar>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Smallest singular value of a square matrix.
///
/// Runs inverse iteration with the pair residual `||R^T u - s x||` as the
/// certificate, where `A = QR`. The result agrees with the last singular
/// value within `max(tol, 1e-10 s1)`; iteration continues past the
/// certificate until the estimate stops moving. If the triangular factor
/// is numerically singular or the iteration stalls, the full Golub-Kahan
/// decomposition is used instead.
pub fn least_singular_value<T: Scalar>(a: &DenseMatrix<T>, tol: T) -> Result<T> {
    if !a.is_square() {
        return Err(Error::Input(format!(
            "least singular value needs a square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let n = a.n_rows();
    if n == 1 {
        return Ok(a[(0, 0)].abs());
    }
    match inverse_iteration(a, tol) {
        Some(s) => Ok(s),
        None => singular_values(a)?
            .last()
            .copied()
            .ok_or_else(|| Error::Numerical("empty spectrum".into())),
    }
}

fn inverse_iteration<T: Scalar>(a: &DenseMatrix<T>, tol: T) -> Option<T> {
    let n = a.n_rows();
    let frob = a.frobenius_norm();
    if frob == T::zero() {
        return Some(T::zero());
    }
    let qr = HouseholderQr::from_matrix(a);
    let min_diag = qr.r_diagonal().map(|d| d.abs()).fold(T::infinity(), T::min);
    if min_diag <= T::epsilon() * T::lit(64.0) * frob {
        return None;
    }
    // s1 >= ||A||_F / sqrt(n), so this threshold never exceeds 1e-10 s1.
    let s1_floor = frob / T::lit(n as f64).sqrt();
    let certificate = tol.max(T::lit(1e-10) * s1_floor);
    let stall = T::lit(1e-13).max(T::epsilon() * T::lit(8.0));

    let mut x = start_vector::<T>(n);
    let mut prev = T::infinity();
    for _ in 0..INVERSE_ITERATIONS {
        let y = qr.solve_rt(&x);
        let mut z = qr.solve_r(&y);
        if normalize(&mut z) == T::zero() || z.iter().any(|v| !v.is_finite()) {
            return None;
        }
        x = z;
        let mut u = qr.mul_r(&x);
        let sigma = normalize(&mut u);
        let rtu = qr.mul_rt(&u);
        let resid = norm2(&rtu.iter().zip(&x).map(|(&p, &q)| p - sigma * q).collect::<Vec<_>>());
        if resid <= certificate && (sigma - prev).abs() <= stall * sigma {
            return Some(sigma);
        }
        prev = sigma;
    }
    None
}

/// Result of [`operator_norm`]: the estimate and a two-sided bracket.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate<T> {
    pub value: T,
    /// `||A x||` for the final unit iterate; never exceeds `s1`.
    pub lower: T,
    /// `min(||A||_F, sqrt(||A||_1 ||A||_inf))`; never below `s1`.
    pub upper: T,
    pub iterations: usize,
    /// The power iteration did not settle and the full SVD was used.
    pub fell_back: bool,
}

/// Largest singular value by power iteration on `A^T A`.
pub fn operator_norm<T: Scalar>(a: &DenseMatrix<T>, tol: T) -> Result<NormEstimate<T>> {
    let (m, n) = (a.n_rows(), a.n_cols());
    let frob = a.frobenius_norm();
    let norm1 = (0..n)
        .map(|j| (0..m).fold(T::zero(), |acc, i| acc + a[(i, j)].abs()))
        .fold(T::zero(), T::max);
    let norm_inf = a
        .rows_iter()
        .map(|r| r.iter().fold(T::zero(), |acc, &v| acc + v.abs()))
        .fold(T::zero(), T::max);
    let upper = frob.min((norm1 * norm_inf).sqrt());
    if frob == T::zero() {
        return Ok(NormEstimate { value: T::zero(), lower: T::zero(), upper, iterations: 0, fell_back: false });
    }
    let tol = tol.max(T::epsilon() * T::lit(4.0));

    let mut x = start_vector::<T>(n);
    let mut sigma = T::zero();
    let mut last_step = T::infinity();
    for it in 1..=POWER_ITERATIONS {
        let y = a.mul_vec(&x);
        let next = norm2(&y);
        let mut z = a.tr_mul_vec(&y);
        if normalize(&mut z) == T::zero() {
            let value = next.min(upper);
            return Ok(NormEstimate { value, lower: value, upper, iterations: it, fell_back: false });
        }
        x = z;
        let step = (next - sigma).abs();
        sigma = next;
        // Geometric tail estimate of the remaining error.
        let ratio = if last_step.is_finite() && last_step > T::zero() { step / last_step } else { T::one() };
        let remaining = if ratio < T::one() { step * ratio / (T::one() - ratio) } else { T::infinity() };
        last_step = step;
        if step == T::zero() || (step <= tol * sigma && remaining <= tol * sigma) {
            let value = sigma.min(upper);
            return Ok(NormEstimate { value, lower: value, upper, iterations: it, fell_back: false });
        }
    }
    let s1 = singular_values(a)?[0];
    Ok(NormEstimate { value: s1, lower: sigma, upper, iterations: POWER_ITERATIONS, fell_back: true })
}

/// A unit vector orthogonal to `n - 1` vectors of length `n`.
///
/// Computed as the last column of the full Q from a Householder QR of the
/// matrix whose columns are the rows, so it is orthogonal to their span even
/// when they are dependent. Sign: first non-negligible coordinate positive.
pub fn unit_normal_to_rows<T: Scalar, R: AsRef<[T]>>(rows: &[R]) -> Result<Vec<T>> {
    let n = rows.len() + 1;
    if let Some(bad) = rows.iter().position(|r| r.as_ref().len() != n) {
        return Err(Error::Input(format!(
            "row {bad} has length {}, expected {n} for {} rows",
            rows[bad].as_ref().len(),
            rows.len()
        )));
    }
    let cols: Vec<Vec<T>> = rows.iter().map(|r| r.as_ref().to_vec()).collect();
    let qr = HouseholderQr::factor(cols, n);
    let mut v = vec![T::zero(); n];
    v[n - 1] = T::one();
    qr.apply_q(&mut v);
    normalize(&mut v);
    let cutoff = T::epsilon() * T::lit(64.0);
    if let Some(first) = v.iter().find(|x| x.abs() > cutoff) {
        if *first < T::zero() {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowDistance<T> {
    pub distance: T,
    /// The other rows are linearly dependent; `distance` came from projection.
    pub degenerate: bool,
    /// Unit normal to the other rows (any unit null vector when degenerate).
    pub normal: Vec<T>,
}

/// Distance from row `k` (0-based) to the span of the remaining rows.
pub fn distance_to_row_span<T: Scalar>(a: &DenseMatrix<T>, k: usize) -> Result<RowDistance<T>> {
    if !a.is_square() {
        return Err(Error::Input("distance to row span needs a square matrix".into()));
    }
    let n = a.n_rows();
    if k >= n {
        return Err(Error::Input(format!("row index {k} out of range for {n} rows")));
    }
    let others: Vec<&[T]> = (0..n).filter(|&i| i != k).map(|i| a.row(i)).collect();
    let xk = a.row(k);
    if n == 1 {
        return Ok(RowDistance { distance: norm2(xk), degenerate: false, normal: vec![T::one()] });
    }
    let cols: Vec<Vec<T>> = others.iter().map(|r| r.to_vec()).collect();
    let qr = HouseholderQr::factor(cols, n);
    let scale = others.iter().map(|r| norm2(r)).fold(T::zero(), T::max);
    let min_diag = qr.r_diagonal().map(|d| d.abs()).fold(T::infinity(), T::min);
    let degenerate = min_diag <= T::lit(1e-10) * scale.max(T::min_positive_value());
    let normal = unit_normal_to_rows(&others)?;
    let distance = if degenerate {
        projection_residual(&others, xk)
    } else {
        dot(xk, &normal).abs()
    };
    Ok(RowDistance { distance, degenerate, normal })
}

/// `||x - P x||` with `P` the orthogonal projector onto span(rows).
fn projection_residual<T: Scalar>(rows: &[&[T]], x: &[T]) -> T {
    let mut basis: Vec<Vec<T>> = Vec::new();
    for r in rows {
        let mut q = r.to_vec();
        let original = norm2(&q);
        if original == T::zero() {
            continue;
        }
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&q, b);
                q.iter_mut().zip(b).for_each(|(qi, &bi)| *qi -= c * bi);
            }
        }
        if normalize(&mut q) > T::lit(1e-10) * original {
            basis.push(q);
        }
    }
    let mut res = x.to_vec();
    for _ in 0..2 {
        for b in &basis {
            let c = dot(&res, b);
            res.iter_mut().zip(b).for_each(|(ri, &bi)| *ri -= c * bi);
        }
    }
    norm2(&res)
}
