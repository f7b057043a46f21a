use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Householder QR of an m x n matrix (m >= n), stored by columns.
pub(crate) struct HouseholderQr<T> {
    m: usize,
    n: usize,
    /// Column j holds R[0..=j, j] in its leading entries.
    cols: Vec<Vec<T>>,
    reflectors: Vec<(Vec<T>, T)>,
}

impl<T: Scalar> HouseholderQr<T> {
    /// Factor the matrix whose columns are `cols` (each of length `m`).
    pub(crate) fn factor(mut cols: Vec<Vec<T>>, m: usize) -> Self {
        let n = cols.len();
        debug_assert!(m >= n && cols.iter().all(|c| c.len() == m));
        let mut reflectors = Vec::with_capacity(n);
        for k in 0..n {
            let x = &cols[k][k..];
            let norm = x.iter().fold(T::zero(), |acc, &v| acc.hypot(v));
            if norm == T::zero() {
                reflectors.push((vec![T::zero(); m - k], T::zero()));
                continue;
            }
            let alpha = -norm.with_sign_of(x[0]);
            let mut v = x.to_vec();
            v[0] -= alpha;
            let vtv = v.iter().fold(T::zero(), |acc, &e| acc + e * e);
            let beta = if vtv == T::zero() { T::zero() } else { (T::one() + T::one()) / vtv };
            for col in cols.iter_mut().skip(k) {
                let tail = &mut col[k..];
                let d = v.iter().zip(tail.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
                let f = beta * d;
                for (t, &vi) in tail.iter_mut().zip(&v) {
                    *t -= f * vi;
                }
            }
            cols[k][k] = alpha;
            for e in cols[k][k + 1..].iter_mut() {
                *e = T::zero();
            }
            reflectors.push((v, beta));
        }
        HouseholderQr { m, n, cols, reflectors }
    }

    pub(crate) fn from_matrix(a: &DenseMatrix<T>) -> Self {
        let cols = (0..a.n_cols())
            .map(|j| (0..a.n_rows()).map(|i| a[(i, j)]).collect())
            .collect();
        Self::factor(cols, a.n_rows())
    }

    pub(crate) fn r_diagonal(&self) -> impl Iterator<Item = T> + '_ {
        (0..self.n).map(|k| self.cols[k][k])
    }

    /// `Q x` for a length-m vector.
    pub(crate) fn apply_q(&self, x: &mut [T]) {
        debug_assert_eq!(x.len(), self.m);
        for (k, (v, beta)) in self.reflectors.iter().enumerate().rev() {
            let tail = &mut x[k..];
            let d = v.iter().zip(tail.iter()).fold(T::zero(), |acc, (&a, &b)| acc + a * b);
            let f = *beta * d;
            for (t, &vi) in tail.iter_mut().zip(v) {
                *t -= f * vi;
            }
        }
    }

    /// Solve `R^T y = b` (forward substitution). R must be square here.
    pub(crate) fn solve_rt(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.cols[i][k] * y[k];
            }
            y[i] = s / self.cols[i][i];
        }
        y
    }

    /// Solve `R x = b` (back substitution).
    pub(crate) fn solve_r(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let xi = x[i] / self.cols[i][i];
            x[i] = xi;
            for (k, xk) in x.iter_mut().enumerate().take(i) {
                *xk -= self.cols[i][k] * xi;
            }
        }
        x
    }

    /// `R x`.
    pub(crate) fn mul_r(&self, x: &[T]) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); n];
        for (j, &xj) in x.iter().enumerate().take(n) {
            for (i, o) in out.iter_mut().enumerate().take(j + 1) {
                *o += self.cols[j][i] * xj;
            }
        }
        out
    }

    /// `R^T y`.
    pub(crate) fn mul_rt(&self, y: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|j| {
                self.cols[j][..=j]
                    .iter()
                    .zip(y)
                    .fold(T::zero(), |acc, (&r, &yi)| acc + r * yi)
            })
            .collect()
    }
}
