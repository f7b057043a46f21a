//! Deterministic shifts and shifted random ensembles `M + N`.

use crate::distributions::EntryDistribution;
use crate::error::{Error, Result};
use crate::linalg::distance_to_row_span;
use crate::rng::{Stream, Substream};
use crate::Matrix;

/// The adversarial shift: a zero first row on top of `L I_{n-1}` joined
/// with an all-`L` last column, i.e. row `i+1` is `L e_i + L e_n`.
///
/// Its operator norm is `L sqrt(n)` (the nonzero rows have Gram matrix
/// `L^2 (I + J)`), not `L`.
pub fn adversarial_matrix(n: usize, scale: f64) -> Result<Matrix> {
    if n % 2 == 1 {
        return Err(Error::Input(format!(
            "adversarial construction needs even n (the zero-sum event requires it), got n={n}"
        )));
    }
    if n < 4 {
        return Err(Error::Input(format!("adversarial construction needs n >= 4, got {n}")));
    }
    if !(scale.is_finite() && scale >= n as f64) {
        return Err(Error::Input(format!("adversarial construction needs L >= n = {n}, got L={scale}")));
    }
    Ok(Matrix::from_fn(n, n, |i, j| {
        if i > 0 && (j == i - 1 || j == n - 1) {
            scale
        } else {
            0.0
        }
    }))
}

/// A fixed square shift together with the law of the iid noise added to it.
#[derive(Clone, Debug)]
pub struct ShiftedEnsemble {
    shift: Matrix,
    law: EntryDistribution,
}

impl ShiftedEnsemble {
    pub fn new(shift: Matrix, law: EntryDistribution) -> Result<Self> {
        if !shift.is_square() {
            return Err(Error::Input(format!(
                "shift must be square, got {}x{}",
                shift.n_rows(),
                shift.n_cols()
            )));
        }
        law.require_real()?;
        Ok(ShiftedEnsemble { shift, law })
    }

    /// Pure noise, `M = 0`.
    pub fn centered(n: usize, law: EntryDistribution) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("matrix size must be positive".into()));
        }
        Self::new(Matrix::zeros(n, n), law)
    }

    pub fn n(&self) -> usize {
        self.shift.n_rows()
    }

    pub fn shift(&self) -> &Matrix {
        &self.shift
    }

    pub fn law(&self) -> &EntryDistribution {
        &self.law
    }

    /// The noise matrix `N` for `seed`. Entry (i, j) reads its own substream,
    /// so the same seed gives the same noise under any shift.
    pub fn noise(&self, seed: u64) -> Matrix {
        noise_matrix(&self.law, self.n(), seed)
    }
}

pub(crate) fn noise_matrix(law: &EntryDistribution, n: usize, seed: u64) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        let mut s = Stream::new(seed, Substream::entry(i, j));
        law.draw(&mut s)
    })
}

/// One draw of `M + N`.
pub fn sample_shifted(ensemble: &ShiftedEnsemble, seed: u64) -> Matrix {
    ensemble
        .shift
        .add(&ensemble.noise(seed))
        .expect("shapes agree by construction")
}

/// Unit normal `v` to rows 2..n, written as
/// `v = (1/sqrt(n) + a_1, ..., 1/sqrt(n) + a_{n-1}, -1/sqrt(n) + a_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalProfile {
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub max_abs_a: f64,
    /// Rows 2..n were numerically dependent.
    pub degenerate: bool,
    /// `|row_1 . v|`, which equals `||A v||` because `v` annihilates the other rows.
    pub first_row_residual: f64,
}

/// Profile of the normal vector to the last `n-1` rows, signed so that
/// its last coordinate is `<= 0`.
pub fn normal_vector_profile(a: &Matrix) -> Result<NormalProfile> {
    let dist = distance_to_row_span(a, 0)?;
    let n = a.n_rows();
    let mut v = dist.normal;
    if v[n - 1] > 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let h = 1.0 / (n as f64).sqrt();
    let dev: Vec<f64> = v
        .iter()
        .enumerate()
        .map(|(i, &x)| if i + 1 < n { x - h } else { x + h })
        .collect();
    let max_abs_a = dev.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let first_row_residual = a.row(0).iter().zip(&v).map(|(x, y)| x * y).sum::<f64>().abs();
    Ok(NormalProfile {
        v,
        a: dev,
        max_abs_a,
        degenerate: dist.degenerate,
        first_row_residual,
    })
}

/// Whether `xi_1 + ... + xi_{n-1} - xi_n = 0` for one row of noise.
pub fn zero_sum_event(row: &[f64]) -> bool {
    let Some((last, head)) = row.split_last() else {
        return false;
    };
    (head.iter().sum::<f64>() - last).abs() < 0.5
}

/// `C(n, n/2) / 2^n` for even `n`. Exact in binary floating point as long as
/// the binomial coefficient has at most 53 significant bits (n <= 56).
pub fn central_binomial_probability(n: usize) -> f64 {
    debug_assert!(n % 2 == 0);
    let m = n / 2;
    if n <= 120 {
        let mut c: u128 = 1;
        for k in 1..=m as u128 {
            c = c * (m as u128 + k) / k;
        }
        return c as f64 * 2f64.powi(-(n as i32));
    }
    (1..=m).map(|k| (2 * k - 1) as f64 / (2 * k) as f64).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{least_singular_value, operator_norm};

    #[test]
    fn displayed_pattern_for_n4() {
        let m = adversarial_matrix(4, 5.0).unwrap();
        let expected = [
            [0.0, 0.0, 0.0, 0.0],
            [5.0, 0.0, 0.0, 5.0],
            [0.0, 5.0, 0.0, 5.0],
            [0.0, 0.0, 5.0, 5.0],
        ];
        for (i, row) in expected.iter().enumerate() {
            assert_eq!(m.row(i), row);
        }
        assert_eq!(m.count_nonzero(), 6);
    }

    #[test]
    fn rejects_bad_parameters() {
        let err = adversarial_matrix(3, 5.0).unwrap_err();
        assert!(err.to_string().contains("even"));
        assert!(adversarial_matrix(2, 5.0).is_err());
        assert!(adversarial_matrix(6, 5.0).is_err());
    }

    #[test]
    fn norm_is_l_sqrt_n() {
        // Oracle: largest eigenvalue of L^2 (I + J) on the nonzero rows is L^2 n.
        for n in [4usize, 8, 10] {
            let m = adversarial_matrix(n, 25.0).unwrap();
            let est = operator_norm(&m, 1e-12).unwrap();
            let expected = 25.0 * ((n - 1) as f64 + 1.0).sqrt();
            assert!((est.value - expected).abs() < 1e-9 * expected, "n={n}: {}", est.value);
        }
        assert_eq!(least_singular_value(&adversarial_matrix(6, 6.0).unwrap(), 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn noiseless_profile_is_flat() {
        for n in [4usize, 10, 30] {
            let m = adversarial_matrix(n, 3.0 * n as f64).unwrap();
            let p = normal_vector_profile(&m).unwrap();
            let h = 1.0 / (n as f64).sqrt();
            for i in 1..n {
                let dot: f64 = m.row(i).iter().zip(&p.v).map(|(x, y)| x * y).sum();
                assert!(dot.abs() < 1e-12);
            }
            assert!(p.max_abs_a < 1e-14, "n={n}: {}", p.max_abs_a);
            assert!((p.v[n - 1] + h).abs() < 1e-14);
        }
    }

    #[test]
    fn shifted_samples() {
        let law = EntryDistribution::bernoulli();
        let e = ShiftedEnsemble::centered(5, law.clone()).unwrap();
        let a = sample_shifted(&e, 3);
        assert!(a.as_slice().iter().all(|&x| x == 1.0 || x == -1.0));
        assert_eq!(a, sample_shifted(&e, 3));

        let e = ShiftedEnsemble::new(adversarial_matrix(4, 5.0).unwrap(), law).unwrap();
        let b = sample_shifted(&e, 3);
        assert!(b.row(0).iter().all(|&x| x == 1.0 || x == -1.0));
        assert!(b[(1, 0)] == 4.0 || b[(1, 0)] == 6.0);
        // Same seed, different shift: identical noise.
        let diff = b.add(&Matrix::from_fn(4, 4, |i, j| -e.shift()[(i, j)])).unwrap();
        let a4 = sample_shifted(&ShiftedEnsemble::centered(4, EntryDistribution::bernoulli()).unwrap(), 3);
        assert_eq!(diff, a4);
    }

    #[test]
    fn profile_of_noisy_identity_is_unit() {
        let law = EntryDistribution::bernoulli();
        let e = ShiftedEnsemble::new(Matrix::identity(12), law).unwrap();
        for seed in 0..5 {
            let p = normal_vector_profile(&sample_shifted(&e, seed)).unwrap();
            let nrm: f64 = p.v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((nrm - 1.0).abs() < 1e-12);
            assert!(p.v[11] <= 0.0);
        }
    }

    #[test]
    fn zero_sum_and_central_binomial() {
        assert!(zero_sum_event(&[1.0, -1.0, 1.0, 1.0]));
        assert!(!zero_sum_event(&[1.0, 1.0, 1.0, 1.0]));
        assert!((central_binomial_probability(4) - 6.0 / 16.0).abs() < 1e-16);
        assert!((central_binomial_probability(16) - 12870.0 / 65536.0).abs() < 1e-16);
    }
}
