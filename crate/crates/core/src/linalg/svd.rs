//! Golub-Kahan-Reinsch SVD: Householder bidiagonalization followed by
//! implicitly shifted QR sweeps on the bidiagonal.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 75;

/// Thin SVD `A = U diag(s) V^T` with `s` non-increasing.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// m x k, k = min(m, n)
    pub u: DenseMatrix<T>,
    pub s: Vec<T>,
    /// n x k
    pub v: DenseMatrix<T>,
}

/// Singular values only.
pub fn golub_kahan_values<T: Scalar>(a: &DenseMatrix<T>) -> Result<Vec<T>> {
    let (work, m, n) = tall_copy(a);
    let out = decompose(work, m, n, false)?;
    Ok(out.w)
}

/// Full thin decomposition.
pub fn golub_kahan_svd<T: Scalar>(a: &DenseMatrix<T>) -> Result<Svd<T>> {
    let transposed = a.n_rows() < a.n_cols();
    let (work, m, n) = tall_copy(a);
    let out = decompose(work, m, n, true)?;
    let u = DenseMatrix::new(m, n, out.u.expect("vectors requested"))?;
    let v = DenseMatrix::new(n, n, out.v.expect("vectors requested"))?;
    Ok(if transposed {
        Svd { u: v, s: out.w, v: u }
    } else {
        Svd { u, s: out.w, v }
    })
}

/// Row-major copy with at least as many rows as columns.
fn tall_copy<T: Scalar>(a: &DenseMatrix<T>) -> (Vec<T>, usize, usize) {
    if a.n_rows() >= a.n_cols() {
        (a.as_slice().to_vec(), a.n_rows(), a.n_cols())
    } else {
        (a.transpose().into_vec(), a.n_cols(), a.n_rows())
    }
}

struct Decomposition<T> {
    w: Vec<T>,
    u: Option<Vec<T>>,
    v: Option<Vec<T>>,
}

fn decompose<T: Scalar>(mut a: Vec<T>, m: usize, n: usize, vectors: bool) -> Result<Decomposition<T>> {
    debug_assert!(m >= n && a.len() == m * n);
    let zero = T::zero();
    let one = T::one();
    let eps = T::epsilon();
    let idx = |i: usize, j: usize| i * n + j;

    let mut w = vec![zero; n];
    let mut rv1 = vec![zero; n];
    let mut v = if vectors { vec![zero; n * n] } else { Vec::new() };

    // Householder reduction to bidiagonal form.
    let mut g = zero;
    let mut scale = zero;
    let mut anorm = zero;
    for i in 0..n {
        let l = i + 1;
        rv1[i] = scale * g;
        g = zero;
        scale = zero;
        let mut s = zero;
        for k in i..m {
            scale += a[idx(k, i)].abs();
        }
        if scale != zero {
            for k in i..m {
                a[idx(k, i)] /= scale;
                s += a[idx(k, i)] * a[idx(k, i)];
            }
            let f = a[idx(i, i)];
            g = -s.sqrt().with_sign_of(f);
            let h = f * g - s;
            a[idx(i, i)] = f - g;
            for j in l..n {
                let mut s = zero;
                for k in i..m {
                    s += a[idx(k, i)] * a[idx(k, j)];
                }
                let f = s / h;
                for k in i..m {
                    let t = a[idx(k, i)];
                    a[idx(k, j)] += f * t;
                }
            }
            for k in i..m {
                a[idx(k, i)] *= scale;
            }
        }
        w[i] = scale * g;

        g = zero;
        scale = zero;
        let mut s = zero;
        if i + 1 != n {
            for k in l..n {
                scale += a[idx(i, k)].abs();
            }
            if scale != zero {
                for k in l..n {
                    a[idx(i, k)] /= scale;
                    s += a[idx(i, k)] * a[idx(i, k)];
                }
                let f = a[idx(i, l)];
                g = -s.sqrt().with_sign_of(f);
                let h = f * g - s;
                a[idx(i, l)] = f - g;
                for k in l..n {
                    rv1[k] = a[idx(i, k)] / h;
                }
                for j in l..m {
                    let mut s = zero;
                    for k in l..n {
                        s += a[idx(j, k)] * a[idx(i, k)];
                    }
                    for k in l..n {
                        a[idx(j, k)] += s * rv1[k];
                    }
                }
                for k in l..n {
                    a[idx(i, k)] *= scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    if vectors {
        // Right-hand transformations.
        let mut l = n;
        for i in (0..n).rev() {
            if i + 1 < n {
                if g != zero {
                    for j in l..n {
                        v[idx(j, i)] = (a[idx(i, j)] / a[idx(i, l)]) / g;
                    }
                    for j in l..n {
                        let mut s = zero;
                        for k in l..n {
                            s += a[idx(i, k)] * v[idx(k, j)];
                        }
                        for k in l..n {
                            let t = v[idx(k, i)];
                            v[idx(k, j)] += s * t;
                        }
                    }
                }
                for j in l..n {
                    v[idx(i, j)] = zero;
                    v[idx(j, i)] = zero;
                }
            }
            v[idx(i, i)] = one;
            g = rv1[i];
            l = i;
        }
        // Left-hand transformations.
        for i in (0..n).rev() {
            let l = i + 1;
            let mut g = w[i];
            for j in l..n {
                a[idx(i, j)] = zero;
            }
            if g != zero {
                g = one / g;
                for j in l..n {
                    let mut s = zero;
                    for k in l..m {
                        s += a[idx(k, i)] * a[idx(k, j)];
                    }
                    let f = (s / a[idx(i, i)]) * g;
                    for k in i..m {
                        let t = a[idx(k, i)];
                        a[idx(k, j)] += f * t;
                    }
                }
                for j in i..m {
                    a[idx(j, i)] *= g;
                }
            } else {
                for j in i..m {
                    a[idx(j, i)] = zero;
                }
            }
            a[idx(i, i)] += one;
        }
    }

    // Diagonalization of the bidiagonal form.
    let tiny = eps * anorm;
    for k in (0..n).rev() {
        let mut sweeps = 0;
        loop {
            // Find l such that rv1[l] is negligible (rv1[0] is always zero).
            let mut l = k;
            let mut split_at_zero_diag = false;
            loop {
                if l == 0 || rv1[l].abs() <= tiny {
                    break;
                }
                if w[l - 1].abs() <= tiny {
                    split_at_zero_diag = true;
                    break;
                }
                l -= 1;
            }
            if split_at_zero_diag {
                // Cancel rv1[l] when w[l-1] is negligible.
                let nm = l - 1;
                let mut c = zero;
                let mut s = one;
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] = c * rv1[i];
                    if f.abs() <= tiny {
                        break;
                    }
                    let g = w[i];
                    let h = f.hypot(g);
                    w[i] = h;
                    let hinv = one / h;
                    c = g * hinv;
                    s = -f * hinv;
                    if vectors {
                        for j in 0..m {
                            let y = a[idx(j, nm)];
                            let z = a[idx(j, i)];
                            a[idx(j, nm)] = y * c + z * s;
                            a[idx(j, i)] = z * c - y * s;
                        }
                    }
                }
            }
            let z = w[k];
            if l == k {
                if z < zero {
                    w[k] = -z;
                    if vectors {
                        for j in 0..n {
                            v[idx(j, k)] = -v[idx(j, k)];
                        }
                    }
                }
                break;
            }
            if sweeps == MAX_SWEEPS {
                return Err(Error::Numerical(format!(
                    "bidiagonal QR did not converge for singular value {k} in {MAX_SWEEPS} sweeps"
                )));
            }
            sweeps += 1;

            // Wilkinson-style shift from the trailing 2x2 block.
            let two = one + one;
            let mut x = w[l];
            let nm = k - 1;
            let mut y = w[nm];
            let mut g = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g - h) * (g + h)) / (two * h * y);
            g = f.hypot(one);
            f = ((x - z) * (x + z) + h * ((y / (f + g.with_sign_of(f))) - h)) / x;
            let mut c = one;
            let mut s = one;
            for j in l..=nm {
                let i = j + 1;
                g = rv1[i];
                y = w[i];
                h = s * g;
                g = c * g;
                let mut z = f.hypot(h);
                rv1[j] = z;
                c = f / z;
                s = h / z;
                f = x * c + g * s;
                g = g * c - x * s;
                h = y * s;
                y *= c;
                if vectors {
                    for jj in 0..n {
                        let xv = v[idx(jj, j)];
                        let zv = v[idx(jj, i)];
                        v[idx(jj, j)] = xv * c + zv * s;
                        v[idx(jj, i)] = zv * c - xv * s;
                    }
                }
                z = f.hypot(h);
                w[j] = z;
                if z != zero {
                    let zinv = one / z;
                    c = f * zinv;
                    s = h * zinv;
                }
                f = c * g + s * y;
                x = c * y - s * g;
                if vectors {
                    for jj in 0..m {
                        let ya = a[idx(jj, j)];
                        let za = a[idx(jj, i)];
                        a[idx(jj, j)] = ya * c + za * s;
                        a[idx(jj, i)] = za * c - ya * s;
                    }
                }
            }
            rv1[l] = zero;
            rv1[k] = f;
            w[k] = x;
        }
    }

    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite singular value".into()));
    }

    // Sort non-increasing, permuting vectors alongside.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| w[q].partial_cmp(&w[p]).expect("finite"));
    let ws = order.iter().map(|&p| w[p]).collect();
    if !vectors {
        return Ok(Decomposition { w: ws, u: None, v: None });
    }
    let mut us = vec![zero; m * n];
    let mut vs = vec![zero; n * n];
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..m {
            us[r * n + dst] = a[idx(r, src)];
        }
        for r in 0..n {
            vs[r * n + dst] = v[idx(r, src)];
        }
    }
    Ok(Decomposition { w: ws, u: Some(us), v: Some(vs) })
}
