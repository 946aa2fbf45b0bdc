//! Symmetric tridiagonal linear solves and eigendecomposition.

use crate::error::{GrkbsError, Result};

/// Solves `T x = rhs` for symmetric tridiagonal `T` without pivoting.
///
/// Intended for positive definite matrices; a vanishing pivot is reported
/// as [`GrkbsError::Singular`].
pub fn solve_symmetric(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    debug_assert_eq!(off.len() + 1, n);
    debug_assert_eq!(rhs.len(), n);
    let scale = diag
        .iter()
        .fold(0.0f64, |acc, d| acc.max(d.abs()))
        .max(f64::MIN_POSITIVE);
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot.abs() <= 1e-14 * scale {
        return Err(GrkbsError::Singular("zero pivot at row 0".into()));
    }
    x[0] = rhs[0] / pivot;
    for i in 1..n {
        c[i - 1] = off[i - 1] / pivot;
        pivot = diag[i] - off[i - 1] * c[i - 1];
        if pivot.abs() <= 1e-14 * scale {
            return Err(GrkbsError::Singular(format!("zero pivot at row {i}")));
        }
        x[i] = (rhs[i] - off[i - 1] * x[i - 1]) / pivot;
    }
    for i in (0..n - 1).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    Ok(x)
}

/// Full eigendecomposition of a symmetric tridiagonal matrix by implicit QL
/// iteration with Wilkinson-style shifts.
///
/// Returns eigenvalues in ascending order and the matching orthonormal
/// eigenvectors, `vectors[j]` belonging to `values[j]`.
pub fn eigen_symmetric(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = diag.len();
    debug_assert_eq!(off.len() + 1, n);
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    // z[k * n + j]: component k of eigenvector j
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }

    let eps = f64::EPSILON;
    let mut shift_acc = 0.0;
    let mut tst1: f64 = 0.0;
    let max_sweeps = 60 * n.max(1);
    let mut sweeps = 0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            loop {
                sweeps += 1;
                if sweeps > max_sweeps {
                    return Err(GrkbsError::Singular(
                        "tridiagonal QL iteration did not converge".into(),
                    ));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift_acc += h;

                p = d[m];
                let (mut c, mut c2, mut c3) = (1.0, 1.0, 1.0);
                let el1 = e[l + 1];
                let (mut s, mut s2) = (0.0, 0.0);
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let row = k * n;
                        h = z[row + i + 1];
                        z[row + i + 1] = s * z[row + i] + c * h;
                        z[row + i] = c * z[row + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_acc;
        e[l] = 0.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&j| d[j]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| z[k * n + j]).collect())
        .collect();
    Ok((values, vectors))
}
