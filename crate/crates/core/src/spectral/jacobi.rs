use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Convergence threshold on the off-diagonal Frobenius norm, relative to
/// `max(1, ‖A‖_F)`.
pub const OFF_DIAGONAL_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut sum = 0.0;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                sum += a[(i, j)] * a[(i, j)];
            }
        }
    }
    sum.sqrt()
}

/// Cyclic (row-ordered) Jacobi eigensolver for a symmetric matrix. Returns
/// ascending eigenvalues and the matching eigenvectors as columns.
pub(crate) fn jacobi_eigen(input: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = input.nrows();
    let mut a = input.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let tol = OFF_DIAGONAL_TOL * a.norm().max(1.0);

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                rotate(&mut a, &mut v, p, q);
            }
        }
    }
    if !converged {
        let off_norm = off_diagonal_norm(&a);
        if off_norm > tol {
            return Err(Error::NoConvergence {
                sweeps: MAX_SWEEPS,
                off_norm,
            });
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src).into_owned();
        // sign convention: largest-magnitude component positive (first on ties)
        let mut pivot = 0;
        for k in 1..n {
            if col[k].abs() > col[pivot].abs() {
                pivot = k;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        vectors.set_column(dst, &col);
    }
    Ok((eigenvalues, vectors))
}

/// One Jacobi rotation zeroing `a[p][q]`; keeps `a` exactly symmetric.
fn rotate(a: &mut DMatrix<f64>, v: &mut DMatrix<f64>, p: usize, q: usize) {
    let apq = a[(p, q)];
    if apq == 0.0 {
        return;
    }
    let app = a[(p, p)];
    let aqq = a[(q, q)];
    let theta = (aqq - app) / (2.0 * apq);
    let t = if theta.abs() > 1e150 {
        0.5 / theta
    } else {
        let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
        sign / (theta.abs() + (theta * theta + 1.0).sqrt())
    };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = a.nrows();

    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        let new_kp = c * akp - s * akq;
        let new_kq = s * akp + c * akq;
        a[(k, p)] = new_kp;
        a[(p, k)] = new_kp;
        a[(k, q)] = new_kq;
        a[(q, k)] = new_kq;
    }
    a[(p, p)] = app - t * apq;
    a[(q, q)] = aqq + t * apq;
    a[(p, q)] = 0.0;
    a[(q, p)] = 0.0;

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}
