use nalgebra::DMatrix;

use super::{max_asymmetry, SymmetricOperator, ASYMMETRY_WARN};
use crate::error::{Error, Result};

/// Combinatorial Laplacian `L = diag(W·1) − W` of a weighted undirected graph.
///
/// Weights must be square, finite, nonnegative, with zero diagonal and
/// symmetric up to [`ASYMMETRY_WARN`] (tiny asymmetry is averaged out).
pub fn build_graph_laplacian(weights: &DMatrix<f64>) -> Result<SymmetricOperator> {
    let n = weights.nrows();
    if n == 0 || weights.ncols() != n {
        return Err(Error::invalid("weight matrix must be square and non-empty"));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("weight matrix has non-finite entries"));
    }
    if weights.iter().any(|&w| w < 0.0) {
        return Err(Error::invalid("weight matrix has negative entries"));
    }
    if (0..n).any(|i| weights[(i, i)] != 0.0) {
        return Err(Error::invalid("weight matrix must have a zero diagonal"));
    }
    let asym = max_asymmetry(weights);
    if asym > ASYMMETRY_WARN {
        return Err(Error::invalid(format!(
            "weight matrix is not symmetric (max asymmetry {asym:e})"
        )));
    }
    let w = (weights + weights.transpose()) * 0.5;
    let mut lap = -w.clone();
    for i in 0..n {
        lap[(i, i)] = w.row(i).sum();
    }
    SymmetricOperator::new(lap)
}

/// Unit-weight cycle graph on `n ≥ 3` nodes; spectrum `2 − 2cos(2πk/n)`.
pub fn build_cycle_laplacian(n: usize) -> Result<SymmetricOperator> {
    if n < 3 {
        return Err(Error::invalid(format!("cycle needs n >= 3, got {n}")));
    }
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        let j = (i + 1) % n;
        w[(i, j)] = 1.0;
        w[(j, i)] = 1.0;
    }
    build_graph_laplacian(&w)
}

/// Periodic `nx × ny` grid; node `(i, j)` has index `i·ny + j`.
pub fn build_torus_laplacian(nx: usize, ny: usize) -> Result<SymmetricOperator> {
    if nx < 3 || ny < 3 {
        return Err(Error::invalid(format!(
            "torus needs nx, ny >= 3, got {nx}x{ny}"
        )));
    }
    let n = nx * ny;
    let idx = |i: usize, j: usize| (i % nx) * ny + (j % ny);
    let mut w = DMatrix::zeros(n, n);
    for i in 0..nx {
        for j in 0..ny {
            let a = idx(i, j);
            for b in [idx(i + 1, j), idx(i, j + 1)] {
                w[(a, b)] = 1.0;
                w[(b, a)] = 1.0;
            }
        }
    }
    build_graph_laplacian(&w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::sym_eig;
    use std::f64::consts::PI;

    fn sorted(mut v: Vec<f64>) -> Vec<f64> {
        v.sort_by(f64::total_cmp);
        v
    }

    fn cycle_spectrum(n: usize) -> Vec<f64> {
        sorted(
            (0..n)
                .map(|k| 2.0 - 2.0 * (2.0 * PI * k as f64 / n as f64).cos())
                .collect(),
        )
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn single_edge_and_path() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let l = build_graph_laplacian(&w).unwrap();
        assert_eq!(l.to_rows(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);

        let w = DMatrix::from_row_slice(3, 3, &[0., 1., 0., 1., 0., 1., 0., 1., 0.]);
        let l = build_graph_laplacian(&w).unwrap();
        assert_eq!(
            l.to_rows(),
            vec![vec![1., -1., 0.], vec![-1., 2., -1.], vec![0., -1., 1.]]
        );
    }

    #[test]
    fn rejects_bad_weights() {
        let neg = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]);
        assert!(build_graph_laplacian(&neg).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(build_graph_laplacian(&asym).is_err());
        let diag = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(build_graph_laplacian(&diag).is_err());
    }

    #[test]
    fn cycle_matches_closed_form() {
        for n in [3, 4, 9, 16] {
            let eig = sym_eig(&build_cycle_laplacian(n).unwrap()).unwrap();
            assert_close(eig.eigenvalues(), &cycle_spectrum(n), 1e-10);
        }
        let eig = sym_eig(&build_cycle_laplacian(4).unwrap()).unwrap();
        assert_close(eig.eigenvalues(), &[0.0, 2.0, 2.0, 4.0], 1e-12);
        let eig = sym_eig(&build_cycle_laplacian(3).unwrap()).unwrap();
        assert_close(eig.eigenvalues(), &[0.0, 3.0, 3.0], 1e-12);
        assert!(build_cycle_laplacian(2).is_err());
    }

    #[test]
    fn torus_spectrum_is_cartesian_sum() {
        for (nx, ny) in [(3, 3), (3, 4), (5, 4)] {
            let l = build_torus_laplacian(nx, ny).unwrap();
            assert_eq!(l.dim(), nx * ny);
            let a = cycle_spectrum(nx);
            let b = cycle_spectrum(ny);
            let expected = sorted(
                a.iter()
                    .flat_map(|x| b.iter().map(move |y| x + y))
                    .collect(),
            );
            let eig = sym_eig(&l).unwrap();
            assert_close(eig.eigenvalues(), &expected, 1e-10);
            let ones = nalgebra::DVector::from_element(nx * ny, 1.0);
            assert!(l.apply(&ones).unwrap().amax() < 1e-14);
        }
        assert!(build_torus_laplacian(2, 5).is_err());
    }
}
