//! Dense symmetric operators and their eigendecompositions.
//!
//! Everything downstream (filters, networks, stability checks) works on an
//! [`EigenSystem`] computed once per operator; filters are applied on the
//! spectral path `Φ diag(h(λ)) Φᵀ f` rather than through matrix powers.

mod jacobi;
mod laplacian;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};

pub use jacobi::{MAX_SWEEPS, OFF_DIAGONAL_TOL};
pub use laplacian::{build_cycle_laplacian, build_graph_laplacian, build_torus_laplacian};

/// Node signal: one real value per node of the operator.
pub type Signal = DVector<f64>;

/// Asymmetry above which ingestion logs a warning before symmetrizing.
pub const ASYMMETRY_WARN: f64 = 1e-9;

/// A dense real symmetric matrix. Symmetry is exact: inputs are replaced by
/// `(M + Mᵀ)/2` on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOperator {
    entries: DMatrix<f64>,
}

impl SymmetricOperator {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 {
            return Err(Error::invalid("operator must have dimension >= 1"));
        }
        if entries.ncols() != n {
            return Err(Error::invalid(format!(
                "operator must be square, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("operator has non-finite entries"));
        }
        let asym = max_asymmetry(&entries);
        if asym > ASYMMETRY_WARN {
            log::warn!("symmetrizing input with max asymmetry {asym:e}");
        }
        let entries = if asym > 0.0 {
            (&entries + entries.transpose()) * 0.5
        } else {
            entries
        };
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("operator rows must all have length n"));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.entries
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }

    /// `self + other`, the absolute perturbation `ℒ' = ℒ + A`.
    pub fn add(&self, other: &SymmetricOperator) -> Result<Self> {
        ensure_dim(self.dim(), other.dim())?;
        Ok(Self {
            entries: &self.entries + &other.entries,
        })
    }

    pub fn sub(&self, other: &SymmetricOperator) -> Result<Self> {
        ensure_dim(self.dim(), other.dim())?;
        Ok(Self {
            entries: &self.entries - &other.entries,
        })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() {
            return Err(Error::invalid("scale factor must be finite"));
        }
        Ok(Self {
            entries: &self.entries * factor,
        })
    }

    pub fn apply(&self, f: &Signal) -> Result<Signal> {
        apply(self, f)
    }

    pub fn eig(&self) -> Result<EigenSystem> {
        sym_eig(self)
    }

    pub fn spectral_norm(&self) -> Result<f64> {
        spectral_norm(self)
    }
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Ascending eigenvalues with an orthonormal eigenvector matrix; column `i`
/// pairs with eigenvalue `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl EigenSystem {
    /// Assemble from parts, e.g. after replacing a degenerate block's basis.
    /// Checks ordering, shape and orthonormality (to 1e-8).
    pub fn from_parts(eigenvalues: Vec<f64>, eigenvectors: DMatrix<f64>) -> Result<Self> {
        let n = eigenvalues.len();
        if n == 0 {
            return Err(Error::invalid("empty eigensystem"));
        }
        if eigenvectors.nrows() != n || eigenvectors.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: eigenvectors.ncols(),
            });
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid("eigenvalues must be ascending"));
        }
        let gram = eigenvectors.transpose() * &eigenvectors;
        let dev = (gram - DMatrix::<f64>::identity(n, n)).amax();
        if dev > 1e-8 {
            return Err(Error::invalid(format!(
                "eigenvectors are not orthonormal (deviation {dev:e})"
            )));
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// Spectral coefficients `Φᵀ f`.
    pub fn analysis(&self, f: &Signal) -> Result<DVector<f64>> {
        ensure_dim(self.dim(), f.len())?;
        Ok(self.eigenvectors.tr_mul(f))
    }

    /// Signal from spectral coefficients, `Φ c`.
    pub fn synthesis(&self, coeffs: &DVector<f64>) -> Result<Signal> {
        ensure_dim(self.dim(), coeffs.len())?;
        Ok(&self.eigenvectors * coeffs)
    }

    /// `Φ diag(responses) Φᵀ f`.
    pub fn spectral_apply(&self, responses: &[f64], f: &Signal) -> Result<Signal> {
        ensure_dim(self.dim(), responses.len())?;
        let mut coeffs = self.analysis(f)?;
        for (c, r) in coeffs.iter_mut().zip(responses) {
            *c *= r;
        }
        self.synthesis(&coeffs)
    }

    /// Orthogonal projector onto `span{φ_i : i ∈ indices}`.
    pub fn projector(&self, indices: impl IntoIterator<Item = usize>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut p = DMatrix::zeros(n, n);
        for i in indices {
            if i >= n {
                return Err(Error::invalid(format!(
                    "eigen index {i} out of range 0..{n}"
                )));
            }
            let v = self.eigenvectors.column(i);
            p.ger(1.0, &v, &v, 1.0);
        }
        Ok(p)
    }

    /// `Φ diag(λ) Φᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.eigenvectors[(i, j)] * self.eigenvalues[j]
        });
        scaled * self.eigenvectors.transpose()
    }
}

/// Eigendecomposition by cyclic Jacobi rotations; deterministic for identical
/// input. Eigenvector signs are fixed so the largest-magnitude component of
/// each column is positive.
pub fn sym_eig(op: &SymmetricOperator) -> Result<EigenSystem> {
    let (eigenvalues, eigenvectors) = jacobi::jacobi_eigen(op.matrix())?;
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors,
    })
}

/// Largest absolute eigenvalue.
pub fn spectral_norm(op: &SymmetricOperator) -> Result<f64> {
    let eig = sym_eig(op)?;
    Ok(eig
        .eigenvalues()
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs())))
}

pub fn apply(op: &SymmetricOperator, f: &Signal) -> Result<Signal> {
    ensure_dim(op.dim(), f.len())?;
    Ok(op.matrix() * f)
}
