//! Spectral convolutional filters and neural networks over symmetric
//! Laplacian operators, with tools to check their stability under additive
//! operator perturbations.
//!
//! The crate is organised bottom-up:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`spectral`] | dense symmetric operators, Jacobi eigensolver, graph/cycle/torus Laplacians |
//! | [`partition`] | α-separated spectrum partition, Weyl-law helpers |
//! | [`filters`] | polynomial filters, frequency-difference-threshold (FDT) filters, response validation |
//! | [`mnn`] | layered spectral networks: forward pass and reverse-mode gradient |
//! | [`perturbation`] | perturbation generators, Weyl / Davis-Kahan checks, stability bounds and trials |
//! | [`wireless`] | ad-hoc wireless power allocation with a spectral GNN policy |
//! | [`io`] | CSV / JSON matrix and vector readers and writers |
//! | [`seed`] | labelled sub-seed derivation from one master seed |
//!
//! ```
//! use fdtnet::partition::partition_spectrum;
//! use fdtnet::spectral::{build_cycle_laplacian, sym_eig};
//!
//! let lap = build_cycle_laplacian(8).unwrap();
//! let eig = sym_eig(&lap).unwrap();
//! let part = partition_spectrum(eig.eigenvalues(), 0.1).unwrap();
//! // the cycle spectrum is doubly degenerate except at 0 and 4
//! assert_eq!(part.d_count(), 2);
//! assert_eq!(part.n_count(), 3);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod filters;
pub mod io;
pub mod mnn;
pub mod partition;
pub mod perturbation;
pub mod seed;
pub mod spectral;
pub mod wireless;

pub use error::{Error, Result};
pub use spectral::{EigenSystem, Signal, SymmetricOperator};

/// Crate version embedded in every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
