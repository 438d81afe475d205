//! Spectral convolutional filters.
//!
//! A [`PolyFilter`] has frequency response `h(λ) = Σ_k h_k λ^k`. An
//! [`FdtFilterSpec`] is a frequency-difference-threshold filter: it keeps an
//! individual response on every α-separated eigenvalue and one constant per
//! α-close group, so on each group it acts as `C_n P_n` with `P_n` the
//! projector onto the group's eigenspace.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::partition::SpectrumPartition;
use crate::spectral::{EigenSystem, Signal};

/// Default grid size for Lipschitz estimation.
pub const DEFAULT_VALIDATION_SAMPLES: usize = 10_000;

/// Anything that acts diagonally in an operator's eigenbasis.
pub trait SpectralFilter {
    /// Response on eigenpair `index` with eigenvalue `lambda`.
    fn response_at(&self, index: usize, lambda: f64) -> f64;

    fn responses(&self, eig: &EigenSystem) -> Vec<f64> {
        eig.eigenvalues()
            .iter()
            .enumerate()
            .map(|(i, &l)| self.response_at(i, l))
            .collect()
    }

    fn apply(&self, eig: &EigenSystem, f: &Signal) -> Result<Signal> {
        eig.spectral_apply(&self.responses(eig), f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyFilter {
    coeffs: Vec<f64>,
}

impl PolyFilter {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::invalid("polynomial filter needs at least one tap"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("filter coefficients must be finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn taps(&self) -> usize {
        self.coeffs.len()
    }

    pub fn response(&self, lambda: f64) -> f64 {
        frequency_response(&self.coeffs, lambda)
    }
}

impl SpectralFilter for PolyFilter {
    fn response_at(&self, _index: usize, lambda: f64) -> f64 {
        self.response(lambda)
    }
}

/// Horner evaluation of `Σ_k coeffs[k] λ^k`.
pub fn frequency_response(coeffs: &[f64], lambda: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * lambda + c)
}

pub fn poly_filter_apply(filter: &PolyFilter, eig: &EigenSystem, f: &Signal) -> Result<Signal> {
    filter.apply(eig, f)
}

/// Closed-form scalar responses used to build FDT filters and in experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Response {
    /// `h(λ) = value`
    Constant { value: f64 },
    /// `h(λ) = Σ_k coeffs[k] λ^k`
    Polynomial { coeffs: Vec<f64> },
    /// `h(λ) = gain · exp(−tau λ)`
    Heat { gain: f64, tau: f64 },
    /// `h(λ) = gain · λ / (knee + |λ|)`
    Rational { gain: f64, knee: f64 },
    /// `h(λ) = gain · cos(freq λ + phase)`
    Cosine { gain: f64, freq: f64, phase: f64 },
}

impl Response {
    pub fn eval(&self, lambda: f64) -> f64 {
        match self {
            Response::Constant { value } => *value,
            Response::Polynomial { coeffs } => frequency_response(coeffs, lambda),
            Response::Heat { gain, tau } => gain * (-tau * lambda).exp(),
            Response::Rational { gain, knee } => gain * lambda / (knee + lambda.abs()),
            Response::Cosine { gain, freq, phase } => gain * (freq * lambda + phase).cos(),
        }
    }

    /// A random non-amplifying response (|gain| ≤ 0.95) for nonnegative
    /// spectra, drawn from the heat, rational, cosine and constant families.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let gain = rng.random_range(-0.95..0.95);
        match rng.random_range(0..4) {
            0 => Response::Heat {
                gain,
                tau: rng.random_range(0.1..2.0),
            },
            1 => Response::Rational {
                gain,
                knee: rng.random_range(0.2..2.0),
            },
            2 => Response::Cosine {
                gain,
                freq: rng.random_range(0.2..3.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            },
            _ => Response::Constant { value: gain },
        }
    }
}

/// α-FDT filter: individual responses on `𝒟`, one constant per group of `𝒩`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdtFilterSpec {
    partition: SpectrumPartition,
    singleton_responses: BTreeMap<usize, f64>,
    group_constants: Vec<f64>,
}

impl FdtFilterSpec {
    /// Validates coverage of every singleton and group and that all values are
    /// non-amplifying (`|·| < 1`).
    pub fn new(
        partition: SpectrumPartition,
        singleton_responses: BTreeMap<usize, f64>,
        group_constants: Vec<f64>,
    ) -> Result<Self> {
        if group_constants.len() != partition.n_count() {
            return Err(Error::invalid(format!(
                "{} group constants for {} groups",
                group_constants.len(),
                partition.n_count()
            )));
        }
        let keys: Vec<usize> = singleton_responses.keys().copied().collect();
        if keys != partition.singletons() {
            return Err(Error::invalid(
                "singleton responses must cover exactly the separated eigenvalues",
            ));
        }
        let max_abs = singleton_responses
            .values()
            .chain(&group_constants)
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        if !max_abs.is_finite() {
            return Err(Error::invalid("FDT responses must be finite"));
        }
        if max_abs >= 1.0 {
            return Err(Error::AmplifyingResponse { max_abs });
        }
        Ok(Self {
            partition,
            singleton_responses,
            group_constants,
        })
    }

    pub fn partition(&self) -> &SpectrumPartition {
        &self.partition
    }

    pub fn singleton_responses(&self) -> &BTreeMap<usize, f64> {
        &self.singleton_responses
    }

    pub fn group_constants(&self) -> &[f64] {
        &self.group_constants
    }

    /// Target value for eigen index `i`: its own response or its group constant.
    pub fn target(&self, i: usize) -> Option<f64> {
        if let Some(&r) = self.singleton_responses.get(&i) {
            return Some(r);
        }
        self.partition.group_of(i).map(|g| self.group_constants[g])
    }

    /// The same filter realized on a perturbed operator: groups keep their
    /// constants (same index sets), separated eigenvalues are re-evaluated at
    /// the new eigenvalues.
    pub fn rebind_singletons(
        &self,
        response: impl Fn(f64) -> f64,
        eigenvalues: &[f64],
    ) -> Result<Self> {
        ensure_dim(self.partition.len(), eigenvalues.len())?;
        let singles = self
            .partition
            .singletons()
            .iter()
            .map(|&i| (i, response(eigenvalues[i])))
            .collect();
        Self::new(
            self.partition.clone(),
            singles,
            self.group_constants.clone(),
        )
    }

    fn check_eig(&self, eig: &EigenSystem) -> Result<()> {
        if self.partition.len() != eig.dim() {
            return Err(Error::invalid(format!(
                "partition covers {} eigenvalues but the eigensystem has {}",
                self.partition.len(),
                eig.dim()
            )));
        }
        Ok(())
    }
}

impl SpectralFilter for FdtFilterSpec {
    fn response_at(&self, index: usize, _lambda: f64) -> f64 {
        self.target(index).unwrap_or(0.0)
    }
}

/// `Σ_{i∈𝒟} h(λ_i)⟨f,φ_i⟩φ_i + Σ_n C_n P_n f`.
pub fn fdt_filter_apply(spec: &FdtFilterSpec, eig: &EigenSystem, f: &Signal) -> Result<Signal> {
    spec.check_eig(eig)?;
    spec.apply(eig, f)
}

/// Build an FDT filter from a scalar response: singleton responses are
/// `response(λ_i)`, each group constant is the response at the midpoint of the
/// group's eigenvalue interval.
pub fn build_fdt_spec(
    response: impl Fn(f64) -> f64,
    partition: &SpectrumPartition,
    eigenvalues: &[f64],
) -> Result<FdtFilterSpec> {
    ensure_dim(partition.len(), eigenvalues.len())?;
    let max_abs = eigenvalues
        .iter()
        .fold(0.0_f64, |m, &l| m.max(response(l).abs()));
    if !(max_abs < 1.0) {
        return Err(Error::AmplifyingResponse { max_abs });
    }
    let singles = partition
        .singletons()
        .iter()
        .map(|&i| (i, response(eigenvalues[i])))
        .collect();
    let constants = partition
        .groups()
        .iter()
        .map(|g| response(0.5 * (eigenvalues[g.start] + eigenvalues[g.end - 1])))
        .collect();
    FdtFilterSpec::new(partition.clone(), singles, constants)
}

/// Least-squares polynomial of degree `degree` through the FDT targets
/// `(λ_i, target_i)`. Columns are scaled by powers of `max |λ|`.
pub fn fit_polynomial_to_fdt(
    spec: &FdtFilterSpec,
    eigenvalues: &[f64],
    degree: usize,
) -> Result<PolyFilter> {
    ensure_dim(spec.partition().len(), eigenvalues.len())?;
    let targets: Vec<f64> = (0..eigenvalues.len())
        .map(|i| spec.target(i).unwrap_or(0.0))
        .collect();
    fit_polynomial(eigenvalues, &targets, degree)
}

/// Least-squares fit of `Σ_k c_k λ^k` to `(lambdas[i], targets[i])`.
pub fn fit_polynomial(lambdas: &[f64], targets: &[f64], degree: usize) -> Result<PolyFilter> {
    ensure_dim(lambdas.len(), targets.len())?;
    let scale = lambdas.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut distinct: Vec<f64> = lambdas.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * scale);
    if degree + 1 > distinct.len() {
        return Err(Error::DegenerateFit(format!(
            "degree {degree} needs {} distinct points, have {}",
            degree + 1,
            distinct.len()
        )));
    }
    let cols = degree + 1;
    let design = DMatrix::from_fn(lambdas.len(), cols, |i, k| {
        (lambdas[i] / scale).powi(k as i32)
    });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::DegenerateFit(format!(
            "design matrix is rank deficient (condition {:e})",
            smax / smin
        )));
    }
    let rhs = DVector::from_column_slice(targets);
    let scaled = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let coeffs = scaled
        .iter()
        .enumerate()
        .map(|(k, c)| c / scale.powi(k as i32))
        .collect();
    PolyFilter::new(coeffs)
}

/// Root-mean-square residual of `filter` against the FDT targets.
pub fn fit_residual(spec: &FdtFilterSpec, eigenvalues: &[f64], filter: &PolyFilter) -> f64 {
    let n = eigenvalues.len().max(1) as f64;
    let ss: f64 = eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let r = filter.response(l) - spec.target(i).unwrap_or(0.0);
            r * r
        })
        .sum();
    (ss / n).sqrt()
}

/// Grid check of the Lipschitz / non-amplifying assumption. The Lipschitz
/// constant is an estimate from adjacent-sample slopes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterValidationReport {
    pub lipschitz_estimate: f64,
    pub max_abs_response: f64,
    pub passes: bool,
}

pub fn validate_assumption(
    response: impl Fn(f64) -> f64,
    lambda_min: f64,
    lambda_max: f64,
    samples: usize,
) -> Result<FilterValidationReport> {
    if samples < 2 {
        return Err(Error::invalid("validation needs at least 2 samples"));
    }
    if !(lambda_min <= lambda_max) || !lambda_min.is_finite() || !lambda_max.is_finite() {
        return Err(Error::invalid(format!(
            "invalid validation interval [{lambda_min}, {lambda_max}]"
        )));
    }
    let step = (lambda_max - lambda_min) / (samples - 1) as f64;
    let mut lipschitz = 0.0_f64;
    let mut max_abs = 0.0_f64;
    let mut prev = response(lambda_min);
    max_abs = max_abs.max(prev.abs());
    for s in 1..samples {
        let lam = lambda_min + step * s as f64;
        let h = response(lam);
        if step > 0.0 {
            lipschitz = lipschitz.max((h - prev).abs() / step);
        }
        max_abs = max_abs.max(h.abs());
        prev = h;
    }
    let finite = lipschitz.is_finite() && max_abs.is_finite();
    Ok(FilterValidationReport {
        lipschitz_estimate: lipschitz,
        max_abs_response: max_abs,
        passes: finite && max_abs < 1.0,
    })
}
