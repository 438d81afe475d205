//! Additive operator perturbations `ℒ' = ℒ + A` and the stability machinery
//! built on them: eigenvalue (Weyl) and eigenspace (Davis-Kahan) checks,
//! closed-form stability bounds for FDT filters and networks, and seeded
//! randomized trials comparing empirical output differences to those bounds.

use std::f64::consts::PI;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::filters::{
    build_fdt_spec, fdt_filter_apply, validate_assumption, FdtFilterSpec, Response,
    DEFAULT_VALIDATION_SAMPLES,
};
use crate::mnn::{forward_bank, Activation, FilterBank};
use crate::partition::{partition_spectrum, SpectrumPartition};
use crate::seed::{derive_seed, rng_for, Rng as SeededRng};
use crate::spectral::{sym_eig, Signal, SymmetricOperator};

/// Numerical slack on every "bound holds" comparison.
pub const HOLD_SLACK: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationKind {
    #[default]
    RandomSymmetric,
    Lognormal {
        mu: f64,
        sigma: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default)]
    pub kind: PerturbationKind,
    pub epsilon: f64,
    pub seed: u64,
}

impl PerturbationConfig {
    pub fn generate(&self, n: usize) -> Result<SymmetricOperator> {
        match self.kind {
            PerturbationKind::RandomSymmetric => {
                random_symmetric_perturbation(n, self.epsilon, self.seed)
            }
            PerturbationKind::Lognormal { mu, sigma } => {
                lognormal_perturbation(n, mu, sigma, self.epsilon, self.seed)
            }
        }
    }
}

fn check_generator_args(n: usize, epsilon: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("perturbation dimension must be >= 1"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::invalid(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

fn rescale(direction: DMatrix<f64>, epsilon: f64) -> Result<SymmetricOperator> {
    let op = SymmetricOperator::new(direction)?;
    let norm = op.spectral_norm()?;
    if norm == 0.0 {
        return Err(Error::invalid("perturbation direction is zero"));
    }
    op.scaled(epsilon / norm)
}

/// `A = (G + Gᵀ)/2` with standard normal `G`, rescaled so `‖A‖ = ε`.
pub fn random_symmetric_perturbation(
    n: usize,
    epsilon: f64,
    seed: u64,
) -> Result<SymmetricOperator> {
    check_generator_args(n, epsilon)?;
    let mut rng = rng_for(seed, "perturbation/random_symmetric");
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    rescale((&g + g.transpose()) * 0.5, epsilon)
}

/// Entrywise lognormal(μ, σ) matrix, symmetrized and rescaled so `‖A‖ = ε`.
pub fn lognormal_perturbation(
    n: usize,
    mu: f64,
    sigma: f64,
    epsilon: f64,
    seed: u64,
) -> Result<SymmetricOperator> {
    check_generator_args(n, epsilon)?;
    if !(sigma >= 0.0) || !mu.is_finite() || !sigma.is_finite() {
        return Err(Error::invalid("lognormal needs finite mu and sigma >= 0"));
    }
    let mut rng = rng_for(seed, "perturbation/lognormal");
    let g = DMatrix::from_fn(n, n, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        (mu + sigma * z).exp()
    });
    rescale((&g + g.transpose()) * 0.5, epsilon)
}

// ---------------------------------------------------------------------------
// Lemma checks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub max_shift: f64,
    pub norm_a: f64,
    pub holds: bool,
}

/// Largest index-wise eigenvalue shift between `ℒ` and `ℒ + A` against `‖A‖`.
pub fn weyl_check(op: &SymmetricOperator, a: &SymmetricOperator) -> Result<WeylReport> {
    ensure_dim(op.dim(), a.dim())?;
    let before = sym_eig(op)?;
    let after = sym_eig(&op.add(a)?)?;
    let max_shift = before
        .eigenvalues()
        .iter()
        .zip(after.eigenvalues())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let norm_a = a.spectral_norm()?;
    Ok(WeylReport {
        max_shift,
        norm_a,
        holds: max_shift <= norm_a + HOLD_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DavisKahanReport {
    pub projector_diff: f64,
    pub gap: f64,
    pub norm_a: f64,
    pub bound: f64,
    pub holds: bool,
}

fn min_cross_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .flat_map(|x| b.iter().map(move |y| (x - y).abs()))
        .fold(f64::INFINITY, f64::min)
}

/// Compares the eigenspace projectors of index range `cluster` for `ℒ` and
/// `ℒ + A` with `(π/2)‖A‖/d`, where `d` is the smaller of the distances
/// cluster(ℒ)↔rest(ℒ+A) and rest(ℒ)↔cluster(ℒ+A).
pub fn davis_kahan_check(
    op: &SymmetricOperator,
    a: &SymmetricOperator,
    cluster: Range<usize>,
) -> Result<DavisKahanReport> {
    ensure_dim(op.dim(), a.dim())?;
    let n = op.dim();
    if cluster.start >= cluster.end || cluster.end > n {
        return Err(Error::invalid(format!(
            "cluster {cluster:?} is not a range inside 0..{n}"
        )));
    }
    if cluster.len() == n {
        return Err(Error::invalid(
            "cluster must leave part of the spectrum outside it",
        ));
    }
    let before = sym_eig(op)?;
    let after = sym_eig(&op.add(a)?)?;
    let split = |vals: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let inside = vals[cluster.clone()].to_vec();
        let outside = vals
            .iter()
            .enumerate()
            .filter(|(i, _)| !cluster.contains(i))
            .map(|(_, &v)| v)
            .collect();
        (inside, outside)
    };
    let (sigma, big_sigma) = split(before.eigenvalues());
    let (omega, big_omega) = split(after.eigenvalues());
    let gap = min_cross_distance(&sigma, &big_omega).min(min_cross_distance(&big_sigma, &omega));
    if !(gap > 0.0) {
        return Err(Error::IllSeparatedCluster { gap });
    }
    let p = before.projector(cluster.clone())?;
    let p_prime = after.projector(cluster)?;
    let projector_diff = SymmetricOperator::new(p - p_prime)?.spectral_norm()?;
    let norm_a = a.spectral_norm()?;
    let bound = PI / 2.0 * norm_a / gap;
    Ok(DavisKahanReport {
        projector_diff,
        gap,
        norm_a,
        bound,
        holds: projector_diff <= bound + HOLD_SLACK,
    })
}

// ---------------------------------------------------------------------------
// Closed-form bounds
// ---------------------------------------------------------------------------

fn check_bound_args(alpha: f64, epsilon: f64, b: f64, f_norm: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::invalid(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if !(epsilon >= 0.0) || !(b >= 0.0) || !(f_norm >= 0.0) {
        return Err(Error::invalid("epsilon, B and ‖f‖ must be nonnegative"));
    }
    if epsilon >= alpha {
        return Err(Error::UnboundedBound { epsilon, alpha });
    }
    Ok(())
}

/// `π(D+N)/(α−ε)·ε‖f‖ + B·D·ε‖f‖`.
pub fn filter_stability_bound(
    d_count: usize,
    n_count: usize,
    alpha: f64,
    epsilon: f64,
    b: f64,
    f_norm: f64,
) -> Result<f64> {
    check_bound_args(alpha, epsilon, b, f_norm)?;
    let per_unit = PI * (d_count + n_count) as f64 / (alpha - epsilon) + b * d_count as f64;
    Ok(per_unit * epsilon * f_norm)
}

/// `L·F^{L−1}·(π(D+N)/(α−ε) + B·D)·ε‖f‖`.
#[allow(clippy::too_many_arguments)]
pub fn nn_stability_bound(
    layers: usize,
    width: usize,
    d_count: usize,
    n_count: usize,
    alpha: f64,
    epsilon: f64,
    b: f64,
    f_norm: f64,
) -> Result<f64> {
    if layers == 0 || width == 0 {
        return Err(Error::invalid("layers and width must be >= 1"));
    }
    let filter = filter_stability_bound(d_count, n_count, alpha, epsilon, b, f_norm)?;
    Ok(layers as f64 * (width as f64).powi(layers as i32 - 1) * filter)
}

/// One point of the stability/discriminability trade-off: the filter bound
/// evaluated with the `(D, N)` of the partition at each `alpha > epsilon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub alpha: f64,
    pub d_count: usize,
    pub n_count: usize,
    pub bound: f64,
}

pub fn tradeoff_curve(
    eigenvalues: &[f64],
    epsilon: f64,
    alphas: &[f64],
    b: f64,
    f_norm: f64,
) -> Result<Vec<TradeoffPoint>> {
    alphas
        .iter()
        .filter(|&&a| a > epsilon)
        .map(|&alpha| {
            let p = partition_spectrum(eigenvalues, alpha)?;
            Ok(TradeoffPoint {
                alpha,
                d_count: p.d_count(),
                n_count: p.n_count(),
                bound: filter_stability_bound(p.d_count(), p.n_count(), alpha, epsilon, b, f_norm)?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Single trials
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub dimension: usize,
    pub layers: usize,
    pub width: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub d_count: usize,
    pub n_count: usize,
    pub b_lipschitz: f64,
    pub signal_norm: f64,
    pub empirical_diff: f64,
    pub theoretical_bound: f64,
    pub holds: bool,
}

impl StabilityReport {
    pub fn ratio(&self) -> f64 {
        if self.theoretical_bound > 0.0 {
            self.empirical_diff / self.theoretical_bound
        } else {
            0.0
        }
    }
}

/// Perturbs `op`, realizes the same FDT filter on both operators and
/// compares the output difference with the filter bound.
///
/// The perturbed filter reuses the index partition of `op` (groups keep
/// their constants, separated eigenvalues are re-evaluated at the perturbed
/// eigenvalues).
pub fn run_filter_stability_trial(
    op: &SymmetricOperator,
    f: &Signal,
    response: &Response,
    alpha: f64,
    perturbation: &PerturbationConfig,
) -> Result<StabilityReport> {
    ensure_dim(op.dim(), f.len())?;
    let ctx = TrialContext::new(op, alpha, perturbation)?;
    let h = |l: f64| response.eval(l);
    let b = ctx.lipschitz(&h)?;
    let spec = build_fdt_spec(h, &ctx.partition, ctx.eig.eigenvalues())?;
    let spec_prime = spec.rebind_singletons(h, ctx.eig_prime.eigenvalues())?;
    let y = fdt_filter_apply(&spec, &ctx.eig, f)?;
    let y_prime = fdt_filter_apply(&spec_prime, &ctx.eig_prime, f)?;
    let empirical_diff = (y - y_prime).norm();
    let signal_norm = f.norm();
    let theoretical_bound = filter_stability_bound(
        ctx.partition.d_count(),
        ctx.partition.n_count(),
        alpha,
        ctx.epsilon,
        b,
        signal_norm,
    )?;
    Ok(StabilityReport {
        dimension: op.dim(),
        layers: 1,
        width: 1,
        epsilon: ctx.epsilon,
        alpha,
        d_count: ctx.partition.d_count(),
        n_count: ctx.partition.n_count(),
        b_lipschitz: b,
        signal_norm,
        empirical_diff,
        theoretical_bound,
        holds: empirical_diff <= theoretical_bound + HOLD_SLACK,
    })
}

struct TrialContext {
    eig: crate::spectral::EigenSystem,
    eig_prime: crate::spectral::EigenSystem,
    partition: SpectrumPartition,
    epsilon: f64,
}

impl TrialContext {
    fn new(op: &SymmetricOperator, alpha: f64, perturbation: &PerturbationConfig) -> Result<Self> {
        if perturbation.epsilon >= alpha {
            return Err(Error::UnboundedBound {
                epsilon: perturbation.epsilon,
                alpha,
            });
        }
        let a = perturbation.generate(op.dim())?;
        let eig = sym_eig(op)?;
        let eig_prime = sym_eig(&op.add(&a)?)?;
        let partition = partition_spectrum(eig.eigenvalues(), alpha)?;
        Ok(Self {
            eig,
            eig_prime,
            partition,
            epsilon: a.spectral_norm()?,
        })
    }

    fn spectral_range(&self) -> (f64, f64) {
        let (a, b) = (self.eig.eigenvalues(), self.eig_prime.eigenvalues());
        (a[0].min(b[0]), a[a.len() - 1].max(b[b.len() - 1]))
    }

    /// Lipschitz estimate over both spectra; refuses amplifying responses.
    fn lipschitz(&self, h: &dyn Fn(f64) -> f64) -> Result<f64> {
        let (lo, hi) = self.spectral_range();
        let report = validate_assumption(h, lo, hi, DEFAULT_VALIDATION_SAMPLES)?;
        if !report.passes {
            return Err(Error::AmplifyingResponse {
                max_abs: report.max_abs_response,
            });
        }
        Ok(report.lipschitz_estimate)
    }
}

/// A network whose every filter is an FDT filter built from a scalar
/// response; `responses[l][p][q]` maps input feature `q` to output `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdtNetwork {
    pub features: Vec<usize>,
    pub activation: Activation,
    pub responses: Vec<Vec<Vec<Response>>>,
}

impl FdtNetwork {
    /// `L` layers with `F_0 = F_L = 1` and hidden width `F`, random responses.
    pub fn random<R: Rng + ?Sized>(
        layers: usize,
        width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if layers == 0 || width == 0 {
            return Err(Error::invalid("layers and width must be >= 1"));
        }
        let mut features = vec![width; layers + 1];
        features[0] = 1;
        features[layers] = 1;
        let responses = features
            .windows(2)
            .map(|w| {
                (0..w[1])
                    .map(|_| (0..w[0]).map(|_| Response::random(rng)).collect())
                    .collect()
            })
            .collect();
        Ok(Self {
            features,
            activation,
            responses,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.features.len() >= 2
            && self.responses.len() == self.features.len() - 1
            && self.responses.iter().enumerate().all(|(l, layer)| {
                layer.len() == self.features[l + 1]
                    && layer.iter().all(|out| out.len() == self.features[l])
            });
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "FDT network responses do not match its feature counts",
            ))
        }
    }

    pub fn layers(&self) -> usize {
        self.features.len() - 1
    }

    /// Hidden width `F` (the widest layer).
    pub fn width(&self) -> usize {
        self.features.iter().copied().max().unwrap_or(1)
    }

    fn realize(
        &self,
        partition: &SpectrumPartition,
        eigenvalues: &[f64],
        perturbed: Option<&[f64]>,
    ) -> Result<FdtBank> {
        let specs = self
            .responses
            .iter()
            .map(|layer| {
                layer
                    .iter()
                    .map(|out| {
                        out.iter()
                            .map(|r| {
                                let h = |l: f64| r.eval(l);
                                let spec = build_fdt_spec(h, partition, eigenvalues)?;
                                match perturbed {
                                    Some(vals) => spec.rebind_singletons(h, vals),
                                    None => Ok(spec),
                                }
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FdtBank {
            features: self.features.clone(),
            activation: self.activation,
            specs,
        })
    }
}

/// A filter bank of realized FDT filters.
#[derive(Debug, Clone)]
pub struct FdtBank {
    features: Vec<usize>,
    activation: Activation,
    specs: Vec<Vec<Vec<FdtFilterSpec>>>,
}

impl FilterBank for FdtBank {
    fn features(&self) -> &[usize] {
        &self.features
    }

    fn activation(&self) -> Activation {
        self.activation
    }

    fn response(&self, layer: usize, out: usize, inp: usize, index: usize, _lambda: f64) -> f64 {
        self.specs[layer][out][inp].target(index).unwrap_or(0.0)
    }
}

/// Network analogue of [`run_filter_stability_trial`] (`F_0 = F_L = 1`).
pub fn run_nn_stability_trial(
    op: &SymmetricOperator,
    f: &Signal,
    network: &FdtNetwork,
    alpha: f64,
    perturbation: &PerturbationConfig,
) -> Result<StabilityReport> {
    ensure_dim(op.dim(), f.len())?;
    network.validate()?;
    if network.features[0] != 1 || network.features[network.layers()] != 1 {
        return Err(Error::invalid(
            "network must have one input and one output feature",
        ));
    }
    let ctx = TrialContext::new(op, alpha, perturbation)?;
    let mut b = 0.0_f64;
    for r in network.responses.iter().flatten().flatten() {
        b = b.max(ctx.lipschitz(&|l| r.eval(l))?);
    }
    let bank = network.realize(&ctx.partition, ctx.eig.eigenvalues(), None)?;
    let bank_prime = network.realize(
        &ctx.partition,
        ctx.eig.eigenvalues(),
        Some(ctx.eig_prime.eigenvalues()),
    )?;
    let input = [f.clone()];
    let y = forward_bank(&bank, &ctx.eig, &input)?;
    let y_prime = forward_bank(&bank_prime, &ctx.eig_prime, &input)?;
    let empirical_diff = (&y.output()[0] - &y_prime.output()[0]).norm();
    let signal_norm = f.norm();
    let layers = network.layers();
    let width = network.width();
    let theoretical_bound = nn_stability_bound(
        layers,
        width,
        ctx.partition.d_count(),
        ctx.partition.n_count(),
        alpha,
        ctx.epsilon,
        b,
        signal_norm,
    )?;
    Ok(StabilityReport {
        dimension: op.dim(),
        layers,
        width,
        epsilon: ctx.epsilon,
        alpha,
        d_count: ctx.partition.d_count(),
        n_count: ctx.partition.n_count(),
        b_lipschitz: b,
        signal_norm,
        empirical_diff,
        theoretical_bound,
        holds: empirical_diff <= theoretical_bound + HOLD_SLACK,
    })
}

// ---------------------------------------------------------------------------
// Synthetic operators
// ---------------------------------------------------------------------------

/// Ascending spectrum of `n` values in randomly sized clusters: members lie
/// within `alpha/4` of their cluster's base, consecutive bases are at least
/// `3·alpha` apart, so partitioning at `alpha` recovers the clusters. The
/// smallest value is at least `alpha`, so perturbations of norm below
/// `alpha` keep the spectrum positive.
pub fn synthetic_clustered_spectrum<R: Rng + ?Sized>(
    n: usize,
    alpha: f64,
    rng: &mut R,
) -> Vec<f64> {
    let clusters = rng.random_range(1..=n.max(1));
    let mut sizes = vec![1usize; clusters];
    for _ in clusters..n {
        sizes[rng.random_range(0..clusters)] += 1;
    }
    let mut base = alpha + rng.random_range(0.0..alpha);
    let mut values = Vec::with_capacity(n);
    for (j, &size) in sizes.iter().enumerate() {
        if j > 0 {
            base += 3.0 * alpha + rng.random_range(0.0..2.0 * alpha);
        }
        let mut members: Vec<f64> = (0..size)
            .map(|_| base + rng.random_range(0.0..=alpha / 4.0))
            .collect();
        members.sort_by(f64::total_cmp);
        values.extend(members);
    }
    values
}

/// Haar-ish random orthogonal matrix from the QR factorization of a
/// Gaussian matrix (column signs fixed by `diag(R) > 0`).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `Q diag(spectrum) Qᵀ` for a random orthogonal `Q`.
pub fn operator_with_spectrum<R: Rng + ?Sized>(
    spectrum: &[f64],
    rng: &mut R,
) -> Result<SymmetricOperator> {
    let n = spectrum.len();
    let q = random_orthogonal(n, rng);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
    SymmetricOperator::new(&q * d * q.transpose())
}

fn random_signal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Signal {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

// ---------------------------------------------------------------------------
// Randomized trial batches
// ---------------------------------------------------------------------------

/// Runs `trial(i)` for `i in 0..count`; with the `parallel` feature trials run
/// on the rayon pool. Results are in index order either way.
pub fn map_trials<T, F>(count: usize, trial: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(trial).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(trial).collect()
    }
}

fn trial_rng(seed: u64, label: &str, index: usize) -> SeededRng {
    rng_for(seed, &format!("{label}/{index}"))
}

fn trial_seed(seed: u64, label: &str, index: usize) -> u64 {
    derive_seed(seed, &format!("{label}/{index}/perturbation"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeylTrialConfig {
    pub trials: usize,
    pub min_dimension: usize,
    pub max_dimension: usize,
    pub max_epsilon: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylTrialRecord {
    pub dimension: usize,
    pub epsilon: f64,
    pub report: WeylReport,
}

/// Random symmetric `ℒ` (entries of `(G+Gᵀ)/2`), random `ε ∈ (0, max_epsilon]`.
pub fn run_weyl_trials(config: &WeylTrialConfig) -> Result<Vec<WeylTrialRecord>> {
    if config.min_dimension == 0 || config.max_dimension < config.min_dimension {
        return Err(Error::invalid("need 1 <= min_dimension <= max_dimension"));
    }
    map_trials(config.trials, |i| {
        let mut rng = trial_rng(config.seed, "weyl", i);
        let n = rng.random_range(config.min_dimension..=config.max_dimension);
        let epsilon = config.max_epsilon * (1.0 - rng.random::<f64>());
        let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let op = SymmetricOperator::new((&g + g.transpose()) * 0.5)?;
        let a = random_symmetric_perturbation(n, epsilon, trial_seed(config.seed, "weyl", i))?;
        Ok(WeylTrialRecord {
            dimension: n,
            epsilon,
            report: weyl_check(&op, &a)?,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DavisKahanTrialConfig {
    pub trials: usize,
    pub min_dimension: usize,
    pub max_dimension: usize,
    pub epsilon: f64,
    /// Minimum inter-cluster gap in units of epsilon.
    pub gap_factor: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DavisKahanTrialRecord {
    pub dimension: usize,
    pub cluster_start: usize,
    pub cluster_end: usize,
    pub report: DavisKahanReport,
}

/// Synthetic clustered spectra whose inter-cluster gaps exceed
/// `gap_factor · ε`; one randomly chosen cluster is tracked per trial.
pub fn run_davis_kahan_trials(
    config: &DavisKahanTrialConfig,
) -> Result<Vec<DavisKahanTrialRecord>> {
    if config.min_dimension < 2 || config.max_dimension < config.min_dimension {
        return Err(Error::invalid("need 2 <= min_dimension <= max_dimension"));
    }
    // bases ≥ 3α apart with α/4 jitter leave gaps ≥ 2.75α
    let alpha = config.gap_factor * config.epsilon / 2.75;
    map_trials(config.trials, |i| {
        let mut rng = trial_rng(config.seed, "davis_kahan", i);
        let n = rng.random_range(config.min_dimension..=config.max_dimension);
        let mut spectrum = synthetic_clustered_spectrum(n, alpha, &mut rng);
        while partition_spectrum(&spectrum, alpha)?.clusters().len() < 2 {
            spectrum = synthetic_clustered_spectrum(n, alpha, &mut rng);
        }
        let clusters = partition_spectrum(&spectrum, alpha)?.clusters();
        let cluster = clusters[rng.random_range(0..clusters.len())].clone();
        let op = operator_with_spectrum(&spectrum, &mut rng)?;
        let a = random_symmetric_perturbation(
            n,
            config.epsilon,
            trial_seed(config.seed, "davis_kahan", i),
        )?;
        Ok(DavisKahanTrialRecord {
            dimension: n,
            cluster_start: cluster.start,
            cluster_end: cluster.end,
            report: davis_kahan_check(&op, &a, cluster)?,
        })
    })
}

fn default_min_dimension() -> usize {
    4
}

fn default_layers() -> Vec<usize> {
    vec![1, 2, 3]
}

fn default_widths() -> Vec<usize> {
    vec![1, 2, 4]
}

fn default_activation() -> Activation {
    Activation::Relu
}

/// Randomized stability trials on synthetic clustered operators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityTrialConfig {
    #[serde(default = "default_min_dimension")]
    pub min_dimension: usize,
    /// Largest operator dimension; each trial draws `n` uniformly.
    pub dimension: usize,
    pub alpha: f64,
    /// Perturbation norm; defaults to `alpha / 2`.
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Fixed response; a random non-amplifying one per filter when absent.
    #[serde(default)]
    pub response: Option<Response>,
    #[serde(default)]
    pub perturbation: PerturbationKind,
    /// Network depths cycled over trials (network trials only).
    #[serde(default = "default_layers")]
    pub layers: Vec<usize>,
    /// Hidden widths cycled over trials (network trials only).
    #[serde(default = "default_widths")]
    pub widths: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl StabilityTrialConfig {
    pub fn new(dimension: usize, alpha: f64, trials: usize, seed: u64) -> Self {
        Self {
            min_dimension: default_min_dimension(),
            dimension,
            alpha,
            epsilon: None,
            trials,
            seed,
            response: None,
            perturbation: PerturbationKind::default(),
            layers: default_layers(),
            widths: default_widths(),
            activation: default_activation(),
        }
    }

    pub fn resolved_epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(self.alpha / 2.0)
    }

    fn validate(&self) -> Result<()> {
        if self.min_dimension == 0 || self.dimension < self.min_dimension {
            return Err(Error::invalid("need 1 <= min_dimension <= dimension"));
        }
        let eps = self.resolved_epsilon();
        if !(eps > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        if eps >= self.alpha {
            return Err(Error::UnboundedBound {
                epsilon: eps,
                alpha: self.alpha,
            });
        }
        if self.layers.is_empty() || self.widths.is_empty() {
            return Err(Error::invalid("layers and widths must be non-empty"));
        }
        Ok(())
    }

    fn setup(
        &self,
        label: &str,
        i: usize,
    ) -> Result<(SymmetricOperator, Signal, PerturbationConfig, SeededRng)> {
        let mut rng = trial_rng(self.seed, label, i);
        let n = rng.random_range(self.min_dimension..=self.dimension);
        let spectrum = synthetic_clustered_spectrum(n, self.alpha, &mut rng);
        let op = operator_with_spectrum(&spectrum, &mut rng)?;
        let f = random_signal(n, &mut rng);
        let pert = PerturbationConfig {
            kind: self.perturbation.clone(),
            epsilon: self.resolved_epsilon(),
            seed: trial_seed(self.seed, label, i),
        };
        Ok((op, f, pert, rng))
    }
}

pub fn run_filter_stability_trials(config: &StabilityTrialConfig) -> Result<Vec<StabilityReport>> {
    config.validate()?;
    map_trials(config.trials, |i| {
        let (op, f, pert, mut rng) = config.setup("filter_stability", i)?;
        let response = match &config.response {
            Some(r) => r.clone(),
            None => Response::random(&mut rng),
        };
        run_filter_stability_trial(&op, &f, &response, config.alpha, &pert)
    })
}

pub fn run_nn_stability_trials(config: &StabilityTrialConfig) -> Result<Vec<StabilityReport>> {
    config.validate()?;
    let shapes: Vec<(usize, usize)> = config
        .layers
        .iter()
        .flat_map(|&l| config.widths.iter().map(move |&w| (l, w)))
        .collect();
    map_trials(config.trials, |i| {
        let (op, f, pert, mut rng) = config.setup("nn_stability", i)?;
        let (layers, width) = shapes[i % shapes.len()];
        let mut net = FdtNetwork::random(layers, width, config.activation, &mut rng)?;
        if let Some(r) = &config.response {
            net.responses
                .iter_mut()
                .flatten()
                .flatten()
                .for_each(|slot| *slot = r.clone());
        }
        run_nn_stability_trial(&op, &f, &net, config.alpha, &pert)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
}

pub fn summarize(reports: &[StabilityReport]) -> TrialSummary {
    let mut ratios: Vec<f64> = reports.iter().map(StabilityReport::ratio).collect();
    ratios.sort_by(f64::total_cmp);
    TrialSummary {
        trials: reports.len(),
        violations: reports.iter().filter(|r| !r.holds).count(),
        max_ratio: ratios.last().copied().unwrap_or(0.0),
        median_ratio: median_sorted(&ratios),
    }
}

pub(crate) fn median_sorted(sorted: &[f64]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        m if m % 2 == 1 => sorted[m / 2],
        m => 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]),
    }
}
