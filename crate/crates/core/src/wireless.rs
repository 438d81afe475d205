//! Power allocation in a random ad-hoc network with a spectral GNN.
//!
//! Nodes sit uniformly in `[−R, R]²`. Channels are log-scale gains
//! `h_ij = ln(d_ij^{−γ} h^f)` with Rayleigh fading `h^f` (scale 2); the
//! self-channel uses unit distance. The policy is an MNN on the channel
//! Laplacian whose output scores `s` give relaxed powers `p̃ = p0·logistic(s)`
//! and binary powers `p0·[logistic(s) > 1/2]`.
//!
//! Every Laplacian handed to the network is divided by the largest
//! eigenvalue of the unperturbed Laplacian of the same draw, so filter taps
//! act on a spectrum in `[0, 1]`. The network input is `|h_ii|`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::mnn::{forward_retained, gradient, Activation, CoeffTensor, MnnParams};
use crate::perturbation::{lognormal_perturbation, map_trials, median_sorted};
use crate::seed::{derive_seed, rng_for};
use crate::spectral::{build_graph_laplacian, sym_eig, EigenSystem, Signal, SymmetricOperator};

/// Rayleigh fading scale parameter σ.
pub const RAYLEIGH_SCALE: f64 = 2.0;

// ---------------------------------------------------------------------------
// Scenario and channels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub half_width: f64,
    pub pathloss_exponent: f64,
    pub p0: f64,
    pub p_max: f64,
    pub noise_power: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n: 15,
            half_width: 50.0,
            pathloss_exponent: 2.2,
            p0: 1.0,
            p_max: 7.5,
            noise_power: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WirelessScenario {
    pub n: usize,
    pub half_width: f64,
    pub positions: Vec<[f64; 2]>,
    pub pathloss_exponent: f64,
    pub p0: f64,
    pub p_max: f64,
    pub noise_power: f64,
    pub seed: u64,
}

impl WirelessScenario {
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.positions[i], self.positions[j]);
        (a[0] - b[0]).hypot(a[1] - b[1])
    }
}

/// Smallest pairwise distance accepted before a position is redrawn.
const MIN_DISTANCE: f64 = 1e-6;

/// Uniform node positions; a node landing within `1e-6` of an earlier one
/// is redrawn.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<WirelessScenario> {
    if config.n < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 nodes, got {}",
            config.n
        )));
    }
    for (name, v) in [
        ("half_width", config.half_width),
        ("pathloss_exponent", config.pathloss_exponent),
        ("p0", config.p0),
        ("p_max", config.p_max),
        ("noise_power", config.noise_power),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let mut rng = rng_for(seed, "wireless/positions");
    let r = config.half_width;
    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(config.n);
    while positions.len() < config.n {
        let p = [rng.random_range(-r..=r), rng.random_range(-r..=r)];
        if positions
            .iter()
            .all(|q| (p[0] - q[0]).hypot(p[1] - q[1]) > MIN_DISTANCE)
        {
            positions.push(p);
        }
    }
    Ok(WirelessScenario {
        n: config.n,
        half_width: r,
        positions,
        pathloss_exponent: config.pathloss_exponent,
        p0: config.p0,
        p_max: config.p_max,
        noise_power: config.noise_power,
        seed,
    })
}

pub fn rayleigh() -> Weibull<f64> {
    // Rayleigh(σ) is Weibull(scale σ√2, shape 2)
    Weibull::new(RAYLEIGH_SCALE * std::f64::consts::SQRT_2, 2.0).expect("valid Weibull parameters")
}

/// `ln(d^{−γ} · fading)`.
pub fn channel_gain(distance: f64, fading: f64, pathloss_exponent: f64) -> Result<f64> {
    if !(distance > 0.0) || !(fading > 0.0) {
        return Err(Error::invalid("distance and fading must be positive"));
    }
    Ok((distance.powf(-pathloss_exponent) * fading).ln())
}

/// One fading realization of the channel matrix (`d_ii := 1`).
pub fn channel_matrix(scenario: &WirelessScenario, fading_seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = rng_for(fading_seed, "wireless/fading");
    let dist = rayleigh();
    let n = scenario.n;
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = if i == j { 1.0 } else { scenario.distance(i, j) };
            h[(i, j)] = channel_gain(d, dist.sample(&mut rng), scenario.pathloss_exponent)?;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianMode {
    /// `w_ij = |h_ij + h_ji| / 2`
    #[default]
    AbsSym,
    /// `w_ij = (h_ij + h_ji)/2 − min(0, min_{k≠l} (h_kl + h_lk)/2)`
    ShiftPositive,
}

pub fn channel_to_laplacian(h: &DMatrix<f64>, mode: LaplacianMode) -> Result<SymmetricOperator> {
    if !h.is_square() || h.nrows() < 2 {
        return Err(Error::invalid("channel matrix must be square with n >= 2"));
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("channel matrix has non-finite entries"));
    }
    let n = h.nrows();
    let sym = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            0.5 * (h[(i, j)] + h[(j, i)])
        }
    });
    let w = match mode {
        LaplacianMode::AbsSym => sym.map(f64::abs),
        LaplacianMode::ShiftPositive => {
            let min = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| sym[(i, j)])
                .fold(f64::INFINITY, f64::min);
            let shift = (-min).max(0.0);
            DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { sym[(i, j)] + shift })
        }
    };
    build_graph_laplacian(&w)
}

// ---------------------------------------------------------------------------
// Sum rate
// ---------------------------------------------------------------------------

fn check_powers(h: &DMatrix<f64>, p: &[f64], noise: f64) -> Result<()> {
    if !h.is_square() {
        return Err(Error::invalid("channel matrix must be square"));
    }
    ensure_dim(h.nrows(), p.len())?;
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::invalid("powers must be nonnegative"));
    }
    if !(noise > 0.0) {
        return Err(Error::invalid("noise power must be positive"));
    }
    Ok(())
}

/// Interference-plus-noise `N + Σ_{j≠i} h_ij² p_j` for every `i`.
fn interference(h: &DMatrix<f64>, p: &[f64], noise: f64) -> Vec<f64> {
    let n = p.len();
    (0..n)
        .map(|i| {
            noise
                + (0..n)
                    .filter(|&j| j != i)
                    .map(|j| h[(i, j)] * h[(i, j)] * p[j])
                    .sum::<f64>()
        })
        .collect()
}

/// `Σ_i ln(1 + h_ii² p_i / (N + Σ_{j≠i} h_ij² p_j))`.
pub fn sum_rate(h: &DMatrix<f64>, p: &[f64], noise: f64) -> Result<f64> {
    check_powers(h, p, noise)?;
    let den = interference(h, p, noise);
    Ok((0..p.len())
        .map(|i| (h[(i, i)] * h[(i, i)] * p[i] / den[i]).ln_1p())
        .sum())
}

/// `∂R/∂p_k = Σ_i g_ik / S_i − Σ_{i≠k} g_ik / (N + I_i)` with `g = h²` and
/// `S_i = N + I_i + g_ii p_i`.
pub fn sum_rate_gradient(h: &DMatrix<f64>, p: &[f64], noise: f64) -> Result<Vec<f64>> {
    check_powers(h, p, noise)?;
    let n = p.len();
    let den = interference(h, p, noise);
    let total: Vec<f64> = (0..n)
        .map(|i| den[i] + h[(i, i)] * h[(i, i)] * p[i])
        .collect();
    Ok((0..n)
        .map(|k| {
            (0..n)
                .map(|i| {
                    let g = h[(i, k)] * h[(i, k)];
                    if i == k {
                        g / total[i]
                    } else {
                        g / total[i] - g / den[i]
                    }
                })
                .sum()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Policy evaluation on one draw
// ---------------------------------------------------------------------------

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Network view of one channel realization.
#[derive(Debug, Clone)]
pub struct Draw {
    pub h: DMatrix<f64>,
    pub eig: EigenSystem,
    pub input: Signal,
    /// Largest eigenvalue of the raw (unperturbed) Laplacian.
    pub scale: f64,
}

impl Draw {
    pub fn new(h: DMatrix<f64>, mode: LaplacianMode) -> Result<Self> {
        let lap = channel_to_laplacian(&h, mode)?;
        let scale = lap.spectral_norm()?;
        Self::with_scale(h, lap, scale)
    }

    fn with_scale(h: DMatrix<f64>, lap: SymmetricOperator, scale: f64) -> Result<Self> {
        let eig = if scale > 0.0 {
            sym_eig(&lap.scaled(1.0 / scale)?)?
        } else {
            sym_eig(&lap)?
        };
        let input = DVector::from_fn(h.nrows(), |i, _| h[(i, i)].abs());
        Ok(Self {
            h,
            eig,
            input,
            scale,
        })
    }

    /// The same draw seen through the Laplacian of `h + a`, normalized with
    /// this draw's scale; the input signal stays `|h_ii|` of the original.
    pub fn perturbed(&self, a: &DMatrix<f64>, mode: LaplacianMode) -> Result<Self> {
        let lap = channel_to_laplacian(&(&self.h + a), mode)?;
        let mut d = Self::with_scale(self.h.clone(), lap, self.scale)?;
        d.input = self.input.clone();
        Ok(d)
    }
}

pub fn policy_scores(params: &MnnParams, draw: &Draw) -> Result<Vec<f64>> {
    check_policy(params)?;
    let out = crate::mnn::forward(params, &draw.eig, std::slice::from_ref(&draw.input))?;
    Ok(out[0].iter().copied().collect())
}

pub fn relaxed_allocation(params: &MnnParams, draw: &Draw, p0: f64) -> Result<Vec<f64>> {
    Ok(policy_scores(params, draw)?
        .into_iter()
        .map(|s| p0 * logistic(s))
        .collect())
}

/// `p_i = p0` when `logistic(s_i) > 1/2` (strictly), else `0`.
pub fn binary_from_scores(scores: &[f64], p0: f64) -> Vec<f64> {
    scores
        .iter()
        .map(|&s| if logistic(s) > 0.5 { p0 } else { 0.0 })
        .collect()
}

pub fn binary_allocation(params: &MnnParams, draw: &Draw, p0: f64) -> Result<Vec<f64>> {
    Ok(binary_from_scores(&policy_scores(params, draw)?, p0))
}

fn check_policy(params: &MnnParams) -> Result<()> {
    if params.features[0] != 1 || params.features[params.layers] != 1 {
        return Err(Error::invalid(
            "allocation policy needs one input and one output feature",
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdtProjection {
    None,
    #[default]
    EveryStep,
    /// Project once, after the last step.
    EvalOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub draws_per_step: usize,
    pub penalty_weight: f64,
    pub taps: usize,
    pub activation: Activation,
    pub alpha: f64,
    pub fdt_projection: FdtProjection,
    /// Fixed draws on which the relaxed objective is reported before and
    /// after training.
    pub objective_draws: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_size: 0.01,
            draws_per_step: 20,
            penalty_weight: 1.0,
            taps: 4,
            activation: Activation::Tanh,
            alpha: 0.001,
            fdt_projection: FdtProjection::EveryStep,
            objective_draws: 50,
        }
    }
}

/// Penalized relaxed objective over `draws` and its coefficient gradient:
/// `mean_b R(H_b, p̃_b) − μ·max(0, mean_b 1ᵀp̃_b − P_max)`.
pub fn relaxed_objective(
    params: &MnnParams,
    draws: &[Draw],
    scenario: &WirelessScenario,
    penalty_weight: f64,
) -> Result<(f64, CoeffTensor)> {
    check_policy(params)?;
    if draws.is_empty() {
        return Err(Error::invalid("objective needs at least one draw"));
    }
    let m = draws.len() as f64;
    let p0 = scenario.p0;
    let mut states = Vec::with_capacity(draws.len());
    let mut rate = 0.0;
    let mut power = 0.0;
    for d in draws {
        let fm = forward_retained(params, &d.eig, std::slice::from_ref(&d.input))?;
        let s = fm.output()[0].clone();
        let sig: Vec<f64> = s.iter().map(|&x| logistic(x)).collect();
        let p: Vec<f64> = sig.iter().map(|&x| p0 * x).collect();
        rate += sum_rate(&d.h, &p, scenario.noise_power)?;
        power += p.iter().sum::<f64>();
        states.push((fm, sig, p));
    }
    let excess = power / m - scenario.p_max;
    let objective = rate / m - penalty_weight * excess.max(0.0);
    let penalty_slope = if excess > 0.0 { penalty_weight } else { 0.0 };

    let mut total = params.coeffs.clone();
    total
        .iter_mut()
        .flatten()
        .flatten()
        .flatten()
        .for_each(|c| *c = 0.0);
    for (d, (fm, sig, p)) in draws.iter().zip(&states) {
        let dr = sum_rate_gradient(&d.h, p, scenario.noise_power)?;
        let ds = DVector::from_fn(p.len(), |i, _| {
            (dr[i] - penalty_slope) / m * p0 * sig[i] * (1.0 - sig[i])
        });
        let g = gradient(params, &d.eig, fm, &[ds])?;
        for (t, v) in total
            .iter_mut()
            .flatten()
            .flatten()
            .flatten()
            .zip(g.iter().flatten().flatten().flatten())
        {
            *t += v;
        }
    }
    Ok((objective, total))
}

/// Adam ascent state (β₁ = 0.9, β₂ = 0.999).
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    step: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize, step: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            step,
        }
    }

    fn ascend(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..x.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * g[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * g[i] * g[i];
            x[i] += self.step * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPolicy {
    pub layers: usize,
    pub features: usize,
    pub params: MnnParams,
    /// Minibatch objective before each step.
    pub history: Vec<f64>,
    pub initial_objective: f64,
    pub final_objective: f64,
}

/// `n` fading draws with seeds derived from `(seed, label/i)`.
pub fn sample_draws(
    scenario: &WirelessScenario,
    mode: LaplacianMode,
    seed: u64,
    label: &str,
    count: usize,
) -> Result<Vec<Draw>> {
    (0..count)
        .map(|i| {
            Draw::new(
                channel_matrix(scenario, derive_seed(seed, &format!("{label}/{i}")))?,
                mode,
            )
        })
        .collect()
}

/// Network shape `[1, F, …, F, 1]` with `layers` filter layers.
pub fn policy_features(layers: usize, width: usize) -> Result<Vec<usize>> {
    if layers == 0 || width == 0 {
        return Err(Error::invalid("layers and width must be >= 1"));
    }
    let mut f = vec![width; layers + 1];
    f[0] = 1;
    f[layers] = 1;
    Ok(f)
}

fn pooled_eigenvalues(draws: &[Draw]) -> Vec<f64> {
    let mut all: Vec<f64> = draws
        .iter()
        .flat_map(|d| d.eig.eigenvalues().iter().copied())
        .collect();
    all.sort_by(f64::total_cmp);
    all
}

pub fn train_policy(
    scenario: &WirelessScenario,
    mode: LaplacianMode,
    config: &TrainingConfig,
    layers: usize,
    width: usize,
    seed: u64,
) -> Result<TrainedPolicy> {
    if config.draws_per_step == 0 || config.objective_draws == 0 {
        return Err(Error::invalid(
            "draws_per_step and objective_draws must be >= 1",
        ));
    }
    if !(config.step_size > 0.0) || !(config.alpha > 0.0) || !(config.penalty_weight >= 0.0) {
        return Err(Error::invalid(
            "step_size and alpha must be positive, penalty_weight nonnegative",
        ));
    }
    let label = format!("wireless/train/L{layers}/F{width}");
    let mut init_rng = rng_for(seed, &format!("{label}/init"));
    let mut params = MnnParams::init_uniform(
        policy_features(layers, width)?,
        config.taps,
        config.activation,
        &mut init_rng,
    )?;
    let held_out = sample_draws(
        scenario,
        mode,
        seed,
        "wireless/objective",
        config.objective_draws,
    )?;
    let (initial_objective, _) =
        relaxed_objective(&params, &held_out, scenario, config.penalty_weight)?;

    let mut adam = Adam::new(params.num_params(), config.step_size);
    let mut history = Vec::with_capacity(config.iterations);
    let mut last_eigs = Vec::new();
    for it in 0..config.iterations {
        let draws = sample_draws(
            scenario,
            mode,
            seed,
            &format!("{label}/step{it}"),
            config.draws_per_step,
        )?;
        let (obj, grad) = relaxed_objective(&params, &draws, scenario, config.penalty_weight)?;
        if !obj.is_finite() {
            return Err(Error::TrainingDiverged { iteration: it });
        }
        history.push(obj);
        let g: Vec<f64> = grad.iter().flatten().flatten().flatten().copied().collect();
        let mut x = params.flatten();
        adam.ascend(&mut x, &g);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { iteration: it });
        }
        params.set_flat(&x)?;
        last_eigs = pooled_eigenvalues(&draws);
        if config.fdt_projection == FdtProjection::EveryStep {
            params.project_onto_fdt(&last_eigs, config.alpha)?;
        }
    }
    if config.fdt_projection == FdtProjection::EvalOnly && !last_eigs.is_empty() {
        params.project_onto_fdt(&last_eigs, config.alpha)?;
    }
    let (final_objective, _) =
        relaxed_objective(&params, &held_out, scenario, config.penalty_weight)?;
    if !final_objective.is_finite() {
        return Err(Error::TrainingDiverged {
            iteration: config.iterations,
        });
    }
    Ok(TrainedPolicy {
        layers,
        features: width,
        params,
        history,
        initial_objective,
        final_objective,
    })
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelPerturbation {
    pub mu: f64,
    pub sigma: f64,
    /// Spectral norm of the added log-normal matrix; `0` disables it.
    pub epsilon: f64,
}

impl Default for ChannelPerturbation {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: 1.0,
            epsilon: 1.0,
        }
    }
}

impl ChannelPerturbation {
    fn matrix(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        if self.epsilon == 0.0 {
            return Ok(DMatrix::zeros(n, n));
        }
        Ok(lognormal_perturbation(n, self.mu, self.sigma, self.epsilon, seed)?.into_matrix())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub draws: usize,
    pub perturbation: ChannelPerturbation,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            draws: 50,
            perturbation: ChannelPerturbation::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WirelessConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub laplacian_mode: LaplacianMode,
    pub training: TrainingConfig,
    pub layers: Vec<usize>,
    pub features: Vec<usize>,
    pub evaluation: EvaluationConfig,
}

impl Default for WirelessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenario: ScenarioConfig::default(),
            laplacian_mode: LaplacianMode::default(),
            training: TrainingConfig::default(),
            layers: vec![1, 2, 3],
            features: vec![4],
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl WirelessConfig {
    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .flat_map(|&l| self.features.iter().map(move |&f| (l, f)))
            .collect()
    }

    pub fn scenario(&self) -> Result<WirelessScenario> {
        generate_scenario(&self.scenario, derive_seed(self.seed, "wireless/scenario"))
    }
}

/// Policies trained for every configured `(L, F)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRun {
    pub version: String,
    pub config: WirelessConfig,
    pub scenario: WirelessScenario,
    pub policies: Vec<TrainedPolicy>,
}

pub fn train_sweep(config: &WirelessConfig) -> Result<TrainingRun> {
    let shapes = config.shapes();
    if shapes.is_empty() {
        return Err(Error::invalid("layers and features must be non-empty"));
    }
    let scenario = config.scenario()?;
    let policies = map_trials(shapes.len(), |i| {
        let (l, f) = shapes[i];
        train_policy(
            &scenario,
            config.laplacian_mode,
            &config.training,
            l,
            f,
            config.seed,
        )
    })?;
    Ok(TrainingRun {
        version: crate::VERSION.to_string(),
        config: config.clone(),
        scenario,
        policies,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub layers: usize,
    pub features: usize,
    /// Mean binary-allocation sum rate with the original Laplacian.
    pub baseline_rate: f64,
    /// Mean binary-allocation sum rate with the perturbed Laplacian.
    pub perturbed_rate: f64,
    /// `baseline_rate − perturbed_rate`.
    pub gap: f64,
    /// Median over draws of the per-draw `|baseline − perturbed|` (binary).
    pub median_abs_gap: f64,
    /// Median over draws of the per-draw gap with relaxed allocations.
    pub relaxed_median_abs_gap: f64,
    /// Mean total binary power with the original Laplacian.
    pub mean_total_power: f64,
    /// `mean_total_power ≤ P_max + p0`.
    pub budget_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: String,
    pub config: WirelessConfig,
    pub self_channel: String,
    pub baseline_sum_rate: f64,
    pub perturbed_sum_rate: f64,
    pub gap: f64,
    pub rows: Vec<GapRow>,
    pub budget_violations: Vec<(usize, usize)>,
    pub training: Vec<TrainingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub layers: usize,
    pub features: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub history: Vec<f64>,
}

pub const SELF_CHANNEL_NOTE: &str =
    "self-channel h_ii uses unit distance (pathloss factor 1) with its own fading draw";

/// Evaluates every policy on shared evaluation draws, with and without the
/// log-normal channel perturbation. Rates are always computed on the
/// original channel; only the Laplacian seen by the policy changes.
pub fn evaluate_perturbed(run: &TrainingRun) -> Result<ExperimentReport> {
    let config = &run.config;
    let scenario = &run.scenario;
    let mode = config.laplacian_mode;
    let eval = &config.evaluation;
    if eval.draws == 0 {
        return Err(Error::invalid("evaluation needs at least one draw"));
    }
    let pairs: Vec<(Draw, Draw)> = (0..eval.draws)
        .map(|b| {
            let d = Draw::new(
                channel_matrix(
                    scenario,
                    derive_seed(config.seed, &format!("wireless/eval/{b}")),
                )?,
                mode,
            )?;
            let a = eval.perturbation.matrix(
                scenario.n,
                derive_seed(config.seed, &format!("wireless/eval/{b}/perturbation")),
            )?;
            let dp = d.perturbed(&a, mode)?;
            Ok((d, dp))
        })
        .collect::<Result<_>>()?;

    let p0 = scenario.p0;
    let noise = scenario.noise_power;
    let rows = map_trials(run.policies.len(), |k| {
        let pol = &run.policies[k];
        let mut base = Vec::with_capacity(pairs.len());
        let mut pert = Vec::with_capacity(pairs.len());
        let mut relaxed_gaps = Vec::with_capacity(pairs.len());
        let mut power = 0.0;
        for (d, dp) in &pairs {
            let s = policy_scores(&pol.params, d)?;
            let sp = policy_scores(&pol.params, dp)?;
            let (pb, pp) = (binary_from_scores(&s, p0), binary_from_scores(&sp, p0));
            power += pb.iter().sum::<f64>();
            base.push(sum_rate(&d.h, &pb, noise)?);
            pert.push(sum_rate(&d.h, &pp, noise)?);
            let relax = |sc: &[f64]| sc.iter().map(|&x| p0 * logistic(x)).collect::<Vec<_>>();
            relaxed_gaps.push(
                (sum_rate(&d.h, &relax(&s), noise)? - sum_rate(&d.h, &relax(&sp), noise)?).abs(),
            );
        }
        let m = pairs.len() as f64;
        let mut abs_gaps: Vec<f64> = base.iter().zip(&pert).map(|(a, b)| (a - b).abs()).collect();
        abs_gaps.sort_by(f64::total_cmp);
        relaxed_gaps.sort_by(f64::total_cmp);
        let baseline_rate = base.iter().sum::<f64>() / m;
        let perturbed_rate = pert.iter().sum::<f64>() / m;
        let mean_total_power = power / m;
        Ok(GapRow {
            layers: pol.layers,
            features: pol.features,
            baseline_rate,
            perturbed_rate,
            gap: baseline_rate - perturbed_rate,
            median_abs_gap: median_sorted(&abs_gaps),
            relaxed_median_abs_gap: median_sorted(&relaxed_gaps),
            mean_total_power,
            budget_ok: mean_total_power <= scenario.p_max + p0,
        })
    })?;
    let r = rows.len() as f64;
    let baseline_sum_rate = rows.iter().map(|x| x.baseline_rate).sum::<f64>() / r;
    let perturbed_sum_rate = rows.iter().map(|x| x.perturbed_rate).sum::<f64>() / r;
    let budget_violations = rows
        .iter()
        .filter(|x| !x.budget_ok)
        .map(|x| (x.layers, x.features))
        .collect();
    Ok(ExperimentReport {
        version: crate::VERSION.to_string(),
        config: config.clone(),
        self_channel: SELF_CHANNEL_NOTE.to_string(),
        baseline_sum_rate,
        perturbed_sum_rate,
        gap: baseline_sum_rate - perturbed_sum_rate,
        rows,
        budget_violations,
        training: run
            .policies
            .iter()
            .map(|p| TrainingSummary {
                layers: p.layers,
                features: p.features,
                initial_objective: p.initial_objective,
                final_objective: p.final_objective,
                history: p.history.clone(),
            })
            .collect(),
    })
}

/// CSV gap table: `layers,features,baseline_rate,perturbed_rate,gap,…`.
pub fn gap_table_csv(report: &ExperimentReport) -> String {
    use crate::io::fmt_f64;
    let mut out = String::from(
        "layers,features,baseline_rate,perturbed_rate,gap,median_abs_gap,relaxed_median_abs_gap,mean_total_power,budget_ok\n",
    );
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.layers,
            r.features,
            fmt_f64(r.baseline_rate),
            fmt_f64(r.perturbed_rate),
            fmt_f64(r.gap),
            fmt_f64(r.median_abs_gap),
            fmt_f64(r.relaxed_median_abs_gap),
            fmt_f64(r.mean_total_power),
            r.budget_ok
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_scenario(n: usize) -> WirelessScenario {
        generate_scenario(
            &ScenarioConfig {
                n,
                ..ScenarioConfig::default()
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn scenario_is_seeded_and_in_range() {
        let cfg = ScenarioConfig {
            n: 50,
            ..ScenarioConfig::default()
        };
        let s = generate_scenario(&cfg, 1).unwrap();
        assert_eq!(s.positions.len(), 50);
        assert!(s
            .positions
            .iter()
            .all(|p| p[0].abs() <= 50.0 && p[1].abs() <= 50.0));
        for i in 0..50 {
            for j in 0..i {
                assert!(s.distance(i, j) > 0.0);
            }
        }
        assert_eq!(s, generate_scenario(&cfg, 1).unwrap());
        assert_ne!(s, generate_scenario(&cfg, 2).unwrap());
        assert!(generate_scenario(&ScenarioConfig { n: 1, ..cfg }, 1).is_err());
    }

    #[test]
    fn channel_gain_examples() {
        assert_abs_diff_eq!(
            channel_gain(1.0, std::f64::consts::E, 2.2).unwrap(),
            1.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            channel_gain(10.0, 1.0, 2.2).unwrap(),
            -5.0657,
            epsilon = 1e-4
        );
        assert!(channel_gain(0.0, 1.0, 2.2).is_err());
    }

    #[test]
    fn rayleigh_mean() {
        let mut rng = rng_for(11, "rayleigh");
        let dist = rayleigh();
        let m: f64 = (0..100_000).map(|_| dist.sample(&mut rng)).sum::<f64>() / 1e5;
        let expect = RAYLEIGH_SCALE * (std::f64::consts::PI / 2.0).sqrt();
        assert!((m - expect).abs() / expect < 0.01, "{m} vs {expect}");
    }

    #[test]
    fn channel_matrix_is_seeded_and_finite() {
        let s = small_scenario(6);
        let h = channel_matrix(&s, 4).unwrap();
        assert!(h.iter().all(|x| x.is_finite()));
        assert_eq!(h, channel_matrix(&s, 4).unwrap());
        assert_ne!(h, channel_matrix(&s, 5).unwrap());
    }

    #[test]
    fn laplacian_modes() {
        let s = small_scenario(8);
        let h = channel_matrix(&s, 1).unwrap();
        for mode in [LaplacianMode::AbsSym, LaplacianMode::ShiftPositive] {
            let l = channel_to_laplacian(&h, mode).unwrap();
            for row in l.matrix().row_iter() {
                assert!(row.sum().abs() < 1e-10);
            }
            assert!(sym_eig(&l).unwrap().eigenvalues()[0] >= -1e-10);
        }
        // positive symmetric H: abs_sym is the plain weighted Laplacian
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0]);
        let a = channel_to_laplacian(&w, LaplacianMode::AbsSym).unwrap();
        assert_eq!(a, build_graph_laplacian(&w).unwrap());
        // shift_positive moves the most negative weight to zero
        let neg = DMatrix::from_row_slice(3, 3, &[0.0, -1.0, 2.0, -1.0, 0.0, 0.5, 2.0, 0.5, 0.0]);
        let b = channel_to_laplacian(&neg, LaplacianMode::ShiftPositive).unwrap();
        assert_eq!(b.matrix()[(0, 1)], 0.0);
        assert_eq!(b.matrix()[(0, 2)], -3.0);
    }

    #[test]
    fn sum_rate_examples() {
        let h1 = DMatrix::from_element(1, 1, 1.0);
        assert_abs_diff_eq!(
            sum_rate(&h1, &[2.0], 1.0).unwrap(),
            3.0_f64.ln(),
            epsilon = 1e-15
        );
        let h = DMatrix::from_element(2, 2, 1.0);
        assert_eq!(sum_rate(&h, &[0.0, 0.0], 1.0).unwrap(), 0.0);
        let p0 = 1.7;
        assert_abs_diff_eq!(
            sum_rate(&h, &[p0, p0], 1.0).unwrap(),
            2.0 * (1.0 + p0 / (1.0 + p0)).ln(),
            epsilon = 1e-14
        );
        assert!(sum_rate(&h, &[-1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn sum_rate_gradient_matches_differences() {
        let s = small_scenario(7);
        let h = channel_matrix(&s, 2).unwrap();
        let p: Vec<f64> = (0..7).map(|i| 0.1 + 0.12 * i as f64).collect();
        let g = sum_rate_gradient(&h, &p, 1.0).unwrap();
        for k in 0..7 {
            let step = 1e-6;
            let mut up = p.clone();
            let mut dn = p.clone();
            up[k] += step;
            dn[k] -= step;
            let fd =
                (sum_rate(&h, &up, 1.0).unwrap() - sum_rate(&h, &dn, 1.0).unwrap()) / (2.0 * step);
            assert!(
                (fd - g[k]).abs() <= 1e-6 * (1.0 + fd.abs()),
                "{k}: {fd} vs {}",
                g[k]
            );
        }
    }

    #[test]
    fn binary_threshold_is_strict() {
        assert_eq!(binary_from_scores(&[0.0, 0.0], 2.0), vec![0.0, 0.0]);
        assert_eq!(
            binary_from_scores(&[50.0, 1e-9, -3.0], 2.0),
            vec![2.0, 2.0, 0.0]
        );
    }

    fn objective_fd_check(penalty_weight: f64, p_max: f64) {
        let mut s = small_scenario(6);
        s.p_max = p_max;
        let draws = sample_draws(&s, LaplacianMode::AbsSym, 8, "fd", 3).unwrap();
        let mut rng = rng_for(8, "fd/init");
        let mut params =
            MnnParams::init_uniform(vec![1, 3, 1], 3, Activation::Tanh, &mut rng).unwrap();
        let (_, grad) = relaxed_objective(&params, &draws, &s, penalty_weight).unwrap();
        let flat_grad: Vec<f64> = grad.iter().flatten().flatten().flatten().copied().collect();
        let x0 = params.flatten();
        for k in 0..x0.len() {
            let step = 1e-6;
            let mut x = x0.clone();
            x[k] += step;
            params.set_flat(&x).unwrap();
            let up = relaxed_objective(&params, &draws, &s, penalty_weight)
                .unwrap()
                .0;
            x[k] -= 2.0 * step;
            params.set_flat(&x).unwrap();
            let dn = relaxed_objective(&params, &draws, &s, penalty_weight)
                .unwrap()
                .0;
            let fd = (up - dn) / (2.0 * step);
            let rel = (fd - flat_grad[k]).abs() / fd.abs().max(flat_grad[k].abs()).max(1e-6);
            assert!(rel <= 1e-4, "param {k}: fd {fd} vs {}", flat_grad[k]);
        }
    }

    #[test]
    fn objective_gradient_matches_differences() {
        objective_fd_check(1.0, 100.0); // penalty inactive
        objective_fd_check(1.0, 0.5); // penalty active
    }

    fn tiny_config() -> WirelessConfig {
        WirelessConfig {
            seed: 5,
            scenario: ScenarioConfig {
                n: 6,
                p_max: 3.0,
                ..ScenarioConfig::default()
            },
            training: TrainingConfig {
                iterations: 5,
                draws_per_step: 3,
                objective_draws: 4,
                ..TrainingConfig::default()
            },
            layers: vec![1, 2],
            features: vec![2],
            evaluation: EvaluationConfig {
                draws: 5,
                ..EvaluationConfig::default()
            },
            ..WirelessConfig::default()
        }
    }

    #[test]
    fn zero_iterations_keeps_initial_policy() {
        let cfg = tiny_config();
        let s = cfg.scenario().unwrap();
        let training = TrainingConfig {
            iterations: 0,
            fdt_projection: FdtProjection::None,
            ..cfg.training.clone()
        };
        let p = train_policy(&s, cfg.laplacian_mode, &training, 2, 3, 9).unwrap();
        let mut rng = rng_for(9, "wireless/train/L2/F3/init");
        let fresh =
            MnnParams::init_uniform(vec![1, 3, 1], training.taps, training.activation, &mut rng)
                .unwrap();
        assert_eq!(p.params, fresh);
        assert!(p.history.is_empty());
        assert_eq!(p.initial_objective, p.final_objective);
    }

    #[test]
    fn zero_perturbation_gives_zero_gaps() {
        let mut cfg = tiny_config();
        cfg.evaluation.perturbation.epsilon = 0.0;
        let run = train_sweep(&cfg).unwrap();
        let rep = evaluate_perturbed(&run).unwrap();
        assert_eq!(rep.rows.len(), 2);
        for r in &rep.rows {
            assert!(
                r.gap.abs() <= 1e-8 && r.median_abs_gap <= 1e-8 && r.relaxed_median_abs_gap <= 1e-8
            );
        }
    }

    #[test]
    fn experiment_is_deterministic_and_covers_every_shape() {
        let cfg = tiny_config();
        let a = evaluate_perturbed(&train_sweep(&cfg).unwrap()).unwrap();
        let b = evaluate_perturbed(&train_sweep(&cfg).unwrap()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let shapes: Vec<_> = a.rows.iter().map(|r| (r.layers, r.features)).collect();
        assert_eq!(shapes, cfg.shapes());
        assert!(a
            .training
            .iter()
            .all(|t| t.history.iter().all(|x| x.is_finite())));
        assert_eq!(gap_table_csv(&a).lines().count(), 3);
    }
}
