//! Layered spectral networks.
//!
//! Layer `l` maps `F_{l−1}` input features to `F_l` output features,
//! `f_l^p = σ(Σ_q h_l^{pq}(ℒ) f_{l−1}^q)`, where every filter acts diagonally
//! in the eigenbasis of `ℒ`. [`MnnParams`] holds polynomial filters and
//! supports exact reverse-mode gradients; any other [`FilterBank`] (e.g. a
//! bank of FDT filters) can be evaluated with [`forward_bank`].

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::filters::{fit_polynomial, frequency_response};
use crate::partition::partition_spectrum;
use crate::spectral::{EigenSystem, Signal};

/// Pointwise nonlinearity with `σ(0) = 0` and Lipschitz constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Abs,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Abs => x.abs(),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative; the subgradient at the relu/abs kink is 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Abs => {
                if x > 0.0 {
                    1.0
                } else if x < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }
}

pub fn activation_apply(kind: Activation, x: f64) -> f64 {
    kind.apply(x)
}

/// Coefficients indexed `[layer][out][in][tap]`.
pub type CoeffTensor = Vec<Vec<Vec<Vec<f64>>>>;

/// A stack of filter banks evaluated on an operator's eigensystem.
pub trait FilterBank {
    /// `F_0 … F_L`.
    fn features(&self) -> &[usize];

    fn activation(&self) -> Activation;

    /// Response of filter `(layer, out, inp)` on eigenpair `index`.
    fn response(&self, layer: usize, out: usize, inp: usize, index: usize, lambda: f64) -> f64;

    fn num_layers(&self) -> usize {
        self.features().len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnnParams {
    pub layers: usize,
    pub features: Vec<usize>,
    pub taps: usize,
    pub activation: Activation,
    pub coeffs: CoeffTensor,
}

impl MnnParams {
    pub fn new(
        features: Vec<usize>,
        taps: usize,
        activation: Activation,
        coeffs: CoeffTensor,
    ) -> Result<Self> {
        let params = Self {
            layers: features.len().saturating_sub(1),
            features,
            taps,
            activation,
            coeffs,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(features: Vec<usize>, taps: usize, activation: Activation) -> Result<Self> {
        let coeffs = zero_tensor(&features, taps);
        Self::new(features, taps, activation, coeffs)
    }

    /// I.i.d. uniform coefficients on `[−1/(K·F_{l−1}), 1/(K·F_{l−1})]`.
    pub fn init_uniform<R: Rng + ?Sized>(
        features: Vec<usize>,
        taps: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut params = Self::zeros(features, taps, activation)?;
        for l in 0..params.layers {
            let bound = 1.0 / (taps * params.features[l]) as f64;
            for out in params.coeffs[l].iter_mut() {
                for filt in out.iter_mut() {
                    for c in filt.iter_mut() {
                        *c = rng.random_range(-bound..=bound);
                    }
                }
            }
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.features.len() != self.layers + 1 {
            return Err(Error::invalid(format!(
                "need layers >= 1 and layers + 1 feature counts, got {} layers and {} counts",
                self.layers,
                self.features.len()
            )));
        }
        if self.features.contains(&0) || self.taps == 0 {
            return Err(Error::invalid("feature counts and taps must be >= 1"));
        }
        if self.coeffs.len() != self.layers {
            return Err(Error::invalid(
                "coefficient tensor has the wrong number of layers",
            ));
        }
        for (l, layer) in self.coeffs.iter().enumerate() {
            let ok = layer.len() == self.features[l + 1]
                && layer.iter().all(|out| {
                    out.len() == self.features[l]
                        && out
                            .iter()
                            .all(|f| f.len() == self.taps && f.iter().all(|c| c.is_finite()))
                });
            if !ok {
                return Err(Error::invalid(format!(
                    "coefficient tensor layer {l} must be {}x{}x{} finite values",
                    self.features[l + 1],
                    self.features[l],
                    self.taps
                )));
            }
        }
        Ok(())
    }

    pub fn filter(&self, layer: usize, out: usize, inp: usize) -> &[f64] {
        &self.coeffs[layer][out][inp]
    }

    pub fn num_params(&self) -> usize {
        self.coeffs.iter().flatten().flatten().map(Vec::len).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.coeffs
            .iter()
            .flatten()
            .flatten()
            .flatten()
            .copied()
            .collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        ensure_dim(self.num_params(), values.len())?;
        for (c, v) in self
            .coeffs
            .iter_mut()
            .flatten()
            .flatten()
            .flatten()
            .zip(values)
        {
            *c = *v;
        }
        Ok(())
    }

    /// Refit every filter so its response is constant on each α-group of
    /// `eigenvalues`: group targets are the mean response over the group,
    /// separated eigenvalues keep their own response, and the taps are the
    /// least-squares polynomial through those targets.
    pub fn project_onto_fdt(&mut self, eigenvalues: &[f64], alpha: f64) -> Result<()> {
        let mut sorted = eigenvalues.to_vec();
        sorted.sort_by(f64::total_cmp);
        let part = partition_spectrum(&sorted, alpha)?;
        if part.n_count() == 0 {
            return Ok(());
        }
        let degree = self.taps - 1;
        for filt in self.coeffs.iter_mut().flatten().flatten() {
            let mut targets: Vec<f64> = sorted
                .iter()
                .map(|&l| frequency_response(filt, l))
                .collect();
            for g in part.groups() {
                let mean = targets[g.clone()].iter().sum::<f64>() / g.len() as f64;
                targets[g.clone()].iter_mut().for_each(|t| *t = mean);
            }
            let fit = fit_polynomial(&sorted, &targets, degree)?;
            filt.copy_from_slice(fit.coeffs());
        }
        Ok(())
    }
}

fn zero_tensor(features: &[usize], taps: usize) -> CoeffTensor {
    features
        .windows(2)
        .map(|w| vec![vec![vec![0.0; taps]; w[0]]; w[1]])
        .collect()
}

impl FilterBank for MnnParams {
    fn features(&self) -> &[usize] {
        &self.features
    }

    fn activation(&self) -> Activation {
        self.activation
    }

    fn response(&self, layer: usize, out: usize, inp: usize, _index: usize, lambda: f64) -> f64 {
        frequency_response(&self.coeffs[layer][out][inp], lambda)
    }
}

/// Per-layer state retained by the forward pass for back-propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    /// `features[l][p] = f_l^p` for `l = 0..=L` (`features[0]` is the input).
    pub features: Vec<Vec<Signal>>,
    /// `pre_activations[l][p]` is the argument of σ producing `features[l+1][p]`.
    pub pre_activations: Vec<Vec<Signal>>,
}

impl FeatureMap {
    pub fn output(&self) -> &[Signal] {
        self.features.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

fn check_input(features: &[usize], eig: &EigenSystem, input: &[Signal]) -> Result<()> {
    ensure_dim(features[0], input.len())?;
    for f in input {
        ensure_dim(eig.dim(), f.len())?;
    }
    Ok(())
}

/// Forward pass of any filter bank, retaining every layer.
pub fn forward_bank<B: FilterBank + ?Sized>(
    bank: &B,
    eig: &EigenSystem,
    input: &[Signal],
) -> Result<FeatureMap> {
    let features = bank.features();
    check_input(features, eig, input)?;
    let sigma = bank.activation();
    let lambdas = eig.eigenvalues();
    let mut map = FeatureMap {
        features: vec![input.to_vec()],
        pre_activations: Vec::with_capacity(bank.num_layers()),
    };
    for l in 0..bank.num_layers() {
        let prev = &map.features[l];
        let spectra = prev
            .iter()
            .map(|f| eig.analysis(f))
            .collect::<Result<Vec<_>>>()?;
        let mut pre = Vec::with_capacity(features[l + 1]);
        let mut post = Vec::with_capacity(features[l + 1]);
        for p in 0..features[l + 1] {
            let mut acc = DVector::zeros(eig.dim());
            for (q, c) in spectra.iter().enumerate() {
                for (i, &lam) in lambdas.iter().enumerate() {
                    acc[i] += bank.response(l, p, q, i, lam) * c[i];
                }
            }
            let z = eig.synthesis(&acc)?;
            post.push(z.map(|x| sigma.apply(x)));
            pre.push(z);
        }
        map.pre_activations.push(pre);
        map.features.push(post);
    }
    Ok(map)
}

/// Network output `y^p = f_L^p`.
pub fn forward(params: &MnnParams, eig: &EigenSystem, input: &[Signal]) -> Result<Vec<Signal>> {
    params.validate()?;
    Ok(forward_bank(params, eig, input)?
        .features
        .pop()
        .unwrap_or_default())
}

pub fn forward_retained(
    params: &MnnParams,
    eig: &EigenSystem,
    input: &[Signal],
) -> Result<FeatureMap> {
    params.validate()?;
    forward_bank(params, eig, input)
}

/// Reverse-mode gradient of a scalar loss with respect to every tap, given
/// `loss_grad[p] = ∂loss/∂y^p` and the retained forward state.
///
/// For filter `(l, p, q)` and tap `k` the derivative is
/// `⟨δ_l^p, Φ diag(λ^k) Φᵀ f_{l−1}^q⟩` with `δ_l^p` the back-signal after σ'.
pub fn gradient(
    params: &MnnParams,
    eig: &EigenSystem,
    retained: &FeatureMap,
    loss_grad: &[Signal],
) -> Result<CoeffTensor> {
    params.validate()?;
    let layers = params.layers;
    if retained.features.len() != layers + 1 || retained.pre_activations.len() != layers {
        return Err(Error::invalid(
            "retained feature map does not match the network",
        ));
    }
    ensure_dim(params.features[layers], loss_grad.len())?;
    for g in loss_grad {
        ensure_dim(eig.dim(), g.len())?;
    }
    let lambdas = eig.eigenvalues();
    let n = eig.dim();
    let powers: Vec<Vec<f64>> = lambdas
        .iter()
        .map(|&lam| {
            let mut row = Vec::with_capacity(params.taps);
            let mut x = 1.0;
            for _ in 0..params.taps {
                row.push(x);
                x *= lam;
            }
            row
        })
        .collect();

    let mut grads = zero_tensor(&params.features, params.taps);
    let mut back: Vec<Signal> = loss_grad.to_vec();
    for l in (0..layers).rev() {
        let delta_hat = back
            .iter()
            .zip(&retained.pre_activations[l])
            .map(|(g, z)| {
                let d = g.zip_map(z, |gi, zi| gi * params.activation.derivative(zi));
                eig.analysis(&d)
            })
            .collect::<Result<Vec<_>>>()?;
        let input_hat = retained.features[l]
            .iter()
            .map(|f| eig.analysis(f))
            .collect::<Result<Vec<_>>>()?;
        for (p, dh) in delta_hat.iter().enumerate() {
            for (q, ch) in input_hat.iter().enumerate() {
                let slot = &mut grads[l][p][q];
                for i in 0..n {
                    let w = dh[i] * ch[i];
                    for (k, s) in slot.iter_mut().enumerate() {
                        *s += w * powers[i][k];
                    }
                }
            }
        }
        if l > 0 {
            back = (0..params.features[l])
                .map(|q| {
                    let mut acc = DVector::zeros(n);
                    for (p, dh) in delta_hat.iter().enumerate() {
                        let taps = params.filter(l, p, q);
                        for i in 0..n {
                            acc[i] += frequency_response(taps, lambdas[i]) * dh[i];
                        }
                    }
                    eig.synthesis(&acc)
                })
                .collect::<Result<Vec<_>>>()?;
        }
    }
    Ok(grads)
}
