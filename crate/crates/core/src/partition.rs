//! α-separated spectrum partition and Weyl-law helpers.
//!
//! A sorted spectrum is split at every consecutive gap strictly larger than
//! `alpha`. Clusters of size one are the separated eigenvalues `𝒟`; larger
//! clusters are the close groups `𝒩_1 … 𝒩_N`. Boundary gaps count as `+∞`,
//! a gap exactly equal to `alpha` does not split, and repeated eigenvalues
//! always share a cluster.

use std::f64::consts::PI;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPartition {
    alpha: f64,
    len: usize,
    singletons: Vec<usize>,
    groups: Vec<Range<usize>>,
}

impl SpectrumPartition {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Number of eigenvalues covered.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Indices of the α-separated eigenvalues `𝒟`.
    pub fn singletons(&self) -> &[usize] {
        &self.singletons
    }

    /// Contiguous index ranges of the groups `𝒩_n`, in ascending order.
    pub fn groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    /// `D = |𝒟|`.
    pub fn d_count(&self) -> usize {
        self.singletons.len()
    }

    /// `N = |𝒩|`, the number of groups.
    pub fn n_count(&self) -> usize {
        self.groups.len()
    }

    /// All clusters (singletons and groups) as index ranges, in spectral order.
    pub fn clusters(&self) -> Vec<Range<usize>> {
        let mut out: Vec<Range<usize>> = self
            .singletons
            .iter()
            .map(|&i| i..i + 1)
            .chain(self.groups.iter().cloned())
            .collect();
        out.sort_by_key(|r| r.start);
        out
    }

    /// Group number containing eigen index `i`, if any.
    pub fn group_of(&self, i: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&i))
    }

    /// True when every cluster of `finer` lies inside one cluster of `self`.
    pub fn is_coarsening_of(&self, finer: &SpectrumPartition) -> bool {
        if self.len != finer.len {
            return false;
        }
        let coarse = self.clusters();
        finer
            .clusters()
            .iter()
            .all(|c| coarse.iter().any(|k| k.start <= c.start && c.end <= k.end))
    }
}

/// Single-linkage split of an ascending spectrum at gaps `> alpha`.
pub fn partition_spectrum(eigenvalues: &[f64], alpha: f64) -> Result<SpectrumPartition> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::invalid(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("eigenvalues must be finite"));
    }
    if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("eigenvalues must be sorted ascending"));
    }
    let mut singletons = Vec::new();
    let mut groups = Vec::new();
    let mut start = 0;
    for i in 1..=eigenvalues.len() {
        let split = i == eigenvalues.len() || eigenvalues[i] - eigenvalues[i - 1] > alpha;
        if split {
            if i - start == 1 {
                singletons.push(start);
            } else {
                groups.push(start..i);
            }
            start = i;
        }
    }
    Ok(SpectrumPartition {
        alpha,
        len: eigenvalues.len(),
        singletons,
        groups,
    })
}

/// Volume of the unit ball in `R^d`, via `V_d = 2π/d · V_{d−2}`.
pub fn unit_ball_volume(d: u32) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}

/// Index `N₁` beyond which consecutive eigenvalue gaps of a `d`-dimensional
/// manifold are at most `alpha`:
///
/// `N₁ = ⌈(α d / C₁)^{d/(2−d)} (C_d Vol)^{2/(2−d)}⌉`
///
/// with `C_d` the unit-ball volume. The exponents are singular at `d = 2`,
/// which is refused.
pub fn weyl_gap_index(alpha: f64, d: u32, c1: f64, volume: f64) -> Result<u64> {
    if d == 2 {
        return Err(Error::UnsupportedDimension(2));
    }
    if d == 0 {
        return Err(Error::invalid("manifold dimension must be >= 1"));
    }
    for (name, v) in [("alpha", alpha), ("c1", c1), ("volume", volume)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let df = d as f64;
    let value = (alpha * df / c1).powf(df / (2.0 - df))
        * (unit_ball_volume(d) * volume).powf(2.0 / (2.0 - df));
    if !value.is_finite() || value > u64::MAX as f64 {
        return Err(Error::invalid(format!("gap index overflows: {value:e}")));
    }
    Ok((value.ceil() as u64).max(1))
}

/// Least-squares slope of `log λ_k` against `log k` for `k ∈ [k_lo, k_hi]`
/// (indices into the ascending spectrum, so `k_lo ≥ 1` skips the kernel).
pub fn weyl_law_fit(eigenvalues: &[f64], k_lo: usize, k_hi: usize) -> Result<f64> {
    if k_lo < 1 || k_hi <= k_lo || k_hi >= eigenvalues.len() {
        return Err(Error::invalid(format!(
            "index range [{k_lo}, {k_hi}] must satisfy 1 <= k_lo < k_hi <= {}",
            eigenvalues.len().saturating_sub(1)
        )));
    }
    let mut xs = Vec::with_capacity(k_hi - k_lo + 1);
    let mut ys = Vec::with_capacity(k_hi - k_lo + 1);
    for k in k_lo..=k_hi {
        let lam = eigenvalues[k];
        if !(lam > 0.0) {
            return Err(Error::invalid(format!(
                "eigenvalue {k} is not positive ({lam})"
            )));
        }
        xs.push((k as f64).ln());
        ys.push(lam.ln());
    }
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
