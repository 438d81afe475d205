//! Browser bindings. Each export takes a JSON request and returns a JSON
//! string; errors surface as thrown JS errors.

use fdtnet::filters::{build_fdt_spec, Response};
use fdtnet::partition::partition_spectrum;
use fdtnet::perturbation::{
    run_filter_stability_trials, summarize, tradeoff_curve, StabilityTrialConfig,
};
use fdtnet::spectral::{build_cycle_laplacian, build_torus_laplacian, sym_eig};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

const MAX_DIMENSION: usize = 400;
const MAX_TRIAL_DIMENSION: usize = 64;
const MAX_TRIALS: usize = 500;

type Result<T> = std::result::Result<T, String>;

#[derive(Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Spectrum {
    Cycle { n: usize },
    Torus { nx: usize, ny: usize },
    Values { values: Vec<f64> },
}

impl Spectrum {
    fn eigenvalues(&self) -> Result<Vec<f64>> {
        let op = match *self {
            Spectrum::Cycle { n } if n <= MAX_DIMENSION => build_cycle_laplacian(n),
            Spectrum::Torus { nx, ny } if nx * ny <= MAX_DIMENSION => build_torus_laplacian(nx, ny),
            Spectrum::Values { ref values } => {
                let mut v = values.clone();
                if v.iter().any(|x| !x.is_finite()) {
                    return Err("eigenvalues must be finite".into());
                }
                v.sort_by(f64::total_cmp);
                return Ok(v);
            }
            _ => return Err(format!("operator larger than {MAX_DIMENSION} nodes")),
        }
        .map_err(err)?;
        Ok(sym_eig(&op).map_err(err)?.eigenvalues().to_vec())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn parse<T: serde::de::DeserializeOwned>(request: &str) -> Result<T> {
    serde_json::from_str(request).map_err(err)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionRequest {
    spectrum: Spectrum,
    alpha: f64,
    response: Response,
    #[serde(default = "default_grid")]
    grid: usize,
}

fn default_grid() -> usize {
    200
}

/// Partition a spectrum at `alpha` and build the FDT filter of `response`.
/// Returns the partition, `h(λ_i)`, the FDT responses and `h` on a grid.
pub fn partition_json(request: &str) -> Result<String> {
    let req: PartitionRequest = parse(request)?;
    let eigs = req.spectrum.eigenvalues()?;
    let part = partition_spectrum(&eigs, req.alpha).map_err(err)?;
    let h = |l: f64| req.response.eval(l);
    let spec = build_fdt_spec(h, &part, &eigs).map_err(err)?;
    let (lo, hi) = (eigs[0], eigs[eigs.len() - 1]);
    let steps = req.grid.clamp(2, 2000);
    let grid: Vec<f64> = (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect();
    Ok(json!({
        "eigenvalues": eigs,
        "singletons": part.singletons(),
        "groups": part.groups().iter().map(|g| [g.start, g.end]).collect::<Vec<_>>(),
        "D": part.d_count(),
        "N": part.n_count(),
        "response": eigs.iter().map(|&l| h(l)).collect::<Vec<_>>(),
        "fdt": (0..eigs.len()).map(|i| spec.target(i)).collect::<Vec<_>>(),
        "grid": grid,
        "grid_response": grid.iter().map(|&l| h(l)).collect::<Vec<_>>(),
    })
    .to_string())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TradeoffRequest {
    spectrum: Spectrum,
    epsilon: f64,
    alpha_min: f64,
    alpha_max: f64,
    #[serde(default = "default_points")]
    points: usize,
    #[serde(default = "default_lipschitz")]
    b: f64,
}

fn default_points() -> usize {
    60
}

fn default_lipschitz() -> f64 {
    1.0
}

/// Filter bound per unit signal norm over a geometric α grid, with each α's
/// own `(D, N)`.
pub fn tradeoff_json(request: &str) -> Result<String> {
    let req: TradeoffRequest = parse(request)?;
    if !(req.alpha_min > 0.0 && req.alpha_max > req.alpha_min) {
        return Err("need 0 < alpha_min < alpha_max".into());
    }
    let eigs = req.spectrum.eigenvalues()?;
    let steps = req.points.clamp(2, 500);
    let ratio = (req.alpha_max / req.alpha_min).ln();
    let alphas: Vec<f64> = (0..steps)
        .map(|i| req.alpha_min * (ratio * i as f64 / (steps - 1) as f64).exp())
        .collect();
    let curve = tradeoff_curve(&eigs, req.epsilon, &alphas, req.b, 1.0).map_err(err)?;
    serde_json::to_string(&json!({ "epsilon": req.epsilon, "points": curve })).map_err(err)
}

/// Randomized filter stability trials: per-trial reports plus a summary.
pub fn stability_json(request: &str) -> Result<String> {
    let cfg: StabilityTrialConfig = parse(request)?;
    if cfg.dimension > MAX_TRIAL_DIMENSION || cfg.trials > MAX_TRIALS {
        return Err(format!(
            "limit is dimension {MAX_TRIAL_DIMENSION} and {MAX_TRIALS} trials in the browser"
        ));
    }
    let reports = run_filter_stability_trials(&cfg).map_err(err)?;
    serde_json::to_string(&json!({ "summary": summarize(&reports), "reports": reports }))
        .map_err(err)
}

#[wasm_bindgen]
pub fn partition(request: &str) -> std::result::Result<String, JsError> {
    partition_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn tradeoff(request: &str) -> std::result::Result<String, JsError> {
    tradeoff_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stability(request: &str) -> std::result::Result<String, JsError> {
    stability_json(request).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn version() -> String {
    fdtnet::VERSION.to_string()
}
