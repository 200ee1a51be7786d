//! Browser bindings: bound curves, parameter calibration and the repeated
//! sum-query adversary, each returning a JSON string for the page to plot.

use dpident_core::audit::{run_synthetic_campaign, SyntheticConfig};
use dpident_core::bounds::{advantage_bound_gaussian, eps_from_advantage, eps_from_posterior_bound, posterior_bound};
use dpident_core::dp::{budget_split, gaussian_sigma, PrivacyParams};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const MAX_CURVE_POINTS: usize = 2000;
const MAX_RUNS: usize = 20_000;

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub epsilon: f64,
    pub rho_beta: f64,
    pub rho_alpha: f64,
}

#[derive(Debug, Serialize)]
pub struct Calibration {
    pub epsilon: f64,
    pub delta: f64,
    pub rho_beta: f64,
    pub rho_alpha: f64,
    pub sigma_single_release: f64,
    pub sigma_per_step: f64,
}

#[derive(Debug, Serialize)]
pub struct SyntheticView {
    pub runs: usize,
    pub steps: usize,
    pub sigma_per_step: f64,
    pub rho_beta: f64,
    pub rho_alpha_composed: f64,
    pub win_rate: f64,
    pub advantage: f64,
    pub delta_prime: f64,
    /// `(lo, hi, count)` of the final belief in the true dataset.
    pub histogram: Vec<(f64, f64, usize)>,
    /// Belief in `D` after every release of the first run.
    pub sample_beliefs: Vec<f64>,
    pub sample_releases: Vec<f64>,
}

fn to_js<T: Serialize>(value: dpident_core::Result<T>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

pub fn curve(eps_max: f64, delta: f64, points: usize) -> dpident_core::Result<Vec<CurvePoint>> {
    if !(eps_max > 0.0 && eps_max.is_finite()) {
        return Err(dpident_core::Error::Domain(format!("eps_max must be positive, got {eps_max}")));
    }
    let points = points.clamp(2, MAX_CURVE_POINTS);
    (1..=points)
        .map(|i| {
            let epsilon = eps_max * i as f64 / points as f64;
            Ok(CurvePoint {
                epsilon,
                rho_beta: posterior_bound(&[epsilon], &[delta])?.rho_beta,
                rho_alpha: advantage_bound_gaussian(epsilon, delta)?.rho_alpha(),
            })
        })
        .collect()
}

/// `kind` is one of `epsilon`, `rho_beta`, `rho_alpha`.
pub fn calibration(kind: &str, value: f64, delta: f64, steps: usize) -> dpident_core::Result<Calibration> {
    let epsilon = match kind {
        "epsilon" => value,
        "rho_beta" => eps_from_posterior_bound(value)?,
        "rho_alpha" => eps_from_advantage(value, delta)?,
        other => return Err(dpident_core::Error::Config(format!("unknown target {other:?}"))),
    };
    let split = budget_split(&PrivacyParams::new(epsilon, delta, 1.0, steps.max(1))?)?;
    Ok(Calibration {
        epsilon,
        delta,
        rho_beta: posterior_bound(&[epsilon], &[delta])?.rho_beta,
        rho_alpha: advantage_bound_gaussian(epsilon, delta)?.rho_alpha(),
        sigma_single_release: gaussian_sigma(epsilon, delta, 1.0)?.get(),
        sigma_per_step: split.sigma.get(),
    })
}

pub fn synthetic(epsilon: f64, delta: f64, steps: usize, runs: usize, seed: u64) -> dpident_core::Result<SyntheticView> {
    let out = run_synthetic_campaign(&SyntheticConfig {
        epsilon,
        delta,
        steps,
        runs: runs.min(MAX_RUNS),
        seed,
        histogram_bins: 20,
    })?;
    let r = &out.report;
    Ok(SyntheticView {
        runs: r.n_exp,
        steps: r.steps,
        sigma_per_step: out.sigma_per_step,
        rho_beta: r.rho_beta,
        rho_alpha_composed: r.rho_alpha_composed,
        win_rate: r.wins as f64 / r.n_exp as f64,
        advantage: r.advantage,
        delta_prime: r.delta_prime,
        histogram: r.histogram.iter().map(|b| (b.lo, b.hi, b.count)).collect(),
        sample_beliefs: out.sample_run.belief_trajectory.clone(),
        sample_releases: out.sample_releases,
    })
}

/// Bound curves over `(0, eps_max]` at a fixed delta.
#[wasm_bindgen(js_name = boundsCurve)]
pub fn bounds_curve(eps_max: f64, delta: f64, points: usize) -> Result<String, JsError> {
    to_js(curve(eps_max, delta, points))
}

#[wasm_bindgen]
pub fn calibrate(kind: &str, value: f64, delta: f64, steps: usize) -> Result<String, JsError> {
    to_js(calibration(kind, value, delta, steps))
}

/// Seeds are passed as `f64` since JS numbers cannot carry a full `u64`.
#[wasm_bindgen(js_name = syntheticRun)]
pub fn synthetic_run(epsilon: f64, delta: f64, steps: usize, runs: usize, seed: f64) -> Result<String, JsError> {
    to_js(synthetic(epsilon, delta, steps, runs, seed.max(0.0) as u64))
}
