//! Gaussian mechanism, noise calibration and a Rényi-DP accountant.
//!
//! All noise scales are expressed in the units of the query output, so a
//! noise multiplier is `sigma / sensitivity`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, domain, Error, Result};

/// An `(epsilon, delta)` guarantee over `steps` compositions of a query
/// with l2-sensitivity `sensitivity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
    pub steps: usize,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64, sensitivity: f64, steps: usize) -> Result<Self> {
        let params = Self {
            epsilon,
            delta,
            sensitivity,
            steps,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_epsilon(self.epsilon)?;
        check_delta(self.delta)?;
        check_sensitivity(self.sensitivity)?;
        if self.steps == 0 {
            return Err(domain("steps must be at least 1"));
        }
        Ok(())
    }
}

/// An `(alpha, eps_rdp)` Rényi-DP guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpGuarantee {
    pub alpha: f64,
    pub eps_rdp: f64,
}

impl RdpGuarantee {
    pub fn new(alpha: f64, eps_rdp: f64) -> Result<Self> {
        if !(alpha > 1.0) {
            return Err(domain(format!("Renyi order must exceed 1, got {alpha}")));
        }
        if !(eps_rdp >= 0.0) {
            return Err(domain(format!("RDP epsilon must be nonnegative, got {eps_rdp}")));
        }
        Ok(Self { alpha, eps_rdp })
    }
}

/// Standard deviation of isotropic Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub const ZERO: NoiseScale = NoiseScale(0.0);

    pub fn new(sigma: f64) -> Result<Self> {
        if sigma >= 0.0 {
            Ok(Self(sigma))
        } else {
            Err(domain(format!("noise scale must be nonnegative, got {sigma}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    fn positive(self) -> Result<f64> {
        if self.0 > 0.0 {
            Ok(self.0)
        } else {
            Err(domain("noise scale must be positive"))
        }
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("epsilon must be positive and finite, got {epsilon}")))
    }
}

pub(crate) fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn check_sensitivity(sensitivity: f64) -> Result<()> {
    if sensitivity > 0.0 && sensitivity.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("sensitivity must be positive, got {sensitivity}")))
    }
}

/// `sqrt(2 ln(1.25 / delta))`, the tail factor of the classical calibration.
pub fn gaussian_tail_factor(delta: f64) -> f64 {
    (2.0 * (1.25 / delta).ln()).sqrt()
}

/// Classical calibration `sigma = sensitivity * sqrt(2 ln(1.25/delta)) / epsilon`,
/// taken with equality.
pub fn gaussian_sigma(epsilon: f64, delta: f64, sensitivity: f64) -> Result<NoiseScale> {
    check_epsilon(epsilon)?;
    check_delta(delta)?;
    check_sensitivity(sensitivity)?;
    NoiseScale::new(sensitivity * gaussian_tail_factor(delta) / epsilon)
}

/// Inverse of [`gaussian_sigma`]: the epsilon implied by a noise scale.
pub fn gaussian_epsilon(sigma: NoiseScale, delta: f64, sensitivity: f64) -> Result<f64> {
    let sigma = sigma.positive()?;
    check_delta(delta)?;
    check_sensitivity(sensitivity)?;
    Ok(sensitivity * gaussian_tail_factor(delta) / sigma)
}

/// Adds i.i.d. `Normal(0, sigma^2)` noise to every coordinate.
///
/// With `sigma == 0` the center is returned unchanged and no randomness is
/// consumed.
pub fn perturb<R: Rng + ?Sized>(center: &[f64], sigma: NoiseScale, rng: &mut R) -> Vec<f64> {
    let s = sigma.get();
    if s == 0.0 {
        return center.to_vec();
    }
    center
        .iter()
        .map(|&c| {
            let n: f64 = rng.sample(StandardNormal);
            c + s * n
        })
        .collect()
}

/// Log of the isotropic Gaussian density up to the normalizing constant:
/// `-||observed - center||^2 / (2 sigma^2)`.
pub fn log_density(observed: &[f64], center: &[f64], sigma: NoiseScale) -> Result<f64> {
    let sigma = sigma.positive()?;
    check_dims(center.len(), observed.len())?;
    let sq: f64 = observed
        .iter()
        .zip(center)
        .map(|(o, c)| (o - c) * (o - c))
        .sum();
    Ok(-sq / (2.0 * sigma * sigma))
}

/// Rényi guarantee of one Gaussian release: `alpha * sensitivity^2 / (2 sigma^2)`.
pub fn rdp_epsilon_per_step(alpha: f64, sensitivity: f64, sigma: NoiseScale) -> Result<RdpGuarantee> {
    let sigma = sigma.positive()?;
    check_sensitivity(sensitivity)?;
    RdpGuarantee::new(alpha, alpha * sensitivity * sensitivity / (2.0 * sigma * sigma))
}

/// Converts an RDP guarantee to `(eps_rdp + ln(1/delta)/(alpha-1), delta)`-DP.
pub fn rdp_to_dp(g: RdpGuarantee, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(g.eps_rdp + (1.0 / delta).ln() / (g.alpha - 1.0))
}

/// Additive composition of RDP guarantees sharing one order.
pub fn rdp_compose(per_step: &[RdpGuarantee]) -> Result<RdpGuarantee> {
    let first = per_step.first().ok_or(Error::Empty("RDP guarantees"))?;
    if let Some(bad) = per_step.iter().find(|g| g.alpha != first.alpha) {
        return Err(domain(format!(
            "cannot compose RDP guarantees of orders {} and {}",
            first.alpha, bad.alpha
        )));
    }
    RdpGuarantee::new(first.alpha, exact_sum(per_step.iter().map(|g| g.eps_rdp)))
}

/// Correctly rounded sum of finite values (Shewchuk's partials), so that
/// composing `k` copies of `e` gives exactly `k * e`.
fn exact_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }
    let Some(mut n) = partials.len().checked_sub(1) else {
        return 0.0;
    };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    // round half to even across the remaining partials
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

/// Per-step calibration derived from a composed budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetSplit {
    /// Noise scale of every step, in sensitivity units of the query.
    pub sigma: NoiseScale,
    /// `sigma / sensitivity`.
    pub noise_multiplier: f64,
    /// Composed Rényi term `a = k * sensitivity^2 / (2 sigma^2)`.
    pub composed_term: f64,
    /// Rényi order at which the composed conversion is tight.
    pub alpha_star: f64,
    /// Single-step guarantee converted at `delta`, for display.
    pub per_step_epsilon: f64,
    pub per_step_delta: f64,
}

/// Splits `total` equally over its steps so that k-fold RDP composition
/// converted at `total.delta` spends exactly `total.epsilon`.
///
/// Minimizing `alpha * a + b / (alpha - 1)` over `alpha` gives
/// `epsilon = a + 2 sqrt(a b)` with `b = ln(1/delta)`, hence
/// `sqrt(a) = sqrt(b + epsilon) - sqrt(b)`.
pub fn budget_split(total: &PrivacyParams) -> Result<BudgetSplit> {
    total.validate()?;
    let b = (1.0 / total.delta).ln();
    let root = (b + total.epsilon).sqrt() - b.sqrt();
    let a = root * root;
    let alpha_star = 1.0 + (b / a).sqrt();
    let k = total.steps as f64;
    let noise_multiplier = (k / (2.0 * a)).sqrt();
    let sigma = NoiseScale::new(total.sensitivity * noise_multiplier)?;
    let single = rdp_epsilon_per_step(alpha_star, total.sensitivity, sigma)?;
    Ok(BudgetSplit {
        sigma,
        noise_multiplier,
        composed_term: a,
        alpha_star,
        per_step_epsilon: rdp_to_dp(single, total.delta)?,
        per_step_delta: total.delta,
    })
}

/// Fixed Rényi orders searched in addition to the closed-form optimum.
pub fn alpha_grid() -> Vec<f64> {
    let mut grid = vec![1.25, 1.5];
    grid.extend((2..=64).map(f64::from));
    grid.extend([128.0, 256.0]);
    grid
}

/// Epsilon spent by a sequence of Gaussian releases with the given noise
/// multipliers, converted at `delta`.
///
/// Infinite multipliers contribute no privacy loss.
pub fn accountant_epsilon(noise_multipliers: &[f64], delta: f64) -> Result<f64> {
    if noise_multipliers.is_empty() {
        return Err(Error::Empty("noise multipliers"));
    }
    check_delta(delta)?;
    if let Some(m) = noise_multipliers.iter().find(|m| !(**m > 0.0)) {
        return Err(domain(format!("noise multipliers must be positive, got {m}")));
    }
    // sum_i alpha / (2 m_i^2) = alpha * rate
    let rate: f64 = noise_multipliers.iter().map(|m| 0.5 / (m * m)).sum();
    let b = (1.0 / delta).ln();
    if rate == 0.0 {
        return Ok(0.0);
    }
    let spend = |alpha: f64| alpha * rate + b / (alpha - 1.0);
    let closed = 1.0 + (b / rate).sqrt();
    let best = alpha_grid()
        .into_iter()
        .chain(std::iter::once(closed).filter(|a| a.is_finite()))
        .map(spend)
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}
