//! Identifiability bounds derived from `(epsilon, delta)` guarantees.
//!
//! `rho_beta` caps the posterior belief of the differential-identifiability
//! adversary; `rho_alpha` caps its expected membership advantage against the
//! Gaussian mechanism.

use serde::{Deserialize, Serialize};

use crate::dp::{check_delta, gaussian_tail_factor, NoiseScale, RdpGuarantee};
use crate::error::{check_dims, domain, Error, Result};
pub use crate::normal::{phi, phi_inv};

/// Maximum posterior belief and the probability with which it holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefBound {
    pub rho_beta: f64,
    pub holds_with_probability: f64,
}

/// Bound on the expected membership advantage.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AdvantageBound(pub f64);

impl AdvantageBound {
    pub fn rho_alpha(self) -> f64 {
        self.0
    }
}

/// `rho_beta = 1 / (1 + exp(-sum eps_i))`, holding with probability
/// `1 - sum delta_i` (clamped at zero).
pub fn posterior_bound(eps_list: &[f64], delta_list: &[f64]) -> Result<BeliefBound> {
    if eps_list.is_empty() {
        return Err(Error::Empty("epsilon list"));
    }
    check_dims(eps_list.len(), delta_list.len())?;
    if let Some(e) = eps_list.iter().find(|e| !(**e >= 0.0)) {
        return Err(domain(format!("epsilon must be nonnegative, got {e}")));
    }
    if let Some(d) = delta_list.iter().find(|d| !(0.0..1.0).contains(*d)) {
        return Err(domain(format!("delta must lie in [0, 1), got {d}")));
    }
    let total_eps: f64 = eps_list.iter().sum();
    let total_delta: f64 = delta_list.iter().sum();
    Ok(BeliefBound {
        rho_beta: logistic(total_eps),
        holds_with_probability: (1.0 - total_delta).max(0.0),
    })
}

pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Total epsilon that keeps the posterior belief below `rho_beta`:
/// `ln(rho_beta / (1 - rho_beta))`.
pub fn eps_from_posterior_bound(rho_beta: f64) -> Result<f64> {
    if !(0.5..1.0).contains(&rho_beta) {
        return Err(domain(format!("belief bound must lie in [0.5, 1), got {rho_beta}")));
    }
    Ok((rho_beta / (1.0 - rho_beta)).ln())
}

/// General advantage bound `(e^eps - 1) * false_positive_rate`.
///
/// Not clamped; values at or above one are vacuous.
pub fn advantage_bound_general(epsilon: f64, false_positive_rate: f64) -> f64 {
    epsilon.exp_m1() * false_positive_rate
}

/// Tight expected-advantage bound for the classically calibrated Gaussian
/// mechanism: `2 Phi(eps / (2 sqrt(2 ln(1.25/delta)))) - 1`.
pub fn advantage_bound_gaussian(epsilon: f64, delta: f64) -> Result<AdvantageBound> {
    if !(epsilon >= 0.0) {
        return Err(domain(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    check_delta(delta)?;
    Ok(AdvantageBound(
        2.0 * phi(epsilon / (2.0 * gaussian_tail_factor(delta))) - 1.0,
    ))
}

/// Inverse of [`advantage_bound_gaussian`]:
/// `eps = 2 sqrt(2 ln(1.25/delta)) * Phi^-1((rho_alpha + 1) / 2)`.
pub fn eps_from_advantage(rho_alpha: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho_alpha) {
        return Err(domain(format!("advantage must lie in [0, 1), got {rho_alpha}")));
    }
    check_delta(delta)?;
    Ok(2.0 * gaussian_tail_factor(delta) * phi_inv((rho_alpha + 1.0) / 2.0))
}

/// Advantage bound of a (possibly composed) Gaussian RDP guarantee:
/// `2 Phi(sqrt(eps_rdp / (2 alpha))) - 1`.
pub fn advantage_bound_rdp(g: RdpGuarantee) -> AdvantageBound {
    AdvantageBound(2.0 * phi((g.eps_rdp / (2.0 * g.alpha)).sqrt()) - 1.0)
}

/// Exact expected advantage of the Bayes adversary choosing between two
/// isotropic Gaussians with equal priors: `2 Phi(||a - b|| / (2 sigma)) - 1`.
pub fn mahalanobis_advantage(center_a: &[f64], center_b: &[f64], sigma: NoiseScale) -> Result<f64> {
    check_dims(center_a.len(), center_b.len())?;
    let s = sigma.get();
    if !(s > 0.0) {
        return Err(domain("noise scale must be positive"));
    }
    let dist = center_a
        .iter()
        .zip(center_b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok(2.0 * phi(dist / (2.0 * s)) - 1.0)
}
