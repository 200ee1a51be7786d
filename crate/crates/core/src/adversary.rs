//! Bayesian differential-identifiability adversary and the loss-threshold
//! membership-inference adversary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::dp::{log_density, perturb, NoiseScale};
use crate::error::{check_dims, Error, Result};
use crate::learner::Network;

/// One of the two candidate training datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    D,
    DPrime,
}

impl Hypothesis {
    /// `secret_bit == 1` selects `D`.
    pub fn from_bit(bit: u8) -> Self {
        if bit == 1 {
            Hypothesis::D
        } else {
            Hypothesis::DPrime
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Hypothesis::D => 1,
            Hypothesis::DPrime => 0,
        }
    }
}

/// Posterior beliefs over `(D, D')`, carried by the accumulated log
/// likelihood ratio `sum log p'(r_i) - log p(r_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    pub belief_d: f64,
    pub belief_d_prime: f64,
    pub log_likelihood_ratio: f64,
    pub steps_observed: usize,
}

impl Default for BeliefState {
    fn default() -> Self {
        Self::uniform()
    }
}

impl BeliefState {
    pub fn uniform() -> Self {
        Self::from_ratio(0.0, 0)
    }

    /// Initial state with prior `prior_d` on `D`.
    pub fn with_prior(prior_d: f64) -> Result<Self> {
        if !(prior_d > 0.0 && prior_d < 1.0) {
            return Err(Error::Domain(format!("prior must lie in (0, 1), got {prior_d}")));
        }
        Ok(Self::from_ratio(((1.0 - prior_d) / prior_d).ln(), 0))
    }

    fn from_ratio(log_likelihood_ratio: f64, steps_observed: usize) -> Self {
        Self {
            belief_d: 1.0 / (1.0 + log_likelihood_ratio.exp()),
            belief_d_prime: 1.0 / (1.0 + (-log_likelihood_ratio).exp()),
            log_likelihood_ratio,
            steps_observed,
        }
    }

    pub fn belief(&self, h: Hypothesis) -> f64 {
        match h {
            Hypothesis::D => self.belief_d,
            Hypothesis::DPrime => self.belief_d_prime,
        }
    }
}

/// Bayes update on one Gaussian release with hypothesis centers
/// `center_d` and `center_d_prime`.
pub fn update_belief(
    state: &BeliefState,
    observed: &[f64],
    center_d: &[f64],
    center_d_prime: &[f64],
    sigma: NoiseScale,
) -> Result<BeliefState> {
    check_dims(center_d.len(), center_d_prime.len())?;
    let step = log_density(observed, center_d_prime, sigma)? - log_density(observed, center_d, sigma)?;
    Ok(BeliefState::from_ratio(
        state.log_likelihood_ratio + step,
        state.steps_observed + 1,
    ))
}

/// Update on a noiseless release: the observation either matches exactly one
/// center, which settles the game, or both, which carries no information.
pub fn update_belief_noiseless(
    state: &BeliefState,
    observed: &[f64],
    center_d: &[f64],
    center_d_prime: &[f64],
) -> Result<BeliefState> {
    check_dims(center_d.len(), center_d_prime.len())?;
    check_dims(center_d.len(), observed.len())?;
    let on_d = observed == center_d;
    let on_d_prime = observed == center_d_prime;
    let ratio = match (on_d, on_d_prime) {
        (true, false) => f64::NEG_INFINITY,
        (false, true) => f64::INFINITY,
        _ => state.log_likelihood_ratio,
    };
    Ok(BeliefState::from_ratio(ratio, state.steps_observed + 1))
}

/// Chooses the hypothesis with the larger belief; an exact tie goes to `D`.
pub fn decide(state: &BeliefState) -> Hypothesis {
    if state.belief_d >= state.belief_d_prime {
        Hypothesis::D
    } else {
        Hypothesis::DPrime
    }
}

/// What the adversary knows about one release before it happens.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSetup {
    pub center_d: Vec<f64>,
    pub center_d_prime: Vec<f64>,
    pub sigma: NoiseScale,
}

/// A sequence of Gaussian releases whose centers may depend on earlier
/// releases.
pub trait AdaptiveMechanism {
    /// Hypothesis centers and noise scale of release `step`.
    fn setup(&mut self, step: usize) -> Result<StepSetup>;

    /// The value released at `step`, so the mechanism can advance.
    fn observe(&mut self, _step: usize, _released: &[f64]) -> Result<()> {
        Ok(())
    }
}

/// The same pair of centers and noise at every step, e.g. a repeated sum query.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedMechanism {
    pub center_d: Vec<f64>,
    pub center_d_prime: Vec<f64>,
    pub sigma: NoiseScale,
}

impl AdaptiveMechanism for FixedMechanism {
    fn setup(&mut self, _step: usize) -> Result<StepSetup> {
        Ok(StepSetup {
            center_d: self.center_d.clone(),
            center_d_prime: self.center_d_prime.clone(),
            sigma: self.sigma,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiOutcome {
    pub final_state: BeliefState,
    pub chosen: Hypothesis,
    pub secret_bit: u8,
    pub win: bool,
    /// Belief in `D` after every step.
    pub belief_trajectory: Vec<f64>,
}

impl DiOutcome {
    pub fn secret(&self) -> Hypothesis {
        Hypothesis::from_bit(self.secret_bit)
    }

    /// Final belief in the dataset that was actually used.
    pub fn belief_in_secret(&self) -> f64 {
        self.final_state.belief(self.secret())
    }
}

/// Differential-identifiability game with a uniformly drawn secret bit.
pub fn run_di_experiment<M, R>(mechanism: &mut M, steps: usize, rng: &mut R) -> Result<DiOutcome>
where
    M: AdaptiveMechanism + ?Sized,
    R: Rng + ?Sized,
{
    let secret_bit: u8 = rng.random_range(0..=1);
    run_di_experiment_with_secret(mechanism, steps, Hypothesis::from_bit(secret_bit), rng)
}

/// Differential-identifiability game with a fixed secret.
pub fn run_di_experiment_with_secret<M, R>(
    mechanism: &mut M,
    steps: usize,
    secret: Hypothesis,
    rng: &mut R,
) -> Result<DiOutcome>
where
    M: AdaptiveMechanism + ?Sized,
    R: Rng + ?Sized,
{
    if steps == 0 {
        return Err(Error::Config("an experiment needs at least one step".into()));
    }
    let mut state = BeliefState::uniform();
    let mut trajectory = Vec::with_capacity(steps);
    for step in 0..steps {
        let setup = mechanism.setup(step)?;
        let center = match secret {
            Hypothesis::D => &setup.center_d,
            Hypothesis::DPrime => &setup.center_d_prime,
        };
        let released = perturb(center, setup.sigma, rng);
        state = if setup.sigma.get() > 0.0 {
            update_belief(&state, &released, &setup.center_d, &setup.center_d_prime, setup.sigma)?
        } else {
            update_belief_noiseless(&state, &released, &setup.center_d, &setup.center_d_prime)?
        };
        trajectory.push(state.belief_d);
        mechanism.observe(step, &released)?;
    }
    let chosen = decide(&state);
    Ok(DiOutcome {
        final_state: state,
        chosen,
        secret_bit: secret.bit(),
        win: chosen == secret,
        belief_trajectory: trajectory,
    })
}

/// Mean per-example loss of `model` on its training set, the threshold of
/// the loss-based membership adversary.
pub fn mean_training_loss(model: &Network, train_set: &TabularDataset) -> Result<f64> {
    model.mean_loss(train_set)
}

/// One membership-inference game.
///
/// The challenger flips `b`; for `b = 1` it presents a uniformly chosen
/// training record, otherwise a fresh draw from `sample_distribution`. The
/// adversary answers 1 iff the model's loss on the record is at most
/// `threshold`.
pub fn run_mi_experiment<R, S>(
    model: &Network,
    train_set: &TabularDataset,
    mut sample_distribution: S,
    threshold: f64,
    rng: &mut R,
) -> Result<bool>
where
    R: Rng + ?Sized,
    S: FnMut(&mut R) -> (Vec<f64>, Vec<f64>),
{
    if train_set.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let b: u8 = rng.random_range(0..=1);
    let loss = if b == 1 {
        let i = rng.random_range(0..train_set.len());
        model.loss(&train_set.features[i], &train_set.labels[i])?
    } else {
        let (x, y) = sample_distribution(rng);
        model.loss(&x, &y)?
    };
    let guess = u8::from(loss <= threshold);
    Ok(guess == b)
}

/// `2 wins / n - 1`.
pub fn estimate_advantage(wins: usize, n_exp: usize) -> Result<f64> {
    if n_exp == 0 {
        return Err(Error::Empty("experiments"));
    }
    if wins > n_exp {
        return Err(Error::Domain(format!("{wins} wins out of {n_exp} experiments")));
    }
    Ok(2.0 * wins as f64 / n_exp as f64 - 1.0)
}

/// Normal-approximation standard error of an advantage estimate.
pub fn advantage_standard_error(advantage: f64, n_exp: usize) -> f64 {
    let p = ((advantage + 1.0) / 2.0).clamp(0.0, 1.0);
    2.0 * (p * (1.0 - p) / n_exp.max(1) as f64).sqrt()
}
