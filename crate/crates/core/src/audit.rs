//! Repeated identifiability experiments and empirical privacy-loss audits.
//!
//! A campaign fixes a training set `D`, its most dissimilar neighbor `D'`
//! and a per-step privacy budget, then replays DPSGD training many times
//! with independent random streams. Each repetition is scored by the
//! Bayesian adversary; the report estimates the empirical `epsilon'` from
//! observed sensitivities, from final beliefs and from the advantage, plus
//! the empirical `delta'`.

use std::path::PathBuf;

use log::warn;
use rand::Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    advantage_standard_error, estimate_advantage, run_di_experiment, run_di_experiment_with_secret,
    run_mi_experiment, AdaptiveMechanism, DiOutcome, FixedMechanism, Hypothesis, StepSetup,
};
use crate::bounds::{
    advantage_bound_gaussian, advantage_bound_rdp, eps_from_advantage, eps_from_posterior_bound,
    posterior_bound,
};
use crate::data::{load_csv, synth_blobs, wage_universe, CsvOptions, TabularDataset};
use crate::dp::{accountant_epsilon, budget_split, BudgetSplit, NoiseScale, PrivacyParams, RdpGuarantee};
use crate::error::{Error, Result};
use crate::learner::{batch_clipped_gradient, l2_norm, Network};
use crate::rng::{stream, Domain};
use crate::sensitivity::{
    approx_local_sensitivity, local_sensitivity_step, neighboring_dataset, select_neighbor,
    DissimilarityMeasure, NeighborMode, Selection,
};

/// Largest belief fed into the logit when estimating epsilon from beliefs.
pub const BELIEF_CLAMP: f64 = 1.0 - 1e-12;

/// How the overall privacy target is stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Epsilon(f64),
    RhoBeta(f64),
}

impl Target {
    pub fn epsilon(self) -> Result<f64> {
        match self {
            Target::Epsilon(e) => Ok(e),
            Target::RhoBeta(r) => eps_from_posterior_bound(r),
        }
    }
}

/// Sensitivity used to calibrate the noise of each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensitivitySource {
    /// `C` for removal neighbors, `2C` for replacement neighbors.
    Global,
    /// Exact local sensitivity between the clipped batch gradients of `D` and `D'`.
    Local,
    /// Norm of the selected records' clipped gradients.
    Heuristic,
}

impl std::str::FromStr for SensitivitySource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Self::Global),
            "local" => Ok(Self::Local),
            "heuristic" | "dataset" => Ok(Self::Heuristic),
            other => Err(Error::Config(format!("unknown sensitivity source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_clip")]
    pub clipping_norm: f64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![16]
}
fn default_clip() -> f64 {
    3.0
}
fn default_lr() -> f64 {
    1.0
}
fn default_steps() -> usize {
    30
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            hidden: default_hidden(),
            clipping_norm: default_clip(),
            learning_rate: default_lr(),
            steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// `n` training rows plus `pool` rows of the same distribution.
    Blobs {
        n: usize,
        d: usize,
        classes: usize,
        separation: f64,
        pool: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// The first `train_size` complete rows form `D`, the rest the pool.
    Csv {
        path: PathBuf,
        label_column: String,
        train_size: usize,
        #[serde(default)]
        options: CsvOptions,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub target: Target,
    pub delta: f64,
    pub mode: NeighborMode,
    pub sensitivity: SensitivitySource,
    #[serde(default = "default_measure")]
    pub measure: DissimilarityMeasure,
    pub n_exp: usize,
    #[serde(default)]
    pub train: TrainSettings,
    pub data: DataSource,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
}

fn default_measure() -> DissimilarityMeasure {
    DissimilarityMeasure::Euclidean
}
fn default_bins() -> usize {
    20
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_exp == 0 {
            return Err(Error::Config("n_exp must be at least 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be at least 1".into()));
        }
        if self.train.steps == 0 || !(self.train.clipping_norm > 0.0) || !(self.train.learning_rate > 0.0) {
            return Err(Error::Config("training needs steps >= 1 and positive clipping norm and learning rate".into()));
        }
        if self.train.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let eps = self.target.epsilon().map_err(|e| Error::Config(e.to_string()))?;
        PrivacyParams::new(eps, self.delta, 1.0, self.train.steps).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn global_sensitivity(&self) -> f64 {
        global_sensitivity(self.train.clipping_norm, self.mode)
    }
}

pub fn global_sensitivity(clipping_norm: f64, mode: NeighborMode) -> f64 {
    match mode {
        NeighborMode::Unbounded => clipping_norm,
        NeighborMode::Bounded => 2.0 * clipping_norm,
    }
}

/// Data, neighbor and budget shared by every repetition of a campaign.
#[derive(Debug, Clone)]
pub struct PreparedCampaign {
    pub config: CampaignConfig,
    pub d: TabularDataset,
    pub d_prime: TabularDataset,
    pub pool: TabularDataset,
    pub selection: Selection,
    pub epsilon: f64,
    /// Split for unit sensitivity; `noise_multiplier` scales any sensitivity.
    pub split: BudgetSplit,
    pub layer_sizes: Vec<usize>,
}

impl PreparedCampaign {
    /// Loads the data, selects the most dissimilar neighbor once and splits
    /// the budget.
    pub fn new(config: &CampaignConfig) -> Result<Self> {
        config.validate()?;
        let (d, pool) = match &config.data {
            DataSource::Blobs {
                n,
                d,
                classes,
                separation,
                pool,
                seed,
            } => {
                let all = synth_blobs(n + pool, *d, *classes, *separation, seed.unwrap_or(config.seed))?;
                all.split_at(*n)
            }
            DataSource::Csv {
                path,
                label_column,
                train_size,
                options,
            } => {
                let all = load_csv(path, label_column, options)?;
                if all.len() <= *train_size && config.mode == NeighborMode::Bounded {
                    return Err(Error::Data("bounded neighbors need rows beyond train_size".into()));
                }
                all.split_at(*train_size)
            }
        };
        if d.len() < 2 {
            return Err(Error::Data("the training set needs at least two rows".into()));
        }
        let selection = select_neighbor(&d, Some(&pool), config.mode, config.measure)?;
        let d_prime = neighboring_dataset(&d, config.mode, selection, Some(&pool))?;
        let epsilon = config.target.epsilon()?;
        let split = budget_split(&PrivacyParams::new(epsilon, config.delta, 1.0, config.train.steps)?)?;
        let mut layer_sizes = vec![d.n_features()];
        layer_sizes.extend(&config.train.hidden);
        layer_sizes.push(d.n_classes());
        Ok(Self {
            config: config.clone(),
            d,
            d_prime,
            pool,
            selection,
            epsilon,
            split,
            layer_sizes,
        })
    }

    pub fn initial_network(&self, repetition: u64) -> Result<Network> {
        Network::glorot(
            &self.layer_sizes,
            &mut stream(self.config.seed, Domain::Initialization, repetition),
        )
    }
}

/// DPSGD as seen by the adversary: at each step both clipped batch
/// gradients are recomputed from the released weights.
struct DpsgdMechanism<'a> {
    prep: &'a PreparedCampaign,
    net: Network,
    normalizer: f64,
    local_sensitivities: Vec<f64>,
    sigmas: Vec<f64>,
    max_clipped_norm: f64,
}

impl<'a> DpsgdMechanism<'a> {
    fn new(prep: &'a PreparedCampaign, net: Network) -> Self {
        Self {
            prep,
            net,
            normalizer: prep.d.len() as f64,
            local_sensitivities: Vec::new(),
            sigmas: Vec::new(),
            max_clipped_norm: 0.0,
        }
    }
}

impl AdaptiveMechanism for DpsgdMechanism<'_> {
    fn setup(&mut self, _step: usize) -> Result<StepSetup> {
        let cfg = &self.prep.config;
        let c = cfg.train.clipping_norm;
        let batch_d = batch_clipped_gradient(&self.net, &self.prep.d, c)?;
        let batch_dp = batch_clipped_gradient(&self.net, &self.prep.d_prime, c)?;
        for g in batch_d.per_example.iter().chain(&batch_dp.per_example) {
            self.max_clipped_norm = self.max_clipped_norm.max(l2_norm(g));
        }
        let local = local_sensitivity_step(&batch_d.mean(), &batch_dp.mean(), self.prep.d.len(), cfg.mode)?;
        let sensitivity = match cfg.sensitivity {
            SensitivitySource::Global => cfg.global_sensitivity(),
            SensitivitySource::Local => local,
            SensitivitySource::Heuristic => {
                let i = self.prep.selection.removed_index();
                let x_hat = &batch_d.per_example[i];
                match self.prep.selection {
                    // the replacement sits at the removed position in D'
                    Selection::Replace { .. } => {
                        approx_local_sensitivity(x_hat, Some(&batch_dp.per_example[i]), cfg.mode)?
                    }
                    Selection::Remove { .. } => approx_local_sensitivity(x_hat, None, cfg.mode)?,
                }
            }
        };
        let sigma_sum = sensitivity * self.prep.split.noise_multiplier;
        self.local_sensitivities.push(local);
        self.sigmas.push(sigma_sum);
        Ok(StepSetup {
            center_d: batch_d.scaled(self.normalizer),
            center_d_prime: batch_dp.scaled(self.normalizer),
            sigma: NoiseScale::new(sigma_sum / self.normalizer)?,
        })
    }

    fn observe(&mut self, _step: usize, released: &[f64]) -> Result<()> {
        self.net = self.net.descend(released, self.prep.config.train.learning_rate)?;
        Ok(())
    }
}

/// One repetition of the adversary against DPSGD.
#[derive(Debug, Clone)]
pub struct Algorithm1Outcome {
    pub outcome: DiOutcome,
    /// Exact local sensitivity at every step.
    pub local_sensitivities: Vec<f64>,
    /// Sum-space noise scale used at every step.
    pub sigmas: Vec<f64>,
    pub max_clipped_norm: f64,
    pub final_network: Network,
}

/// Trains on the secret dataset with DPSGD while the adversary tracks its
/// belief from the released gradients, then decides.
pub fn run_algorithm1<R: Rng + ?Sized>(
    prep: &PreparedCampaign,
    net0: Network,
    secret: Hypothesis,
    rng: &mut R,
) -> Result<Algorithm1Outcome> {
    let mut mech = DpsgdMechanism::new(prep, net0);
    let outcome = run_di_experiment_with_secret(&mut mech, prep.config.train.steps, secret, rng)?;
    Ok(Algorithm1Outcome {
        outcome,
        local_sensitivities: mech.local_sensitivities,
        sigmas: mech.sigmas,
        max_clipped_norm: mech.max_clipped_norm,
        final_network: mech.net,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionRecord {
    pub index: usize,
    pub secret_bit: u8,
    pub final_belief_d: f64,
    /// Final belief in the dataset that was actually used.
    pub final_belief_secret: f64,
    pub win: bool,
    pub local_sensitivities: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub max_clipped_norm: Option<f64>,
}

impl RepetitionRecord {
    fn from_outcome(index: usize, outcome: &DiOutcome, ls: Vec<f64>, sigmas: Vec<f64>, clip: Option<f64>) -> Self {
        Self {
            index,
            secret_bit: outcome.secret_bit,
            final_belief_d: outcome.final_state.belief_d,
            final_belief_secret: outcome.belief_in_secret(),
            win: outcome.win,
            local_sensitivities: ls,
            sigmas,
            max_clipped_norm: clip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Parameters against which repetitions are scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditContext {
    pub epsilon: f64,
    pub delta: f64,
    pub steps: usize,
    pub global_sensitivity: f64,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon: f64,
    pub delta: f64,
    pub steps: usize,
    pub n_exp: usize,
    pub rho_beta: f64,
    /// Single-release bound at `(epsilon, delta)`.
    pub rho_alpha: f64,
    /// Bound of the RDP-composed budget.
    pub rho_alpha_composed: f64,
    pub global_sensitivity: f64,
    pub wins: usize,
    pub advantage: f64,
    pub advantage_standard_error: f64,
    pub delta_prime: f64,
    pub eps_from_sensitivities: f64,
    pub degenerate_steps: usize,
    pub eps_from_beliefs: f64,
    pub eps_from_advantage: f64,
    /// Set when the advantage estimate was not positive and epsilon' was reported as 0.
    pub advantage_nonpositive: bool,
    pub max_clipped_norm: Option<f64>,
    pub histogram: Vec<HistogramBin>,
    pub repetitions: Vec<RepetitionRecord>,
}

impl AuditReport {
    pub fn final_beliefs(&self) -> Vec<f64> {
        self.repetitions.iter().map(|r| r.final_belief_secret).collect()
    }
}

/// Per-repetition epsilon' from observed local sensitivities, maximized
/// over repetitions.
///
/// Each step's noise multiplier `sigma_i / GS` is rescaled by `GS / LS_i`
/// and the sequence goes through the RDP accountant at `delta`. A step with
/// zero local sensitivity spends nothing and is counted as degenerate.
pub fn audit_eps_from_sensitivities(
    repetitions: &[RepetitionRecord],
    global_sensitivity: f64,
    delta: f64,
) -> Result<(f64, usize)> {
    if repetitions.is_empty() {
        return Err(Error::Empty("repetitions"));
    }
    let mut degenerate = 0;
    let mut worst = 0.0f64;
    for rep in repetitions {
        if rep.local_sensitivities.is_empty() || rep.local_sensitivities.len() != rep.sigmas.len() {
            return Err(Error::Data(format!("repetition {} has no sensitivity record", rep.index)));
        }
        let mut multipliers = Vec::with_capacity(rep.sigmas.len());
        let mut unbounded = false;
        for (&ls, &sigma) in rep.local_sensitivities.iter().zip(&rep.sigmas) {
            if ls == 0.0 {
                degenerate += 1;
                multipliers.push(f64::INFINITY);
            } else if sigma == 0.0 {
                unbounded = true;
            } else {
                multipliers.push((sigma / global_sensitivity) * (global_sensitivity / ls));
            }
        }
        let eps = if unbounded {
            f64::INFINITY
        } else {
            accountant_epsilon(&multipliers, delta)?
        };
        worst = worst.max(eps);
    }
    if degenerate > 0 {
        warn!("{degenerate} steps had zero local sensitivity and were skipped");
    }
    Ok((worst, degenerate))
}

/// `ln(b / (1 - b))` of the largest final belief, clamped to
/// `[0.5, 1 - 1e-12]`.
pub fn audit_eps_from_beliefs(final_beliefs: &[f64]) -> Result<f64> {
    let max = final_beliefs
        .iter()
        .cloned()
        .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.max(b))))
        .ok_or(Error::Empty("final beliefs"))?;
    eps_from_posterior_bound(max.clamp(0.5, BELIEF_CLAMP))
}

/// Epsilon' implied by an advantage estimate. Returns `(0, true)` when the
/// advantage is not positive and infinity for a perfect adversary.
pub fn audit_eps_from_advantage(advantage: f64, delta: f64) -> Result<(f64, bool)> {
    if advantage <= 0.0 {
        return Ok((0.0, true));
    }
    if advantage >= 1.0 {
        return Ok((f64::INFINITY, false));
    }
    Ok((eps_from_advantage(advantage, delta)?, false))
}

/// Fraction of final beliefs strictly above `rho_beta`.
pub fn empirical_delta(final_beliefs: &[f64], rho_beta: f64) -> Result<f64> {
    if final_beliefs.is_empty() {
        return Err(Error::Empty("final beliefs"));
    }
    let over = final_beliefs.iter().filter(|&&b| b > rho_beta).count();
    Ok(over as f64 / final_beliefs.len() as f64)
}

pub fn belief_histogram(beliefs: &[f64], bins: usize) -> Vec<HistogramBin> {
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: i as f64 / bins as f64,
            hi: (i + 1) as f64 / bins as f64,
            count: 0,
        })
        .collect();
    for &b in beliefs {
        let i = ((b * bins as f64).floor() as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

/// Folds repetition records, in index order, into a report.
pub fn aggregate(context: &AuditContext, mut repetitions: Vec<RepetitionRecord>) -> Result<AuditReport> {
    if repetitions.is_empty() {
        return Err(Error::Empty("repetitions"));
    }
    repetitions.sort_by_key(|r| r.index);
    let n_exp = repetitions.len();
    let wins = repetitions.iter().filter(|r| r.win).count();
    let advantage = estimate_advantage(wins, n_exp)?;
    let beliefs: Vec<f64> = repetitions.iter().map(|r| r.final_belief_secret).collect();
    let rho_beta = posterior_bound(&[context.epsilon], &[context.delta])?.rho_beta;
    let split = budget_split(&PrivacyParams::new(context.epsilon, context.delta, 1.0, context.steps)?)?;
    let composed = RdpGuarantee::new(split.alpha_star, split.alpha_star * split.composed_term)?;
    let (eps_sens, degenerate_steps) =
        audit_eps_from_sensitivities(&repetitions, context.global_sensitivity, context.delta)?;
    let (eps_adv, nonpositive) = audit_eps_from_advantage(advantage, context.delta)?;
    let max_clipped_norm = repetitions
        .iter()
        .filter_map(|r| r.max_clipped_norm)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    Ok(AuditReport {
        epsilon: context.epsilon,
        delta: context.delta,
        steps: context.steps,
        n_exp,
        rho_beta,
        rho_alpha: advantage_bound_gaussian(context.epsilon, context.delta)?.rho_alpha(),
        rho_alpha_composed: advantage_bound_rdp(composed).rho_alpha(),
        global_sensitivity: context.global_sensitivity,
        wins,
        advantage,
        advantage_standard_error: advantage_standard_error(advantage, n_exp),
        delta_prime: empirical_delta(&beliefs, rho_beta)?,
        eps_from_sensitivities: eps_sens,
        degenerate_steps,
        eps_from_beliefs: audit_eps_from_beliefs(&beliefs)?,
        eps_from_advantage: eps_adv,
        advantage_nonpositive: nonpositive,
        max_clipped_norm,
        histogram: belief_histogram(&beliefs, context.histogram_bins),
        repetitions,
    })
}

fn map_repetitions<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

fn draw_secret(seed: u64, repetition: usize) -> Hypothesis {
    let bit: u8 = stream(seed, Domain::Challenge, repetition as u64).random_range(0..=1);
    Hypothesis::from_bit(bit)
}

/// Runs `n_exp` independent repetitions of the adversary against DPSGD.
pub fn run_campaign(config: &CampaignConfig) -> Result<AuditReport> {
    let prep = PreparedCampaign::new(config)?;
    run_prepared_campaign(&prep)
}

pub fn run_prepared_campaign(prep: &PreparedCampaign) -> Result<AuditReport> {
    let cfg = &prep.config;
    let records = map_repetitions(cfg.n_exp, |rep| {
        let net0 = prep.initial_network(rep as u64)?;
        let secret = draw_secret(cfg.seed, rep);
        let mut rng = stream(cfg.seed, Domain::Experiment, rep as u64);
        let out = run_algorithm1(prep, net0, secret, &mut rng)?;
        Ok(RepetitionRecord::from_outcome(
            rep,
            &out.outcome,
            out.local_sensitivities,
            out.sigmas,
            Some(out.max_clipped_norm),
        ))
    })?;
    let context = AuditContext {
        epsilon: prep.epsilon,
        delta: cfg.delta,
        steps: cfg.train.steps,
        global_sensitivity: cfg.global_sensitivity(),
        histogram_bins: cfg.histogram_bins,
    };
    aggregate(&context, records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub epsilon: f64,
    pub n_exp: usize,
    pub wins: usize,
    pub advantage: f64,
    pub advantage_standard_error: f64,
}

/// Loss-threshold membership inference against models trained on `D` with
/// the campaign's noise calibration. Non-members are drawn uniformly from
/// the pool of held-out records.
pub fn run_mi_campaign(config: &CampaignConfig) -> Result<MiReport> {
    let prep = PreparedCampaign::new(config)?;
    run_prepared_mi_campaign(&prep)
}

pub fn run_prepared_mi_campaign(prep: &PreparedCampaign) -> Result<MiReport> {
    let cfg = &prep.config;
    if prep.pool.is_empty() {
        return Err(Error::Data("membership inference needs held-out records".into()));
    }
    let wins = map_repetitions(cfg.n_exp, |rep| {
        let net0 = prep.initial_network(rep as u64)?;
        let mut rng = stream(cfg.seed, Domain::Experiment, rep as u64);
        let trained = run_algorithm1(prep, net0, Hypothesis::D, &mut rng)?.final_network;
        mi_challenge(&trained, prep, cfg.seed, rep)
    })?
    .into_iter()
    .filter(|w| *w)
    .count();
    let advantage = estimate_advantage(wins, cfg.n_exp)?;
    Ok(MiReport {
        epsilon: prep.epsilon,
        n_exp: cfg.n_exp,
        wins,
        advantage,
        advantage_standard_error: advantage_standard_error(advantage, cfg.n_exp),
    })
}

/// One membership challenge against `model`, using the repetition's
/// challenge stream.
pub fn mi_challenge(model: &Network, prep: &PreparedCampaign, seed: u64, rep: usize) -> Result<bool> {
    let threshold = model.mean_loss(&prep.d)?;
    let mut rng = stream(seed ^ 0x4D49, Domain::Challenge, rep as u64);
    let pool = &prep.pool;
    run_mi_experiment(
        model,
        &prep.d,
        |r| {
            let j = r.random_range(0..pool.len());
            (pool.features[j].clone(), pool.labels[j].clone())
        },
        threshold,
        &mut rng,
    )
}

/// Repeated sum queries over the wage survey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub steps: usize,
    pub runs: usize,
    pub seed: u64,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOutcome {
    pub report: AuditReport,
    pub sigma_per_step: f64,
    /// First repetition in full, for plotting a sample run.
    pub sample_run: DiOutcome,
    pub sample_releases: Vec<f64>,
}

/// Records every value a fixed mechanism releases.
struct Recording<M> {
    inner: M,
    releases: Vec<f64>,
}

impl<M: AdaptiveMechanism> AdaptiveMechanism for Recording<M> {
    fn setup(&mut self, step: usize) -> Result<StepSetup> {
        self.inner.setup(step)
    }

    fn observe(&mut self, step: usize, released: &[f64]) -> Result<()> {
        self.releases.extend_from_slice(released);
        self.inner.observe(step, released)
    }
}

/// The adversary deciding between the two wage surveys from `steps` noisy
/// sums, with noise from an equal RDP split of `(epsilon, delta)`.
pub fn run_synthetic_campaign(config: &SyntheticConfig) -> Result<SyntheticOutcome> {
    if config.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    if config.histogram_bins == 0 {
        return Err(Error::Config("histogram_bins must be at least 1".into()));
    }
    let wages = wage_universe();
    let sensitivity = wages.sensitivity();
    let split = budget_split(&PrivacyParams::new(config.epsilon, config.delta, sensitivity, config.steps)?)?;
    let mechanism = FixedMechanism {
        center_d: vec![crate::learner::sum_query(&wages.d, wages.lo, wages.hi)?],
        center_d_prime: vec![crate::learner::sum_query(&wages.d_prime, wages.lo, wages.hi)?],
        sigma: split.sigma,
    };
    let run = |rep: usize, mech: &mut dyn AdaptiveMechanism| -> Result<DiOutcome> {
        let mut rng = stream(config.seed, Domain::Experiment, rep as u64);
        run_di_experiment(mech, config.steps, &mut rng)
    };
    let records = map_repetitions(config.runs, |rep| {
        let out = run(rep, &mut mechanism.clone())?;
        Ok(RepetitionRecord::from_outcome(
            rep,
            &out,
            vec![sensitivity; config.steps],
            vec![split.sigma.get(); config.steps],
            None,
        ))
    })?;
    let mut recording = Recording {
        inner: mechanism.clone(),
        releases: Vec::new(),
    };
    let sample_run = run(0, &mut recording)?;
    let context = AuditContext {
        epsilon: config.epsilon,
        delta: config.delta,
        steps: config.steps,
        global_sensitivity: sensitivity,
        histogram_bins: config.histogram_bins,
    };
    Ok(SyntheticOutcome {
        report: aggregate(&context, records)?,
        sigma_per_step: split.sigma.get(),
        sample_run,
        sample_releases: recording.releases,
    })
}
