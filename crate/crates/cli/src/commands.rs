use std::fs;
use std::path::{Path, PathBuf};

use dpident_core::audit::{
    run_prepared_campaign, run_prepared_mi_campaign, run_synthetic_campaign, AuditReport, CampaignConfig,
    DataSource, PreparedCampaign, SyntheticConfig, Target,
};
use dpident_core::bounds::{advantage_bound_gaussian, advantage_bound_rdp, eps_from_advantage, posterior_bound};
use dpident_core::data::{load_csv, synth_blobs, CsvOptions, TabularDataset};
use dpident_core::dp::{budget_split, gaussian_sigma, PrivacyParams, RdpGuarantee};
use dpident_core::sensitivity::{rank_removal_candidates, rank_replacement_pairs, DissimilarityMeasure, NeighborMode};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::RunDir;

/// Repetitions of a DPSGD campaign at full scale.
pub const FULL_SCALE_CAMPAIGN: usize = 1000;
/// Runs of the sum-query validation at full scale.
pub const FULL_SCALE_SYNTHETIC: usize = 10_000;
pub const DESK_SCALE_SYNTHETIC: usize = 2000;

// ---------------------------------------------------------------------------
// calibrate

#[derive(Debug, Clone, Copy)]
pub enum CalibrationTarget {
    Epsilon(f64),
    RhoBeta(f64),
    RhoAlpha(f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct Calibration {
    pub epsilon: f64,
    pub delta: f64,
    pub sensitivity: f64,
    pub steps: usize,
    pub rho_beta: f64,
    /// Bound for a single Gaussian release spending the whole budget.
    pub rho_alpha: f64,
    /// Bound for `steps` releases composed under RDP.
    pub rho_alpha_composed: f64,
    /// Noise of one release spending the whole budget.
    pub sigma_single_release: f64,
    /// Noise of each of the `steps` releases.
    pub sigma_per_step: f64,
    pub noise_multiplier: f64,
    pub alpha_star: f64,
    pub per_step_epsilon: f64,
    pub per_step_delta: f64,
}

pub fn calibrate(target: CalibrationTarget, delta: f64, sensitivity: f64, steps: usize) -> CliResult<Calibration> {
    let epsilon = match target {
        CalibrationTarget::Epsilon(e) => e,
        CalibrationTarget::RhoBeta(r) => Target::RhoBeta(r).epsilon()?,
        CalibrationTarget::RhoAlpha(r) => eps_from_advantage(r, delta)?,
    };
    let params = PrivacyParams::new(epsilon, delta, sensitivity, steps)?;
    let split = budget_split(&params)?;
    Ok(Calibration {
        epsilon,
        delta,
        sensitivity,
        steps,
        rho_beta: posterior_bound(&[epsilon], &[delta])?.rho_beta,
        rho_alpha: advantage_bound_gaussian(epsilon, delta)?.rho_alpha(),
        rho_alpha_composed: composed_advantage(epsilon, delta, steps)?,
        sigma_single_release: gaussian_sigma(epsilon, delta, sensitivity)?.get(),
        sigma_per_step: split.sigma.get(),
        noise_multiplier: split.noise_multiplier,
        alpha_star: split.alpha_star,
        per_step_epsilon: split.per_step_epsilon,
        per_step_delta: split.per_step_delta,
    })
}

fn composed_advantage(epsilon: f64, delta: f64, steps: usize) -> CliResult<f64> {
    let split = budget_split(&PrivacyParams::new(epsilon, delta, 1.0, steps)?)?;
    let g = RdpGuarantee::new(split.alpha_star, split.alpha_star * split.composed_term)?;
    Ok(advantage_bound_rdp(g).rho_alpha())
}

pub fn calibration_table(c: &Calibration) -> String {
    let rows = [
        ("epsilon", c.epsilon),
        ("delta", c.delta),
        ("sensitivity", c.sensitivity),
        ("steps", c.steps as f64),
        ("rho_beta", c.rho_beta),
        ("rho_alpha", c.rho_alpha),
        ("rho_alpha (composed)", c.rho_alpha_composed),
        ("sigma (single release)", c.sigma_single_release),
        ("sigma per step", c.sigma_per_step),
        ("noise multiplier", c.noise_multiplier),
        ("alpha*", c.alpha_star),
        ("epsilon per step", c.per_step_epsilon),
        ("delta per step", c.per_step_delta),
    ];
    rows.iter().map(|(k, v)| format!("{k:<24} {v:.6}\n")).collect()
}

// ---------------------------------------------------------------------------
// bounds

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRow {
    pub epsilon: f64,
    pub delta: f64,
    pub steps: usize,
    pub rho_beta: f64,
    pub rho_alpha: f64,
    pub rho_alpha_composed: f64,
}

pub fn bounds_grid(epsilons: &[f64], deltas: &[f64], steps: usize) -> CliResult<Vec<BoundsRow>> {
    if epsilons.is_empty() || deltas.is_empty() {
        return Err(CliError::Config("the epsilon and delta grids must be nonempty".into()));
    }
    let mut rows = Vec::with_capacity(epsilons.len() * deltas.len());
    for &delta in deltas {
        for &epsilon in epsilons {
            rows.push(BoundsRow {
                epsilon,
                delta,
                steps,
                rho_beta: posterior_bound(&[epsilon], &[delta])?.rho_beta,
                rho_alpha: advantage_bound_gaussian(epsilon, delta)?.rho_alpha(),
                rho_alpha_composed: composed_advantage(epsilon, delta, steps)?,
            });
        }
    }
    Ok(rows)
}

/// `count` evenly spaced values from `from` to `to` inclusive.
pub fn linear_grid(from: f64, to: f64, count: usize) -> CliResult<Vec<f64>> {
    if count == 0 || !(from.is_finite() && to.is_finite()) || to < from {
        return Err(CliError::Config(format!("invalid grid {from}..{to} with {count} points")));
    }
    if count == 1 {
        return Ok(vec![from]);
    }
    Ok((0..count)
        .map(|i| from + (to - from) * i as f64 / (count - 1) as f64)
        .collect())
}

// ---------------------------------------------------------------------------
// synthetic

#[derive(Debug, Clone, Serialize)]
pub struct SyntheticSummary {
    pub config: SyntheticConfig,
    pub sensitivity: f64,
    pub sigma_per_step: f64,
    pub runs: usize,
    pub wins: usize,
    pub win_rate: f64,
    pub advantage: f64,
    pub advantage_standard_error: f64,
    pub delta_prime: f64,
    pub rho_beta: f64,
    pub rho_alpha: f64,
    pub rho_alpha_composed: f64,
    pub eps_from_sensitivities: f64,
    pub eps_from_beliefs: f64,
    pub eps_from_advantage: f64,
}

#[derive(Debug, Clone, Serialize)]
struct HistogramRow {
    lo: f64,
    hi: f64,
    count: usize,
    rho_beta: f64,
}

#[derive(Debug, Clone, Serialize)]
struct TrajectoryRow {
    step: usize,
    release: f64,
    belief_d: f64,
    belief_secret: f64,
}

fn histogram_rows(report: &AuditReport) -> Vec<HistogramRow> {
    report
        .histogram
        .iter()
        .map(|b| HistogramRow {
            lo: b.lo,
            hi: b.hi,
            count: b.count,
            rho_beta: report.rho_beta,
        })
        .collect()
}

pub fn synthetic(config: &SyntheticConfig, out_dir: &Path) -> CliResult<SyntheticSummary> {
    let mut run = RunDir::create(
        out_dir,
        "synthetic",
        config,
        config.seed,
        &["summary.json", "histogram.csv", "sample_run.csv"],
    )?;
    let outcome = run_synthetic_campaign(config)?;
    let r = &outcome.report;
    let summary = SyntheticSummary {
        config: *config,
        sensitivity: r.global_sensitivity,
        sigma_per_step: outcome.sigma_per_step,
        runs: r.n_exp,
        wins: r.wins,
        win_rate: r.wins as f64 / r.n_exp as f64,
        advantage: r.advantage,
        advantage_standard_error: r.advantage_standard_error,
        delta_prime: r.delta_prime,
        rho_beta: r.rho_beta,
        rho_alpha: r.rho_alpha,
        rho_alpha_composed: r.rho_alpha_composed,
        eps_from_sensitivities: r.eps_from_sensitivities,
        eps_from_beliefs: r.eps_from_beliefs,
        eps_from_advantage: r.eps_from_advantage,
    };
    run.write_json("summary.json", &summary)?;
    run.write_csv("histogram.csv", &histogram_rows(r))?;
    let sample = &outcome.sample_run;
    let secret_is_d = sample.secret_bit == 1;
    let rows: Vec<TrajectoryRow> = sample
        .belief_trajectory
        .iter()
        .zip(&outcome.sample_releases)
        .enumerate()
        .map(|(i, (&b, &x))| TrajectoryRow {
            step: i + 1,
            release: x,
            belief_d: b,
            belief_secret: if secret_is_d { b } else { 1.0 - b },
        })
        .collect();
    run.write_csv("sample_run.csv", &rows)?;
    run.finish()?;
    Ok(summary)
}

// ---------------------------------------------------------------------------
// campaign configuration files

/// A campaign configuration, optionally with a grid of targets that
/// replaces the single `target`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignFile {
    #[serde(flatten)]
    pub campaign: CampaignConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<Target>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n_exp: Option<usize>,
    pub full_scale: bool,
}

pub fn load_campaign_file(path: &Path, overrides: Overrides) -> CliResult<CampaignFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut file: CampaignFile =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    // relative data paths are resolved against the configuration file
    if let DataSource::Csv { path: data, .. } = &mut file.campaign.data {
        if data.is_relative() {
            if let Some(parent) = path.parent() {
                *data = parent.join(&*data);
            }
        }
    }
    if let Some(seed) = overrides.seed {
        file.campaign.seed = seed;
    }
    if overrides.full_scale {
        file.campaign.n_exp = FULL_SCALE_CAMPAIGN;
    }
    if let Some(n) = overrides.n_exp {
        file.campaign.n_exp = n;
    }
    file.campaign.validate()?;
    Ok(file)
}

impl CampaignFile {
    pub fn expanded(&self) -> Vec<CampaignConfig> {
        if self.targets.is_empty() {
            return vec![self.campaign.clone()];
        }
        self.targets
            .iter()
            .map(|&target| CampaignConfig {
                target,
                ..self.campaign.clone()
            })
            .collect()
    }
}

/// Prepares every target, reusing data and neighbor selection across the grid.
fn prepare_all(file: &CampaignFile) -> CliResult<Vec<PreparedCampaign>> {
    let configs = file.expanded();
    let base = PreparedCampaign::new(&configs[0])?;
    configs
        .into_iter()
        .map(|cfg| {
            let mut p = base.clone();
            cfg.validate()?;
            p.epsilon = cfg.target.epsilon()?;
            p.split = budget_split(&PrivacyParams::new(p.epsilon, cfg.delta, 1.0, cfg.train.steps)?)?;
            p.config = cfg;
            Ok(p)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// train-audit

#[derive(Debug, Clone, Serialize)]
pub struct EpsilonAuditRow {
    pub epsilon: f64,
    pub eps_from_sensitivities: f64,
    pub eps_from_beliefs: f64,
    pub eps_from_advantage: f64,
    pub advantage: f64,
    pub advantage_standard_error: f64,
    pub rho_alpha: f64,
    pub delta_prime: f64,
    pub degenerate_steps: usize,
}

#[derive(Debug, Clone, Serialize)]
struct BeliefRow {
    epsilon: f64,
    repetition: usize,
    secret_bit: u8,
    final_belief_d: f64,
    final_belief_secret: f64,
    win: bool,
}

#[derive(Debug, Clone, Serialize)]
struct SensitivityRow {
    epsilon: f64,
    repetition: usize,
    step: usize,
    local_sensitivity: f64,
    sigma: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Reports<'a> {
    reports: &'a [AuditReport],
}

pub fn train_audit(file: &CampaignFile, out_dir: &Path) -> CliResult<Vec<EpsilonAuditRow>> {
    let mut run = RunDir::create(
        out_dir,
        "train-audit",
        file,
        file.campaign.seed,
        &["report.json", "epsilon_audit.csv", "beliefs.csv", "sensitivities.csv", "histogram.csv"],
    )?;
    let reports: Vec<AuditReport> = prepare_all(file)?
        .iter()
        .map(run_prepared_campaign)
        .collect::<Result<_, _>>()?;
    run.write_json("report.json", &Reports { reports: &reports })?;
    let audit: Vec<EpsilonAuditRow> = reports
        .iter()
        .map(|r| EpsilonAuditRow {
            epsilon: r.epsilon,
            eps_from_sensitivities: r.eps_from_sensitivities,
            eps_from_beliefs: r.eps_from_beliefs,
            eps_from_advantage: r.eps_from_advantage,
            advantage: r.advantage,
            advantage_standard_error: r.advantage_standard_error,
            rho_alpha: r.rho_alpha,
            delta_prime: r.delta_prime,
            degenerate_steps: r.degenerate_steps,
        })
        .collect();
    run.write_csv("epsilon_audit.csv", &audit)?;
    let beliefs: Vec<BeliefRow> = reports
        .iter()
        .flat_map(|r| {
            r.repetitions.iter().map(|rep| BeliefRow {
                epsilon: r.epsilon,
                repetition: rep.index,
                secret_bit: rep.secret_bit,
                final_belief_d: rep.final_belief_d,
                final_belief_secret: rep.final_belief_secret,
                win: rep.win,
            })
        })
        .collect();
    run.write_csv("beliefs.csv", &beliefs)?;
    let sens: Vec<SensitivityRow> = reports
        .iter()
        .flat_map(|r| {
            r.repetitions.iter().flat_map(move |rep| {
                rep.local_sensitivities
                    .iter()
                    .zip(&rep.sigmas)
                    .enumerate()
                    .map(move |(i, (&ls, &sigma))| SensitivityRow {
                        epsilon: r.epsilon,
                        repetition: rep.index,
                        step: i + 1,
                        local_sensitivity: ls,
                        sigma,
                    })
            })
        })
        .collect();
    run.write_csv("sensitivities.csv", &sens)?;
    let hist: Vec<_> = reports.iter().flat_map(histogram_rows).collect();
    run.write_csv("histogram.csv", &hist)?;
    run.finish()?;
    Ok(audit)
}

// ---------------------------------------------------------------------------
// mi-compare

#[derive(Debug, Clone, Serialize)]
pub struct MiCompareRow {
    pub epsilon: f64,
    pub adv_di: f64,
    pub adv_di_standard_error: f64,
    pub adv_mi: f64,
    pub adv_mi_standard_error: f64,
    pub rho_alpha: f64,
    pub general_bound: f64,
}

pub fn mi_compare(file: &CampaignFile, out_dir: &Path) -> CliResult<Vec<MiCompareRow>> {
    let mut run = RunDir::create(out_dir, "mi-compare", file, file.campaign.seed, &["mi_compare.csv"])?;
    let rows = prepare_all(file)?
        .iter()
        .map(|prep| {
            let di = run_prepared_campaign(prep)?;
            let mi = run_prepared_mi_campaign(prep)?;
            Ok(MiCompareRow {
                epsilon: prep.epsilon,
                adv_di: di.advantage,
                adv_di_standard_error: di.advantage_standard_error,
                adv_mi: mi.advantage,
                adv_mi_standard_error: mi.advantage_standard_error,
                rho_alpha: di.rho_alpha,
                general_bound: (prep.epsilon.exp() - 1.0).min(1.0),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    run.write_csv("mi_compare.csv", &rows)?;
    run.finish()?;
    Ok(rows)
}

// ---------------------------------------------------------------------------
// sensitivity

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSpec {
    Csv {
        path: PathBuf,
        label_column: String,
        /// Rows beyond this count form the replacement pool.
        train_size: Option<usize>,
        #[serde(default)]
        options: CsvOptions,
    },
    Source(DataSource),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensitivityRequest {
    pub dataset: DatasetSpec,
    pub measure: DissimilarityMeasure,
    pub mode: NeighborMode,
    pub top: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankingRow {
    pub rank: usize,
    pub index: usize,
    pub pool_index: Option<usize>,
    pub score: f64,
}

fn load_dataset(spec: &DatasetSpec, seed: u64) -> CliResult<(TabularDataset, TabularDataset)> {
    Ok(match spec {
        DatasetSpec::Csv {
            path,
            label_column,
            train_size,
            options,
        } => {
            let all = load_csv(path, label_column, options)?;
            let n = train_size.unwrap_or(all.len());
            all.split_at(n)
        }
        DatasetSpec::Source(DataSource::Blobs {
            n,
            d,
            classes,
            separation,
            pool,
            seed: data_seed,
        }) => synth_blobs(n + pool, *d, *classes, *separation, data_seed.unwrap_or(seed))?.split_at(*n),
        DatasetSpec::Source(DataSource::Csv {
            path,
            label_column,
            train_size,
            options,
        }) => load_csv(path, label_column, options)?.split_at(*train_size),
    })
}

pub fn sensitivity(request: &SensitivityRequest, seed: u64, out_dir: &Path) -> CliResult<Vec<RankingRow>> {
    let mut run = RunDir::create(out_dir, "sensitivity", request, seed, &["ranking.csv"])?;
    let (d, pool) = load_dataset(&request.dataset, seed)?;
    if d.is_empty() {
        return Err(CliError::Data("the dataset has no rows".into()));
    }
    let mut rows: Vec<RankingRow> = match request.mode {
        NeighborMode::Unbounded => rank_removal_candidates(&d.features, request.measure)?
            .into_iter()
            .enumerate()
            .map(|(i, c)| RankingRow {
                rank: i + 1,
                index: c.index,
                pool_index: None,
                score: c.score,
            })
            .collect(),
        NeighborMode::Bounded => {
            if pool.is_empty() {
                return Err(CliError::Data("bounded ranking needs rows beyond the training set".into()));
            }
            rank_replacement_pairs(&d.features, &pool.features, request.measure)?
                .into_iter()
                .enumerate()
                .map(|(i, c)| RankingRow {
                    rank: i + 1,
                    index: c.index_d,
                    pool_index: Some(c.index_pool),
                    score: c.score,
                })
                .collect()
        }
    };
    if let Some(top) = request.top {
        rows.truncate(top);
    }
    run.write_csv("ranking.csv", &rows)?;
    run.finish()?;
    Ok(rows)
}
