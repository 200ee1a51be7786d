//! `dpident`: calibrate DP parameters, tabulate identifiability bounds and
//! run identifiability audits from the command line.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use dpident_core::audit::SyntheticConfig;
use dpident_core::data::CsvOptions;
use dpident_core::sensitivity::{DissimilarityMeasure, NeighborMode};

use commands::{CalibrationTarget, DatasetSpec, Overrides, SensitivityRequest};
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "dpident", version, about = "Identifiability bounds and empirical privacy audits for DP training")]
struct Cli {
    /// Master seed; falls back to DPIDENT_SEED, then to the configuration.
    #[arg(long, global = true, env = "DPIDENT_SEED")]
    seed: Option<u64>,

    /// Caps the number of worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Resolve epsilon, rho_beta, rho_alpha and the per-step noise from one of them.
    Calibrate(CalibrateArgs),
    /// Tabulate rho_beta and rho_alpha over a grid of (epsilon, delta).
    Bounds(BoundsArgs),
    /// Repeated noisy sum queries over the four-person wage survey.
    Synthetic(SyntheticArgs),
    /// DPSGD identifiability campaign from a JSON configuration.
    TrainAudit(CampaignArgs),
    /// Differential-identifiability vs membership-inference advantage.
    MiCompare(CampaignArgs),
    /// Rank neighbor candidates by dataset sensitivity.
    Sensitivity(SensitivityArgs),
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("target").required(true).args(["epsilon", "rho_beta", "rho_alpha"])))]
struct CalibrateArgs {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    rho_beta: Option<f64>,
    #[arg(long)]
    rho_alpha: Option<f64>,
    #[arg(long)]
    delta: f64,
    /// Sensitivity of the released query.
    #[arg(long, default_value_t = 1.0)]
    sensitivity: f64,
    /// Number of composed releases.
    #[arg(long, default_value_t = 1)]
    steps: usize,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
    /// Also write calibration.json with a manifest here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("grid").required(true).args(["epsilon", "eps_grid"])))]
struct BoundsArgs {
    /// Comma-separated epsilon values.
    #[arg(long, value_delimiter = ',')]
    epsilon: Vec<f64>,
    /// Evenly spaced epsilons as FROM,TO,COUNT.
    #[arg(long, value_delimiter = ',')]
    eps_grid: Vec<f64>,
    /// Comma-separated delta values.
    #[arg(long, value_delimiter = ',', required = true)]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    steps: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SyntheticArgs {
    #[arg(long, default_value_t = 5.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    /// Number of composed sum queries.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Repetitions (default 2000; 10000 with --full-scale).
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, alias = "paper-scale")]
    full_scale: bool,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CampaignArgs {
    /// JSON campaign configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured number of repetitions.
    #[arg(long)]
    n_exp: Option<usize>,
    /// Use the full repetition count (1000).
    #[arg(long, alias = "paper-scale")]
    full_scale: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("dataset").required(true).args(["csv", "config"])))]
struct SensitivityArgs {
    /// CSV dataset with a header row.
    #[arg(long, requires = "label_column")]
    csv: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    /// Rows beyond this count form the replacement pool.
    #[arg(long)]
    train_size: Option<usize>,
    /// Take the dataset from a campaign configuration instead.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "euclidean")]
    measure: DissimilarityMeasure,
    #[arg(long, default_value = "unbounded")]
    mode: NeighborMode,
    /// Keep only the best TOP candidates.
    #[arg(long)]
    top: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::Calibrate(a) => {
            let target = match (a.epsilon, a.rho_beta, a.rho_alpha) {
                (Some(e), None, None) => CalibrationTarget::Epsilon(e),
                (None, Some(r), None) => CalibrationTarget::RhoBeta(r),
                (None, None, Some(r)) => CalibrationTarget::RhoAlpha(r),
                _ => return Err(CliError::Config("give exactly one of --epsilon, --rho-beta, --rho-alpha".into())),
            };
            let c = commands::calibrate(target, a.delta, a.sensitivity, a.steps)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&c).map_err(|e| CliError::Runtime(e.to_string()))?);
            } else {
                print!("{}", commands::calibration_table(&c));
            }
            if let Some(dir) = a.out_dir {
                let mut run = output::RunDir::create(&dir, "calibrate", &c, seed.unwrap_or(0), &["calibration.json"])?;
                run.write_json("calibration.json", &c)?;
                run.finish()?;
            }
        }
        Command::Bounds(a) => {
            let eps = if a.eps_grid.is_empty() {
                a.epsilon.clone()
            } else if a.eps_grid.len() != 3 || a.eps_grid[2].fract() != 0.0 || a.eps_grid[2] < 1.0 {
                return Err(CliError::Config("--eps-grid takes FROM,TO,COUNT".into()));
            } else {
                commands::linear_grid(a.eps_grid[0], a.eps_grid[1], a.eps_grid[2] as usize)?
            };
            let rows = commands::bounds_grid(&eps, &a.delta, a.steps)?;
            let request = serde_json::json!({ "epsilon": eps, "delta": a.delta, "steps": a.steps });
            let mut run = output::RunDir::create(&a.out_dir, "bounds", &request, seed.unwrap_or(0), &["bounds.csv"])?;
            run.write_csv("bounds.csv", &rows)?;
            let dir = run.finish()?;
            println!("{} rows written to {}", rows.len(), dir.join("bounds.csv").display());
        }
        Command::Synthetic(a) => {
            let runs = a.runs.unwrap_or(if a.full_scale {
                commands::FULL_SCALE_SYNTHETIC
            } else {
                commands::DESK_SCALE_SYNTHETIC
            });
            let config = SyntheticConfig {
                epsilon: a.epsilon,
                delta: a.delta,
                steps: a.steps,
                runs,
                seed: seed.unwrap_or(0),
                histogram_bins: a.bins,
            };
            let s = commands::synthetic(&config, &a.out_dir)?;
            println!(
                "runs {}  win rate {:.4}  advantage {:.4} (rho_alpha composed {:.4})  delta' {:.5} (rho_beta {:.4})",
                s.runs, s.win_rate, s.advantage, s.rho_alpha_composed, s.delta_prime, s.rho_beta
            );
        }
        Command::TrainAudit(a) => {
            let file = commands::load_campaign_file(&a.config, overrides(seed, &a))?;
            for r in commands::train_audit(&file, &a.out_dir)? {
                println!(
                    "epsilon {:.4}: epsilon' sensitivities {:.4}  beliefs {:.4}  advantage {:.4}  Adv {:.4} +- {:.4}  delta' {:.4}",
                    r.epsilon,
                    r.eps_from_sensitivities,
                    r.eps_from_beliefs,
                    r.eps_from_advantage,
                    r.advantage,
                    r.advantage_standard_error,
                    r.delta_prime
                );
            }
        }
        Command::MiCompare(a) => {
            let file = commands::load_campaign_file(&a.config, overrides(seed, &a))?;
            for r in commands::mi_compare(&file, &a.out_dir)? {
                println!(
                    "epsilon {:.4}: Adv_DI {:.4}  Adv_MI {:.4}  rho_alpha {:.4}  min(e^eps - 1, 1) {:.4}",
                    r.epsilon, r.adv_di, r.adv_mi, r.rho_alpha, r.general_bound
                );
            }
        }
        Command::Sensitivity(a) => {
            let dataset = match (&a.csv, &a.config) {
                (Some(path), None) => DatasetSpec::Csv {
                    path: path.clone(),
                    label_column: a.label_column.clone().unwrap_or_default(),
                    train_size: a.train_size,
                    options: CsvOptions::default(),
                },
                (None, Some(cfg)) => {
                    let file = commands::load_campaign_file(cfg, Overrides { seed, ..Overrides::default() })?;
                    DatasetSpec::Source(file.campaign.data)
                }
                _ => return Err(CliError::Config("give exactly one of --csv and --config".into())),
            };
            let request = SensitivityRequest {
                dataset,
                measure: a.measure,
                mode: a.mode,
                top: a.top,
            };
            let rows = commands::sensitivity(&request, seed.unwrap_or(0), &a.out_dir)?;
            for r in rows.iter().take(3) {
                match r.pool_index {
                    Some(p) => println!("#{} replace {} by pool {} (score {:.6})", r.rank, r.index, p, r.score),
                    None => println!("#{} remove {} (score {:.6})", r.rank, r.index, r.score),
                }
            }
        }
    }
    Ok(())
}

fn overrides(seed: Option<u64>, a: &CampaignArgs) -> Overrides {
    Overrides {
        seed,
        n_exp: a.n_exp,
        full_scale: a.full_scale,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dpident: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
