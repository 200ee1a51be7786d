//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion followed by the measured quantities, and exits non-zero if
//! any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use dpident_core::adversary::{
    decide, update_belief, AdaptiveMechanism, BeliefState, Hypothesis, StepSetup,
};
use dpident_core::audit::{
    run_prepared_campaign, run_prepared_mi_campaign, run_synthetic_campaign, AuditReport, CampaignConfig,
    DataSource, PreparedCampaign, SensitivitySource, SyntheticConfig, Target, TrainSettings,
};
use dpident_core::bounds::{
    advantage_bound_gaussian, advantage_bound_rdp, eps_from_posterior_bound, mahalanobis_advantage,
    posterior_bound,
};
use dpident_core::data::synth_blobs;
use dpident_core::dp::{accountant_epsilon, budget_split, log_density, NoiseScale, PrivacyParams, RdpGuarantee};
use dpident_core::learner::Network;
use dpident_core::rng::{stream, Domain};
use dpident_core::sensitivity::{DissimilarityMeasure, NeighborMode};
use rand::Rng;
use rand_distr::StandardNormal;

struct Criterion {
    checks: Vec<(String, bool)>,
}

impl Criterion {
    fn new() -> Self {
        Self { checks: Vec::new() }
    }

    fn check(&mut self, ok: bool, detail: impl Into<String>) {
        self.checks.push((detail.into(), ok));
    }

    fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|(_, ok)| *ok)
    }
}

fn run(number: usize, title: &str, f: impl FnOnce(&mut Criterion)) -> bool {
    let started = Instant::now();
    let mut c = Criterion::new();
    let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut c)));
    let elapsed = started.elapsed();
    let ok = outcome.is_ok() && c.passed();
    println!(
        "{} criterion {number}: {title} ({:.1} s)",
        if ok { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    for (detail, ok) in &c.checks {
        println!("    [{}] {detail}", if *ok { "ok" } else { "x" });
    }
    if outcome.is_err() {
        println!("    [x] panicked");
    }
    ok
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn delta_tolerance(delta: f64, n: usize) -> f64 {
    delta + 3.0 * (delta / n as f64).sqrt()
}

// ---------------------------------------------------------------------------

fn parameter_table(c: &mut Criterion) {
    let started = Instant::now();
    for (rho, eps) in [(0.75, 1.0986), (0.9, 2.1972), (0.99, 4.5951)] {
        let got = eps_from_posterior_bound(rho).unwrap();
        c.check(within(got, eps, 1e-4), format!("rho_beta {rho} -> epsilon {got:.6} (want {eps} +- 1e-4)"));
    }
    for (eps, delta, rho) in [(2.2, 0.01, 0.28), (4.6, 0.01, 0.54), (2.2, 0.001, 0.23), (4.6, 0.001, 0.46)] {
        let got = advantage_bound_gaussian(eps, delta).unwrap().rho_alpha();
        c.check(
            within(got, rho, 0.005),
            format!("rho_alpha({eps}, {delta}) = {got:.4} (want {rho} +- 0.005)"),
        );
    }
    let elapsed = started.elapsed();
    c.check(elapsed < Duration::from_secs(1), format!("runtime {:?} < 1 s", elapsed));
}

fn synthetic(runs: usize, seed: u64, epsilon: f64) -> dpident_core::audit::SyntheticOutcome {
    run_synthetic_campaign(&SyntheticConfig {
        epsilon,
        delta: 0.01,
        steps: 100,
        runs,
        seed,
        histogram_bins: 20,
    })
    .unwrap()
}

fn synthetic_validation(c: &mut Criterion) {
    let started = Instant::now();
    let full = synthetic(10_000, 20_240_501, 5.0).report;
    let elapsed = started.elapsed();
    let win_rate = full.wins as f64 / full.n_exp as f64;
    c.check(
        within(win_rate, 0.75, 0.02),
        format!("10000 runs: win rate {win_rate:.4} (want 0.75 +- 0.02)"),
    );
    c.check(
        (0.0..=0.003).contains(&full.delta_prime) && full.delta_prime <= 0.01,
        format!("10000 runs: delta' {:.5} in [0, 0.003]", full.delta_prime),
    );
    c.check(
        elapsed < Duration::from_secs(120),
        format!("10000 runs took {:.2} s (< 2 min)", elapsed.as_secs_f64()),
    );
    let reduced = synthetic(2000, 77, 5.0).report;
    let win_rate = reduced.wins as f64 / reduced.n_exp as f64;
    c.check(
        within(win_rate, 0.75, 0.04),
        format!("2000 runs: win rate {win_rate:.4} (want 0.75 +- 0.04)"),
    );
}

fn belief_bound_figure(c: &mut Criterion) {
    for (eps, rho) in [(1.10, 0.75), (2.20, 0.90), (2.94, 0.95), (4.60, 0.99)] {
        let got = posterior_bound(&[eps], &[0.01]).unwrap().rho_beta;
        c.check(within(got, rho, 0.005), format!("epsilon {eps}: rho_beta {got:.4} (want {rho} +- 0.005)"));
        let report = synthetic(10_000, 1000 + (eps * 100.0) as u64, eps).report;
        let tol = delta_tolerance(0.01, report.n_exp);
        c.check(
            report.delta_prime <= tol,
            format!(
                "epsilon {eps}: fraction of beliefs above rho_beta {:.5} <= {tol:.5}",
                report.delta_prime
            ),
        );
    }
}

fn composition_identity(c: &mut Criterion) {
    let mut rng = stream(4, Domain::Experiment, 0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let eps = rng.random_range(0.1..=10.0);
        let delta = 10f64.powf(rng.random_range(-6.0..=(0.05f64).log10()));
        let k = rng.random_range(1..=500usize);
        let split = budget_split(&PrivacyParams::new(eps, delta, 1.0, k).unwrap()).unwrap();
        let back = accountant_epsilon(&vec![split.noise_multiplier; k], delta).unwrap();
        worst = worst.max(((back - eps) / eps).abs());
    }
    c.check(worst < 1e-3, format!("100 random budgets: worst relative round-trip error {worst:.2e} < 1e-3"));

    let composed = |k: usize| {
        let s = budget_split(&PrivacyParams::new(5.0, 0.01, 9.0, k).unwrap()).unwrap();
        advantage_bound_rdp(RdpGuarantee::new(s.alpha_star, s.alpha_star * s.composed_term).unwrap()).rho_alpha()
    };
    let reference = composed(1);
    let invariant = (1..=500).all(|k| composed(k) == reference);
    c.check(invariant, "composed advantage identical for k = 1..500");
    let at_100 = composed(100);
    c.check(
        within(at_100, 0.50, 0.005),
        format!("composed advantage (5, 0.01, k=100) = {at_100:.5} (want 0.50 +- 0.005)"),
    );
}

/// `0.5 * integral |N(x; 0, s) - N(x; dist, s)| dx` by composite Simpson.
fn integrated_advantage(dist: f64, sigma: f64) -> f64 {
    let lo = -12.0 * sigma;
    let hi = dist + 12.0 * sigma;
    let n = 200_000;
    let h = (hi - lo) / n as f64;
    let pdf = |x: f64, m: f64| (-(x - m) * (x - m) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    let f = |x: f64| 0.5 * (pdf(x, 0.0) - pdf(x, dist)).abs();
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

fn oracle_equivalence(c: &mut Criterion) {
    let mut rng = stream(5, Domain::Experiment, 0);
    let trials = 1_000_000;
    let (mut worst_int, mut worst_mc) = (0.0f64, 0.0f64);
    for pair in 0..20u64 {
        let dist = rng.random_range(0.05..4.0);
        let sigma = rng.random_range(0.2..3.0);
        // a random direction in three dimensions
        let dir: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
        let a = vec![0.3, -1.0, 2.0];
        let b: Vec<f64> = a.iter().zip(&dir).map(|(x, u)| x + dist * u / norm).collect();
        let s = NoiseScale::new(sigma).unwrap();
        let closed = mahalanobis_advantage(&a, &b, s).unwrap();

        worst_int = worst_int.max((closed - integrated_advantage(dist, sigma)).abs());

        let mut mc = stream(6, Domain::Experiment, pair);
        let mut wins = 0usize;
        for _ in 0..trials {
            let secret = Hypothesis::from_bit(mc.random_range(0..=1));
            let center = if secret == Hypothesis::D { &a } else { &b };
            let x: Vec<f64> = center
                .iter()
                .map(|m| m + sigma * mc.sample::<f64, _>(StandardNormal))
                .collect();
            let state = update_belief(&BeliefState::uniform(), &x, &a, &b, s).unwrap();
            if decide(&state) == secret {
                wins += 1;
            }
        }
        let simulated = 2.0 * wins as f64 / trials as f64 - 1.0;
        worst_mc = worst_mc.max((closed - simulated).abs());
    }
    c.check(worst_int < 1e-4, format!("20 pairs: worst gap to numerical integration {worst_int:.2e} < 1e-4"));
    c.check(
        worst_mc <= 0.003,
        format!("20 pairs: worst gap to 10^6-trial simulation {worst_mc:.5} <= 0.003"),
    );
}

// ---------------------------------------------------------------------------

fn blobs_config(rho_beta: f64, mode: NeighborMode, sensitivity: SensitivitySource, n_exp: usize) -> CampaignConfig {
    CampaignConfig {
        target: Target::RhoBeta(rho_beta),
        delta: 0.01,
        mode,
        sensitivity,
        measure: DissimilarityMeasure::Euclidean,
        n_exp,
        train: TrainSettings {
            hidden: vec![16],
            clipping_norm: 3.0,
            learning_rate: 1.0,
            steps: 30,
        },
        data: DataSource::Blobs {
            n: 200,
            d: 10,
            classes: 3,
            separation: 2.0,
            pool: 200,
            seed: Some(2024),
        },
        seed: 11,
        histogram_bins: 20,
    }
}

fn check_clipping(c: &mut Criterion, label: &str, report: &AuditReport, clip: f64) {
    let max = report.max_clipped_norm.unwrap_or(f64::NAN);
    c.check(
        max <= clip * (1.0 + 1e-12),
        format!("{label}: largest clipped per-example norm {max:.6} <= C = {clip}"),
    );
}

fn dpsgd_audit(c: &mut Criterion, clip_log: &mut Vec<(String, f64)>) {
    let started = Instant::now();
    let ls_prep = PreparedCampaign::new(&blobs_config(0.9, NeighborMode::Unbounded, SensitivitySource::Local, 1000)).unwrap();
    let params = ls_prep.initial_network(0).unwrap().param_count();
    c.check(params <= 5000, format!("network has {params} parameters (<= 5000)"));
    let ls = run_prepared_campaign(&ls_prep).unwrap();
    let eps = ls.epsilon;
    let tol = delta_tolerance(ls.delta, ls.n_exp);
    c.check(
        ls.delta_prime <= tol,
        format!("local: delta' {:.4} <= {tol:.4}", ls.delta_prime),
    );
    c.check(
        ls.eps_from_sensitivities >= 0.9 * eps && ls.eps_from_sensitivities <= 1.1 * eps,
        format!(
            "local: epsilon' from sensitivities {:.4} in [{:.4}, {:.4}] ({} degenerate steps)",
            ls.eps_from_sensitivities,
            0.9 * eps,
            1.1 * eps,
            ls.degenerate_steps
        ),
    );
    let cap = ls.rho_alpha + 3.0 * ls.advantage_standard_error;
    c.check(
        ls.advantage <= cap,
        format!(
            "local: advantage {:.4} <= rho_alpha {:.4} + 3 SE = {cap:.4} (composed bound {:.4})",
            ls.advantage, ls.rho_alpha, ls.rho_alpha_composed
        ),
    );
    clip_log.push(("local unbounded".into(), ls.max_clipped_norm.unwrap_or(f64::NAN)));

    let gs_prep = PreparedCampaign::new(&blobs_config(0.9, NeighborMode::Bounded, SensitivitySource::Global, 1000)).unwrap();
    let gs = run_prepared_campaign(&gs_prep).unwrap();
    c.check(
        gs.eps_from_sensitivities < eps,
        format!("global bounded: epsilon' {:.4} < epsilon {eps:.4}", gs.eps_from_sensitivities),
    );
    c.check(
        gs.advantage < ls.advantage,
        format!(
            "global bounded: advantage {:.4} (SE {:.4}) < local advantage {:.4}",
            gs.advantage, gs.advantage_standard_error, ls.advantage
        ),
    );
    clip_log.push(("global bounded".into(), gs.max_clipped_norm.unwrap_or(f64::NAN)));
    check_clipping(c, "local unbounded", &ls, 3.0);
    check_clipping(c, "global bounded", &gs, 3.0);
    let elapsed = started.elapsed();
    c.check(
        elapsed < Duration::from_secs(15 * 60),
        format!("two campaigns took {:.1} s (< 15 min)", elapsed.as_secs_f64()),
    );
}

fn adversary_ordering(c: &mut Criterion, clip_log: &mut Vec<(String, f64)>) {
    for rho in [0.75, 0.9, 0.99] {
        let prep = PreparedCampaign::new(&blobs_config(rho, NeighborMode::Unbounded, SensitivitySource::Local, 1000)).unwrap();
        let di = run_prepared_campaign(&prep).unwrap();
        let mi = run_prepared_mi_campaign(&prep).unwrap();
        let se = (di.advantage_standard_error.powi(2) + mi.advantage_standard_error.powi(2)).sqrt();
        let eps = prep.epsilon;
        c.check(
            di.advantage >= mi.advantage - 2.0 * se,
            format!(
                "epsilon {eps:.2}: Adv_DI {:.4} >= Adv_MI {:.4} - 2 SE ({se:.4})",
                di.advantage, mi.advantage
            ),
        );
        let general = (eps.exp() - 1.0).min(1.0);
        c.check(
            mi.advantage <= general,
            format!("epsilon {eps:.2}: Adv_MI {:.4} <= min(e^eps - 1, 1) = {general:.4}", mi.advantage),
        );
        clip_log.push((format!("ordering epsilon {eps:.2}"), di.max_clipped_norm.unwrap_or(f64::NAN)));
    }
}

/// Random centers at every step; records what the adversary saw.
struct RandomWalk {
    rng: dpident_core::rng::StreamRng,
    dim: usize,
    setups: Vec<StepSetup>,
    releases: Vec<Vec<f64>>,
}

impl AdaptiveMechanism for RandomWalk {
    fn setup(&mut self, _step: usize) -> dpident_core::Result<StepSetup> {
        let mut draw = |s: f64| -> Vec<f64> { (0..self.dim).map(|_| s * self.rng.sample::<f64, _>(StandardNormal)).collect() };
        let setup = StepSetup {
            center_d: draw(1.0),
            center_d_prime: draw(1.0),
            sigma: NoiseScale::new(self.rng.random_range(0.5..2.0))?,
        };
        self.setups.push(setup.clone());
        Ok(setup)
    }

    fn observe(&mut self, _step: usize, released: &[f64]) -> dpident_core::Result<()> {
        self.releases.push(released.to_vec());
        Ok(())
    }
}

fn numerical_core(c: &mut Criterion, clip_log: &[(String, f64)]) {
    // analytic vs central-difference gradients
    let ds = synth_blobs(12, 5, 3, 1.5, 8).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..3 {
        // nonzero biases keep ReLU pre-activations off the kink at 0
        let mut init = stream(seed, Domain::Initialization, 0);
        let net = Network::glorot(&[5, 7, 6, 3], &mut init).unwrap();
        let jittered: Vec<f64> = net.params().iter().map(|t| t + init.random_range(-0.3..0.3)).collect();
        let net = net.with_params(&jittered).unwrap();
        let theta = net.params();
        for i in 0..ds.len() {
            let (x, y) = (&ds.features[i], &ds.labels[i]);
            let g = net.per_example_gradient(x, y).unwrap();
            for j in 0..theta.len() {
                let h = 1e-6;
                let mut plus = theta.clone();
                plus[j] += h;
                let mut minus = theta.clone();
                minus[j] -= h;
                let fd = (net.with_params(&plus).unwrap().loss(x, y).unwrap()
                    - net.with_params(&minus).unwrap().loss(x, y).unwrap())
                    / (2.0 * h);
                if fd.abs() < 1e-8 && g[j].abs() < 1e-8 {
                    continue;
                }
                worst = worst.max((g[j] - fd).abs() / fd.abs());
            }
        }
    }
    c.check(worst < 1e-4, format!("per-example gradients vs finite differences: worst relative gap {worst:.2e} < 1e-4"));

    for (label, max) in clip_log {
        c.check(*max <= 3.0 * (1.0 + 1e-12), format!("{label}: largest clipped norm {max:.6} <= C"));
    }

    // sequential belief vs product of likelihoods
    let mut walk = RandomWalk {
        rng: stream(9, Domain::Experiment, 0),
        dim: 4,
        setups: Vec::new(),
        releases: Vec::new(),
    };
    let out = dpident_core::adversary::run_di_experiment(&mut walk, 60, &mut stream(9, Domain::Challenge, 0)).unwrap();
    let (mut log_d, mut log_dp) = (0.0, 0.0);
    let mut gap = 0.0f64;
    for (t, (setup, x)) in walk.setups.iter().zip(&walk.releases).enumerate() {
        log_d += log_density(x, &setup.center_d, setup.sigma).unwrap();
        log_dp += log_density(x, &setup.center_d_prime, setup.sigma).unwrap();
        let product = 1.0 / (1.0 + (log_dp - log_d).exp());
        gap = gap.max((product - out.belief_trajectory[t]).abs());
    }
    c.check(gap < 1e-10, format!("recursive vs product-form belief over 60 steps: gap {gap:.2e} < 1e-10"));

    // bit-identical reruns, independent of the worker count
    let prep = PreparedCampaign::new(&blobs_config(0.9, NeighborMode::Bounded, SensitivitySource::Heuristic, 40)).unwrap();
    let first = run_prepared_campaign(&prep).unwrap();
    let second = run_prepared_campaign(&prep).unwrap();
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| run_prepared_campaign(&prep).unwrap());
    let json = |r: &AuditReport| serde_json::to_string(r).unwrap();
    c.check(
        first == second && json(&first) == json(&second),
        "same seed: identical campaign reports",
    );
    c.check(first == single, "one worker thread: identical campaign report");
    let a = synthetic(500, 3, 5.0);
    let b = synthetic(500, 3, 5.0);
    c.check(a == b, "same seed: identical synthetic campaigns");
}

fn main() {
    let mut clip_log = Vec::new();
    let results = [
        run(1, "parameter table", parameter_table),
        run(2, "synthetic validation", synthetic_validation),
        run(3, "belief bound per epsilon", belief_bound_figure),
        run(4, "composition identity", composition_identity),
        run(5, "Mahalanobis advantage oracles", oracle_equivalence),
        run(6, "DPSGD audit", |c| dpsgd_audit(c, &mut clip_log)),
        run(7, "DI vs MI adversary ordering", |c| adversary_ordering(c, &mut clip_log)),
        run(8, "numerical core", |c| numerical_core(c, &clip_log)),
    ];
    let passed = results.iter().filter(|ok| **ok).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
