use dpident_core::adversary::{run_di_experiment, FixedMechanism};
use dpident_core::bounds::mahalanobis_advantage;
use dpident_core::dp::{perturb, NoiseScale};
use dpident_core::rng::{stream, Domain};

#[test]
fn perturbation_moments_over_a_million_draws() {
    let n = 1_000_000;
    let mut rng = stream(1, Domain::Experiment, 0);
    let center = [0.0, 5.0];
    let sigma = NoiseScale::new(2.0).unwrap();
    let (mut s0, mut s1, mut ss1) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let x = perturb(&center, sigma, &mut rng);
        s0 += x[0];
        s1 += x[1];
        ss1 += (x[1] - 5.0) * (x[1] - 5.0);
    }
    let nf = n as f64;
    // standard errors: sigma / sqrt(n) for the mean, sigma^2 sqrt(2/n) for the variance
    let mean_se = 2.0 / nf.sqrt();
    let var_se = 4.0 * (2.0 / nf).sqrt();
    assert!((s0 / nf).abs() < 3.0 * mean_se);
    assert!((s1 / nf - 5.0).abs() < 3.0 * mean_se);
    assert!((ss1 / nf - 4.0).abs() < 3.0 * var_se);
    assert!((ss1 / nf - 4.0).abs() < 0.05);

    let unit = NoiseScale::new(1.0).unwrap();
    let mean: f64 = (0..n).map(|_| perturb(&[0.0], unit, &mut rng)[0]).sum::<f64>() / nf;
    assert!(mean.abs() < 0.005);
}

#[test]
fn single_release_win_rate_matches_closed_form() {
    let runs = 1_000_000;
    for (rep, (a, b, sigma)) in [(0.0, 1.0, 1.0), (17.0, 8.0, 10.0), (0.0, 0.2, 1.5)].into_iter().enumerate() {
        let mut mech = FixedMechanism {
            center_d: vec![a],
            center_d_prime: vec![b],
            sigma: NoiseScale::new(sigma).unwrap(),
        };
        let mut rng = stream(2, Domain::Experiment, rep as u64);
        let wins = (0..runs)
            .filter(|_| run_di_experiment(&mut mech, 1, &mut rng).unwrap().win)
            .count();
        let adv = mahalanobis_advantage(&[a], &[b], mech.sigma).unwrap();
        let expected = (adv + 1.0) / 2.0;
        let observed = wins as f64 / runs as f64;
        assert!((observed - expected).abs() < 0.003, "{observed} vs {expected}");
    }
}
