//! Cross-checks of the Langevin sampler against independent oracles:
//! closed-form Gaussian moments and deterministic grid quadrature.

use sqg_core::{
    make_quadratic, make_toy, sample_gibbs, LangevinConfig, LmcInit, Sense, ToySpec,
};

/// Frobenius norm of (A − B) relative to the Frobenius norm of B.
fn rel_frobenius(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    (num / den).sqrt()
}

/// The discretized chain for a unit-curvature quadratic target is an exact
/// AR(1) process, so its stationary law is known in closed form: mean at the
/// minimizer, covariance λ/(1−h/2)·I — *not* λI; the test would fail with
/// the continuous-time value at this step size.
#[test]
fn gaussian_target_moments_match_the_ar1_closed_form() {
    let d = 3;
    let problem = make_quadratic(d, Sense::Optimistic);
    let lambda = 0.01;
    let h = 0.2;
    // h is run far above the bias-safe rule h < 2λ/L̂ on purpose — the point
    // is the discretization-bias formula itself — so no smoothness estimate
    // is supplied (supplying one would reject this step size up front).
    let config = LangevinConfig {
        lambda,
        step_size: h,
        burn_in: 100,
        steps_per_sample: 10,
        n_chains: 50,
        samples_per_chain: 2000,
        init: LmcInit::GaussianScale(1.0),
        smoothness: None,
    };
    assert_eq!(config.total_samples(), 100_000);
    let batch = sample_gibbs(&problem, &[0.0], &config, 2024).unwrap();

    let mean = batch.mean();
    for (j, mj) in mean.iter().enumerate() {
        assert!(
            mj.abs() <= 0.01,
            "coordinate {j} mean {mj:.5} off the target mean 0"
        );
    }

    let cov = batch.covariance();
    let sigma2 = lambda / (1.0 - h / 2.0);
    let target: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| if i == j { sigma2 } else { 0.0 }).collect())
        .collect();
    let rel = rel_frobenius(&cov, &target);
    assert!(
        rel <= 0.05,
        "covariance off by {:.2}% (Frobenius, relative) from λ/(1−h/2)·I",
        rel * 100.0
    );
}

/// Deterministic oracle for E‖X‖ under the Gibbs measure of the 2-D sphere
/// instance: midpoint quadrature of ‖x‖·exp(−g/λ) over a 2001² grid on
/// [−3,3]², normalized by the same grid's partition sum. The density decays
/// like exp(−r⁴/4λ) outside the ring, so the truncation error at radius 3
/// is far below the tolerance.
#[test]
fn sphere_instance_radius_expectation_matches_grid_quadrature() {
    let spec = ToySpec { d: 2, k: 1, sense: Sense::Pessimistic };
    let problem = make_toy(spec).unwrap();
    let theta = [0.7];
    let lambda = 0.05;

    let n = 2001usize;
    let span = 6.0;
    let step = span / (n - 1) as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..n {
        let x0 = -3.0 + i as f64 * step;
        for j in 0..n {
            let x1 = -3.0 + j as f64 * step;
            let w = (-problem.g(&theta, &[x0, x1]) / lambda).exp();
            num += w * (x0 * x0 + x1 * x1).sqrt();
            den += w;
        }
    }
    let oracle = num / den;

    // Ring curvature is 2(1+θ²) ≈ 3; h is held a factor ~7 below the 2λ/L̂
    // stability limit and the burn-in covers 12 contraction e-folds.
    let config = LangevinConfig {
        lambda,
        step_size: 0.005,
        burn_in: 800,
        steps_per_sample: 10,
        n_chains: 100,
        samples_per_chain: 200,
        init: LmcInit::GaussianScale(1.0),
        smoothness: Some(2.0 * (1.0 + theta[0] * theta[0])),
    };
    let batch = sample_gibbs(&problem, &theta, &config, 7_311).unwrap();
    let mean_norm = batch
        .iter_rows()
        .map(|x| (x[0] * x[0] + x[1] * x[1]).sqrt())
        .sum::<f64>()
        / batch.len() as f64;

    let rel = (mean_norm - oracle).abs() / oracle;
    assert!(
        rel <= 0.02,
        "E‖X‖ = {mean_norm:.5} vs quadrature {oracle:.5}: off by {:.2}%",
        rel * 100.0
    );
}

/// As λ decreases the Gibbs measure concentrates on the minimizer set: the
/// mean absolute radial deviation from the solution sphere must shrink
/// strictly across a 10:3:1 temperature ladder.
#[test]
fn gibbs_measure_concentrates_as_temperature_drops() {
    let spec = ToySpec { d: 2, k: 1, sense: Sense::Pessimistic };
    let problem = make_toy(spec).unwrap();
    let theta = [0.5_f64];
    let target_radius = (1.0 + theta[0] * theta[0]).sqrt();

    let mut deviations = Vec::new();
    for &lambda in &[0.1, 0.03, 0.01] {
        // Keep h·curvature/λ and the relaxation depth fixed across rungs so
        // only the temperature varies.
        let h = 0.1 * lambda;
        let config = LangevinConfig {
            lambda,
            step_size: h,
            burn_in: (14.0 / (h * 2.0)).ceil() as usize,
            steps_per_sample: 5,
            n_chains: 200,
            samples_per_chain: 20,
            init: LmcInit::GaussianScale(1.0),
            smoothness: Some(2.0 * (1.0 + theta[0] * theta[0])),
        };
        let batch = sample_gibbs(&problem, &theta, &config, 55_100).unwrap();
        let dev = batch
            .iter_rows()
            .map(|x| ((x[0] * x[0] + x[1] * x[1]).sqrt() - target_radius).abs())
            .sum::<f64>()
            / batch.len() as f64;
        deviations.push(dev);
    }
    assert!(
        deviations[0] > deviations[1] && deviations[1] > deviations[2],
        "radial deviation must shrink with λ, got {deviations:?}"
    );
    // Scale sanity: the radial width is Θ(√λ), so the 10:1 temperature drop
    // should shrink the deviation by roughly √10 ≈ 3.2.
    let ratio = deviations[0] / deviations[2];
    assert!(
        (2.0..5.0).contains(&ratio),
        "width ratio across the ladder should be near √10, got {ratio:.2}"
    );
}
