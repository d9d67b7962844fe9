//! Property-based invariant suite. Every law here is something the rest of
//! the toolkit silently relies on: projection geometry, gradient-mapping
//! bounds, interiorization feasibility, superquantile identities, metric
//! axioms for the 1-d Wasserstein distance, and bitwise sampler determinism.

use proptest::prelude::*;
use sqg_core::domain::{interiorize, project};
use sqg_core::{
    empirical_quantile, exact_discrete_cvar, gradient_mapping, make_quadratic, phi_subgradient,
    phi_value, pszo_minsel, sample_gibbs, wasserstein1_1d, LangevinConfig, OuterConfig,
    Sense, SqConfig, Tail, UpperDomain,
};

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Strategy: a point in R³ with coordinates in [−10, 10].
fn point3() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0_f64, 3)
}

fn box3() -> UpperDomain {
    UpperDomain::boxed(vec![-1.0, -2.0, 0.5], vec![1.0, 0.0, 2.0]).unwrap()
}

fn ball3() -> UpperDomain {
    UpperDomain::ball(vec![0.3, -0.2, 1.0], 1.5).unwrap()
}

proptest! {
    // ---- projection geometry -------------------------------------------

    /// P(P(x)) = P(x) and P(x) ∈ Θ, for boxes and balls.
    #[test]
    fn projection_is_idempotent_and_feasible(p in point3()) {
        for domain in [box3(), ball3()] {
            let once = project(&domain, &p).unwrap();
            prop_assert!(domain.contains(&once, 1e-9));
            let twice = project(&domain, &once).unwrap();
            prop_assert!(norm(&sub(&twice, &once)) <= 1e-12);
        }
    }

    /// ‖P(x) − P(y)‖ ≤ ‖x − y‖.
    #[test]
    fn projection_is_nonexpansive(p in point3(), q in point3()) {
        for domain in [box3(), ball3()] {
            let pp = project(&domain, &p).unwrap();
            let pq = project(&domain, &q).unwrap();
            prop_assert!(norm(&sub(&pp, &pq)) <= norm(&sub(&p, &q)) + 1e-12);
        }
    }

    /// Variational characterization: ⟨x − P(x), z − P(x)⟩ ≤ 0 for all z ∈ Θ,
    /// checked against projected probe points.
    #[test]
    fn projection_satisfies_the_obtuse_angle_test(p in point3(), probe in point3()) {
        for domain in [box3(), ball3()] {
            let px = project(&domain, &p).unwrap();
            let z = project(&domain, &probe).unwrap();
            let inner: f64 = sub(&p, &px)
                .iter()
                .zip(sub(&z, &px).iter())
                .map(|(a, b)| a * b)
                .sum();
            prop_assert!(inner <= 1e-9, "inner product {inner} must be ≤ 0");
        }
    }

    // ---- gradient mapping ----------------------------------------------

    /// The projected gradient mapping never exceeds the raw gradient norm
    /// when evaluated at a feasible point: ‖G_η(θ)‖ ≤ ‖g‖.
    #[test]
    fn gradient_mapping_is_bounded_by_the_gradient(
        p in point3(),
        g in point3(),
        eta in 0.01..2.0_f64,
    ) {
        for domain in [box3(), ball3()] {
            let theta = project(&domain, &p).unwrap();
            let gm = gradient_mapping(&domain, &theta, &g, eta).unwrap();
            prop_assert!(norm(&gm) <= norm(&g) + 1e-9);
        }
    }

    // ---- interiorization -----------------------------------------------

    /// Any point of the ρ-shrunk domain, perturbed by any vector of norm
    /// ≤ ρ, stays inside the original domain.
    #[test]
    fn interiorized_points_absorb_full_radius_perturbations(
        p in point3(),
        dir in point3(),
        scale in 0.0..1.0_f64,
        rho in 0.01..0.4_f64,
    ) {
        for domain in [box3(), ball3()] {
            let shrunk = interiorize(&domain, rho).unwrap();
            let inner_point = shrunk.project(&p).unwrap();
            let d = norm(&dir).max(1e-12);
            let perturbed: Vec<f64> = inner_point
                .iter()
                .zip(&dir)
                .map(|(c, u)| c + rho * scale * u / d)
                .collect();
            prop_assert!(
                domain.contains(&perturbed, 1e-9),
                "θ̄ + ρu left the domain (ρ = {rho})"
            );
        }
    }

    // ---- superquantile identities ----------------------------------------

    /// Every stochastic subgradient of the dual objective obeys
    /// |∂φ| ≤ σ = 1 + δ⁻¹, both tails.
    #[test]
    fn subgradients_respect_the_sigma_bound(
        beta in -20.0..20.0_f64,
        f in -20.0..20.0_f64,
        delta in 0.01..0.5_f64,
    ) {
        let sigma = 1.0 + 1.0 / delta;
        for tail in [Tail::Upper, Tail::Lower] {
            let g = phi_subgradient(beta, f, delta, tail);
            prop_assert!(g.abs() <= sigma + 1e-12);
        }
    }

    /// The upper-tail dual is convex in β (it is minimized); the lower-tail
    /// dual is its mirror image — concave, and maximized. Midpoint vs chord
    /// on random data, both orientations.
    #[test]
    fn phi_curvature_matches_its_optimization_direction(
        data in prop::collection::vec(-5.0..5.0_f64, 3..60),
        a in -8.0..8.0_f64,
        b in -8.0..8.0_f64,
        delta in 0.05..0.5_f64,
    ) {
        let mid_up = phi_value(0.5 * (a + b), &data, delta, Tail::Upper).unwrap();
        let chord_up = 0.5 * phi_value(a, &data, delta, Tail::Upper).unwrap()
            + 0.5 * phi_value(b, &data, delta, Tail::Upper).unwrap();
        prop_assert!(mid_up <= chord_up + 1e-9, "upper tail must be convex: {mid_up} > {chord_up}");
        let mid_low = phi_value(0.5 * (a + b), &data, delta, Tail::Lower).unwrap();
        let chord_low = 0.5 * phi_value(a, &data, delta, Tail::Lower).unwrap()
            + 0.5 * phi_value(b, &data, delta, Tail::Lower).unwrap();
        prop_assert!(mid_low >= chord_low - 1e-9, "lower tail must be concave: {mid_low} < {chord_low}");
    }

    /// When δM is an integer the dual attains its minimum at the empirical
    /// quantile and equals the exact discrete tail mean. The lower-tail
    /// quantile is reached through the mirror identity q⁻(data) = −q⁺(−data).
    #[test]
    fn phi_at_the_quantile_equals_the_exact_tail_mean(
        data in prop::collection::vec(-50.0..50.0_f64, 10..=10),
        j in 1..=5usize,
    ) {
        let delta = j as f64 / 10.0;
        let q_up = empirical_quantile(&data, delta).unwrap();
        let negated: Vec<f64> = data.iter().map(|v| -v).collect();
        let q_low = -empirical_quantile(&negated, delta).unwrap();
        for (tail, q) in [(Tail::Upper, q_up), (Tail::Lower, q_low)] {
            let phi = phi_value(q, &data, delta, tail).unwrap();
            let exact = exact_discrete_cvar(&data, delta, tail).unwrap();
            prop_assert!(
                (phi - exact).abs() <= 1e-9 * (1.0 + exact.abs()),
                "φ(q) = {phi} vs exact {exact} at δ = {delta}"
            );
        }
    }

    /// Tail means are monotone in δ: widening the upper tail can only pull
    /// the mean down; widening the lower tail can only pull it up.
    #[test]
    fn tail_means_are_monotone_in_delta(
        data in prop::collection::vec(-50.0..50.0_f64, 4..80),
        d1 in 0.02..0.5_f64,
        d2 in 0.02..0.5_f64,
    ) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let up_narrow = exact_discrete_cvar(&data, lo, Tail::Upper).unwrap();
        let up_wide = exact_discrete_cvar(&data, hi, Tail::Upper).unwrap();
        prop_assert!(up_wide <= up_narrow + 1e-12);
        let low_narrow = exact_discrete_cvar(&data, lo, Tail::Lower).unwrap();
        let low_wide = exact_discrete_cvar(&data, hi, Tail::Lower).unwrap();
        prop_assert!(low_wide >= low_narrow - 1e-12);
    }

    // ---- Wasserstein axioms ---------------------------------------------

    /// W₁ is a metric on equal-size empirical distributions: nonnegative,
    /// zero on identical samples, symmetric, and triangle-consistent.
    #[test]
    fn wasserstein_satisfies_the_metric_axioms(
        a in prop::collection::vec(-30.0..30.0_f64, 12..=12),
        b in prop::collection::vec(-30.0..30.0_f64, 12..=12),
        c in prop::collection::vec(-30.0..30.0_f64, 12..=12),
    ) {
        let dab = wasserstein1_1d(&a, &b).unwrap();
        let dba = wasserstein1_1d(&b, &a).unwrap();
        let dac = wasserstein1_1d(&a, &c).unwrap();
        let dcb = wasserstein1_1d(&c, &b).unwrap();
        let daa = wasserstein1_1d(&a, &a).unwrap();
        prop_assert!(dab >= 0.0 && daa.abs() <= 1e-12);
        prop_assert!((dab - dba).abs() <= 1e-12);
        prop_assert!(dab <= dac + dcb + 1e-9);
    }

    /// Permuting a sample does not change the distance (it is a property of
    /// the empirical distribution, not the ordering).
    #[test]
    fn wasserstein_ignores_sample_order(
        a in prop::collection::vec(-30.0..30.0_f64, 8..=8),
        b in prop::collection::vec(-30.0..30.0_f64, 8..=8),
        rot in 0..8usize,
    ) {
        let mut a2 = a.clone();
        a2.rotate_left(rot);
        let d1 = wasserstein1_1d(&a, &b).unwrap();
        let d2 = wasserstein1_1d(&a2, &b).unwrap();
        prop_assert!((d1 - d2).abs() <= 1e-12);
    }
}

// ---- determinism and feasibility (deterministic fixtures, plain tests) ----

/// Identical (seed, config, θ) must reproduce the Gibbs batch bit for bit;
/// changing the seed must not.
#[test]
fn gibbs_batches_are_bitwise_reproducible() {
    let problem = make_quadratic(3, Sense::Optimistic);
    let mut config = LangevinConfig::new(0.05, 0.01);
    config.n_chains = 6;
    config.burn_in = 40;
    config.samples_per_chain = 5;
    config.steps_per_sample = 2;
    let theta = vec![0.4];
    let a = sample_gibbs(&problem, &theta, &config, 9001).unwrap();
    let b = sample_gibbs(&problem, &theta, &config, 9001).unwrap();
    for (ra, rb) in a.iter_rows().zip(b.iter_rows()) {
        for (x, y) in ra.iter().zip(rb) {
            assert_eq!(x.to_bits(), y.to_bits(), "same seed must replay exactly");
        }
    }
    let c = sample_gibbs(&problem, &theta, &config, 9002).unwrap();
    let differs = a
        .iter_rows()
        .zip(c.iter_rows())
        .any(|(ra, rc)| ra.iter().zip(rc).any(|(x, y)| x.to_bits() != y.to_bits()));
    assert!(differs, "different seeds must not collide");
}

/// Every iterate the outer loop visits — including every recorded θ and the
/// selected best point — stays inside Θ.
#[test]
fn outer_iterates_never_leave_the_domain() {
    let problem = make_quadratic(2, Sense::Optimistic);
    let mut sq = SqConfig::new(Tail::Lower);
    sq.delta = 0.2;
    sq.inner_iters = 40;
    let langevin = LangevinConfig::strict_iid(0.05, 0.02, 60, 16);
    // Start outside Θ = [−2, 2] on purpose: the loop must project first.
    let mut config = OuterConfig::new(vec![5.0], sq, langevin);
    config.n_outer = 4;
    config.batch_directions = 2;
    config.rho = 0.2;
    config.eta = 0.1;
    config.seed = 31;
    let run = pszo_minsel(&problem, &config).unwrap();
    let domain = problem.domain();
    for record in run.records() {
        assert!(
            domain.contains(&record.theta, 1e-9),
            "iterate {:?} escaped the domain",
            record.theta
        );
    }
    let best = run.best().expect("completed run must carry a selection");
    assert!(domain.contains(&best.theta, 1e-9));
}

/// Same master seed ⇒ byte-identical outer trajectories (selection included).
#[test]
fn outer_runs_are_reproducible_end_to_end() {
    let problem = make_quadratic(2, Sense::Optimistic);
    let mut sq = SqConfig::new(Tail::Lower);
    sq.delta = 0.2;
    sq.inner_iters = 30;
    let langevin = LangevinConfig::strict_iid(0.05, 0.02, 50, 12);
    let mut config = OuterConfig::new(vec![1.0], sq, langevin);
    config.n_outer = 3;
    config.batch_directions = 2;
    config.seed = 77;
    let a = pszo_minsel(&problem, &config).unwrap();
    let b = pszo_minsel(&problem, &config).unwrap();
    assert_eq!(a.records().len(), b.records().len());
    for (ra, rb) in a.records().iter().zip(b.records()) {
        assert_eq!(ra.theta, rb.theta);
        assert_eq!(ra.psi_tilde.to_bits(), rb.psi_tilde.to_bits());
    }
    let (ba, bb) = (a.best().unwrap(), b.best().unwrap());
    assert_eq!(ba.index, bb.index);
    assert_eq!(ba.theta, bb.theta);
}
