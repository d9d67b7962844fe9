//! Throwaway budget probe. Not part of the deliverable.
use std::time::Instant;

use sqg_core::{
    calibrate_beta_bound, make_toy, pbgd_run, psgd_beta, pszo_minsel, sample_gibbs,
    sample_unit_sphere, seedstream, sq_estimate, two_point_estimator, LangevinConfig, OuterConfig,
    PenaltyConfig, PenaltyVariant, Sense, SqConfig, Tail, ToySpec,
};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[allow(clippy::too_many_arguments)]
fn pszo_errs(
    d: usize,
    k: usize,
    sense: Sense,
    lam: f64,
    h: f64,
    burn: usize,
    m: usize,
    l: usize,
    b_u: usize,
    rho: f64,
    eta: f64,
    delta: f64,
    n_outer: usize,
    theta0: f64,
    seeds: std::ops::Range<u64>,
) -> (Vec<f64>, f64) {
    let problem = make_toy(ToySpec { d, k, sense }).unwrap();
    let tail = match sense {
        Sense::Optimistic => Tail::Lower,
        Sense::Pessimistic => Tail::Upper,
    };
    let mut sq = SqConfig::new(tail);
    sq.delta = delta;
    sq.inner_iters = l;
    let langevin = LangevinConfig::strict_iid(lam, h, burn, m);
    let mut cfg = OuterConfig::new(vec![theta0], sq, langevin);
    cfg.n_outer = n_outer;
    cfg.batch_directions = b_u;
    cfg.rho = rho;
    cfg.eta = eta;
    let n = (seeds.end - seeds.start) as f64;
    let t0 = Instant::now();
    let errs: Vec<f64> = seeds
        .map(|s| {
            let mut c = cfg.clone();
            c.seed = s;
            let run = pszo_minsel(&problem, &c).unwrap();
            run.error_vs_theta_star().unwrap()
        })
        .collect();
    (errs, t0.elapsed().as_secs_f64() / n)
}

fn show(label: &str, errs: &[f64], per_seed: f64) {
    println!(
        "{label}: mean={:.4} errs={:?} wall/seed={per_seed:.1}s",
        mean(errs),
        errs.iter().map(|e| (e * 1e4).round() / 1e4).collect::<Vec<_>>(),
    );
}

fn c1() {
    let (errs, secs) = pszo_errs(
        2,
        1,
        Sense::Optimistic,
        0.01,
        0.004,
        750,
        64,
        100,
        4,
        0.1,
        0.05,
        0.2,
        500,
        1.0,
        1000..1005,
    );
    show("c1 theta0=1.0", &errs, secs);
}

fn c2() {
    // Matched per-query fresh-sample gradient budget; ladder via argv.
    let args: Vec<usize> = std::env::args()
        .skip(2)
        .map(|a| a.parse().unwrap())
        .collect();
    let ms = if args.len() == 4 {
        args.clone()
    } else {
        vec![64, 26, 13, 8]
    };
    for (d, m) in [2usize, 5, 10, 20].into_iter().zip(ms) {
        let (errs, secs) = pszo_errs(
            d,
            d - 1,
            Sense::Optimistic,
            0.01,
            0.004,
            750,
            m,
            100,
            4,
            0.1,
            0.05,
            0.2,
            400,
            1.0,
            2000..2005,
        );
        show(&format!("c2 d={d} M={m}"), &errs, secs);
    }
}

fn c3() {
    for d in [5usize, 30] {
        let (errs, secs) = pszo_errs(
            d,
            1,
            Sense::Optimistic,
            0.01,
            0.004,
            750,
            64,
            100,
            4,
            0.1,
            0.05,
            0.2,
            400,
            1.0,
            3000..3003,
        );
        show(&format!("c3 d={d} k=1"), &errs, secs);
    }
}

fn c4() {
    for d in [5usize, 10] {
        let (errs, secs) = pszo_errs(
            d,
            d - 1,
            Sense::Pessimistic,
            0.01,
            0.004,
            750,
            64,
            100,
            4,
            0.1,
            0.05,
            0.2,
            400,
            1.0,
            4000..4003,
        );
        show(&format!("c4 d={d} pess"), &errs, secs);
    }
}

fn c5() {
    let problem = make_toy(ToySpec {
        d: 2,
        k: 1,
        sense: Sense::Optimistic,
    })
    .unwrap();
    for (gamma, step, x0_scale) in [(10.0, 0.01, 0.5), (10.0, 0.005, 1.0), (5.0, 0.005, 0.5)] {
        for variant in [PenaltyVariant::ValuePenalty, PenaltyVariant::GradNormPenalty] {
            let mut config = PenaltyConfig::new(variant);
            config.n_iters = 400;
            config.gamma = gamma;
            config.joint_step = step;
            let mut errs = Vec::new();
            let mut diverged = 0usize;
            for s in 0..10u64 {
                let mut rng = seedstream::stream(500 + s, &[0x01]);
                let x0: Vec<f64> = (0..2)
                    .map(|_| {
                        let z: f64 = rand_distr::Distribution::sample(
                            &rand_distr::StandardNormal,
                            &mut rng,
                        );
                        x0_scale * z
                    })
                    .collect();
                match pbgd_run(&problem, &config, &[1.0], &x0, 500 + s) {
                    Ok(run) => errs.push(run.error_vs_theta_star().unwrap()),
                    Err(_) => diverged += 1,
                }
            }
            println!(
                "c5 {:?} gamma={gamma} step={step} x0s={x0_scale}: mean={:.4} min={:.4} max={:.4} diverged={diverged}/10",
                variant,
                if errs.is_empty() { f64::NAN } else { mean(&errs) },
                errs.iter().cloned().fold(f64::INFINITY, f64::min),
                errs.iter().cloned().fold(0.0, f64::max)
            );
        }
    }
}

fn c9() {
    let problem = make_toy(ToySpec {
        d: 2,
        k: 1,
        sense: Sense::Optimistic,
    })
    .unwrap();
    let theta = 0.3;
    let rho = 0.1;
    let (lam, h, burn, m, l, delta) = (0.001, 0.0004, 15000, 64, 200, 0.1);
    let langevin = LangevinConfig::strict_iid(lam, h, burn, m);
    let analytic = {
        let fp = problem.hyper_objective(&[theta + rho]).unwrap();
        let fm = problem.hyper_objective(&[theta - rho]).unwrap();
        (fp - fm) / (2.0 * rho)
    };
    let t0 = Instant::now();
    let n_eval = 200usize;
    let mut estimates = Vec::with_capacity(n_eval);
    for s in 0..n_eval as u64 {
        let mut rng = seedstream::stream(9000 + s, &[0x02]);
        let u = sample_unit_sphere(1, &mut rng);
        let mut vals = [0.0f64; 2];
        for (slot, sign) in [(0usize, 1.0f64), (1, -1.0)] {
            let th = [theta + sign * rho * u[0]];
            let solve_cfg = {
                let mut c = langevin.clone();
                c.n_chains = l;
                c
            };
            let solve = sample_gibbs(&problem, &th, &solve_cfg, 77_000 + 4 * s + slot as u64).unwrap();
            let fresh = sample_gibbs(&problem, &th, &langevin, 88_000 + 4 * s + slot as u64).unwrap();
            let b = calibrate_beta_bound(&th, &solve, &problem, 2.0, 1.0).unwrap();
            let mut sq = SqConfig::new(Tail::Lower);
            sq.delta = delta;
            sq.inner_iters = l;
            sq.beta_bound = b;
            let mut row = 0usize;
            let beta_hat = psgd_beta(
                &th,
                |t, _| {
                    let v = problem.f(t, solve.row(row % solve.len()));
                    row += 1;
                    Ok(v)
                },
                &sq,
                77_000 + 4 * s + slot as u64,
            )
            .unwrap();
            let est = sq_estimate(&th, beta_hat, &fresh, delta, Tail::Lower, &problem).unwrap();
            vals[slot] = est.value;
        }
        let g = two_point_estimator(&[vals[0]], &[vals[1]], &[u], rho, 1).unwrap();
        estimates.push(g[0]);
    }
    let mu = mean(&estimates);
    let var = estimates.iter().map(|e| (e - mu).powi(2)).sum::<f64>() / (n_eval as f64 - 1.0);
    let se = (var / n_eval as f64).sqrt();
    println!(
        "c9: mean={mu:.4} analytic={analytic:.4} diff={:.4} SE={se:.4} 3SE={:.4} wall={:.1}s",
        (mu - analytic).abs(),
        3.0 * se,
        t0.elapsed().as_secs_f64()
    );
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "c1".into());
    match which.as_str() {
        "c1" => c1(),
        "c2" => c2(),
        "c3" => c3(),
        "c4" => c4(),
        "c5" => c5(),
        "c9" => c9(),
        other => eprintln!("unknown probe {other}"),
    }
}
