use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sqg_core::domain::project;
use sqg_core::{
    lmc_step, make_quadratic, make_toy, psgd_beta, sample_gibbs, seedstream, two_point_estimator,
    LangevinConfig, Sense, SqConfig, Tail, ToySpec, UpperDomain,
};

fn bench_lmc_step(c: &mut Criterion) {
    let d = 16;
    let x: Vec<f64> = (0..d).map(|i| 0.1 * i as f64).collect();
    let grad: Vec<f64> = (0..d).map(|i| 0.01 * (i as f64 - 8.0)).collect();
    let noise = vec![0.3; d];
    c.bench_function("lmc_step_d16", |b| {
        b.iter(|| lmc_step(black_box(&x), black_box(&grad), 0.01, 0.05, black_box(&noise)))
    });
}

fn bench_sample_gibbs(c: &mut Criterion) {
    let problem = make_toy(ToySpec {
        d: 5,
        k: 4,
        sense: Sense::Optimistic,
    })
    .unwrap();
    let config = LangevinConfig::strict_iid(0.05, 0.02, 100, 32);
    c.bench_function("sample_gibbs_toy_d5_32chains_burn100", |b| {
        b.iter(|| sample_gibbs(black_box(&problem), black_box(&[0.5]), &config, 7).unwrap())
    });
}

fn bench_psgd(c: &mut Criterion) {
    let data: Vec<f64> = (1..=10).map(f64::from).collect();
    let mut config = SqConfig::new(Tail::Upper);
    config.delta = 0.2;
    config.inner_iters = 1_000;
    config.beta_bound = 12.0;
    c.bench_function("psgd_beta_discrete_1k_iters", |b| {
        b.iter(|| {
            let mut k = 0usize;
            psgd_beta(
                &[],
                |_theta, _rng| {
                    let v = data[k % data.len()];
                    k += 1;
                    Ok(v)
                },
                black_box(&config),
                42,
            )
            .unwrap()
        })
    });
}

fn bench_two_point(c: &mut Criterion) {
    let m = 8;
    let b_u = 8;
    let mut rng = seedstream::stream(11, &[0x77]);
    let directions: Vec<Vec<f64>> = (0..b_u)
        .map(|_| sqg_core::sample_unit_sphere(m, &mut rng))
        .collect();
    let plus: Vec<f64> = (0..b_u).map(|i| 1.0 + 0.01 * i as f64).collect();
    let minus: Vec<f64> = (0..b_u).map(|i| 1.0 - 0.01 * i as f64).collect();
    c.bench_function("two_point_estimator_m8_b8", |b| {
        b.iter(|| {
            two_point_estimator(
                black_box(&plus),
                black_box(&minus),
                black_box(&directions),
                0.1,
                m,
            )
            .unwrap()
        })
    });
}

fn bench_projections(c: &mut Criterion) {
    let m = 64;
    let boxed = UpperDomain::symmetric_box(m, 1.0).unwrap();
    let ball = UpperDomain::ball(vec![0.0; m], 1.0).unwrap();
    let point: Vec<f64> = (0..m).map(|i| ((i as f64) * 0.37).sin() * 3.0).collect();
    c.bench_function("project_box_m64", |b| {
        b.iter(|| project(black_box(&boxed), black_box(&point)).unwrap())
    });
    c.bench_function("project_ball_m64", |b| {
        b.iter(|| project(black_box(&ball), black_box(&point)).unwrap())
    });
}

fn bench_quadratic_batch(c: &mut Criterion) {
    let problem = make_quadratic(8, Sense::Optimistic);
    let mut config = LangevinConfig::new(0.05, 0.02);
    config.n_chains = 8;
    config.burn_in = 50;
    config.samples_per_chain = 25;
    c.bench_function("sample_gibbs_quadratic_d8_thinned200", |b| {
        b.iter(|| sample_gibbs(black_box(&problem), black_box(&[0.3]), &config, 5).unwrap())
    });
}

criterion_group!(
    kernels,
    bench_lmc_step,
    bench_sample_gibbs,
    bench_psgd,
    bench_two_point,
    bench_projections,
    bench_quadratic_batch
);
criterion_main!(kernels);
