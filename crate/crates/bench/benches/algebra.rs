use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use spreadmaps::bordered::compose_v;
use spreadmaps::mc::{sample_many, RoutingSampler};
use spreadmaps::poisson::{enumerate_configs, omega, omega_entry, omega_entry_collapsed, Configuration};
use spreadmaps::random::{self, BorderScale, GenParams};
use spreadmaps::rstar::compose;
use spreadmaps::{AtomicMeasure, TruncationPolicy};

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(42)
}

fn measure(r: &mut ChaCha8Rng, atoms: usize) -> AtomicMeasure {
    let pairs: Vec<(f64, f64)> = (0..atoms)
        .map(|_| (r.random_range(0.1..10.0), r.random_range(0.0..1.0)))
        .collect();
    AtomicMeasure::from_pairs(&pairs).unwrap()
}

fn bench_convolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("convolve");
    let mut r = rng();
    for atoms in [4usize, 32, 256] {
        let (u, v) = (measure(&mut r, atoms), measure(&mut r, atoms));
        group.bench_with_input(BenchmarkId::from_parameter(atoms), &atoms, |b, _| {
            b.iter(|| black_box(&u).convolve(black_box(&v)).unwrap())
        });
    }
    group.finish();
}

fn bench_normed_exp(c: &mut Criterion) {
    let mut r = rng();
    let psi = measure(&mut r, 3).scale(0.2).unwrap();
    let policy = TruncationPolicy::default();
    c.bench_function("normed_exp/3_atoms", |b| {
        b.iter(|| black_box(&psi).normed_exp(&policy).unwrap())
    });
}

fn bench_compose(c: &mut Criterion) {
    let mut group = c.benchmark_group("compose");
    let mut r = rng();
    let params = GenParams::default();
    for n in [2usize, 8, 16] {
        let chain = random::rstar_chain(&mut r, &params, &[n, n, n]);
        group.bench_with_input(BenchmarkId::new("rstar", n), &n, |b, _| {
            b.iter(|| compose(black_box(&chain[1]), black_box(&chain[0])).unwrap())
        });
        let v = random::vpoly_chain(&mut r, &params, &BorderScale::default(), &[n, n, n], 0.2, 1.0);
        group.bench_with_input(BenchmarkId::new("bordered", n), &n, |b, _| {
            b.iter(|| compose_v(black_box(&v[1]), black_box(&v[0])).unwrap())
        });
    }
    group.finish();
}

fn bench_omega(c: &mut Criterion) {
    let mut group = c.benchmark_group("omega");
    group.sample_size(10);
    let mut r = rng();
    let (params, scale) = (GenParams::default(), BorderScale::default());
    let p = random::vpoly_chain(&mut r, &params, &scale, &[2, 2], 0.2, 0.5).remove(0);
    let policy = TruncationPolicy::default();
    let phi = Configuration(vec![2, 1]);
    let psi = Configuration(vec![1, 2]);
    group.bench_function("entry_labeled/3x3", |b| {
        b.iter(|| omega_entry(black_box(&p), &phi, &psi, &policy).unwrap())
    });
    group.bench_function("entry_collapsed/3x3", |b| {
        b.iter(|| omega_entry_collapsed(black_box(&p), &phi, &psi, &policy).unwrap())
    });
    let cap5 = TruncationPolicy::new(5, 1e-3, 1e-12).unwrap();
    let small = loop {
        let p = random::vpoly_chain(&mut r, &params, &scale, &[2, 2], 0.05, 0.2).remove(0);
        if enumerate_configs(p.target(), &cap5).is_ok() {
            break p;
        }
    };
    group.bench_function("matrix/2x2_cap5", |b| {
        b.iter(|| omega(black_box(&small), &cap5).unwrap())
    });
    group.finish();
}

fn bench_sampling(c: &mut Criterion) {
    let mut group = c.benchmark_group("mc");
    let mut r = rng();
    let p = random::vpoly_chain(
        &mut r,
        &GenParams::default(),
        &BorderScale::default(),
        &[2, 2],
        0.2,
        1.0,
    )
    .remove(0);
    let sampler = RoutingSampler::new(&p).unwrap();
    let mut sr = rng();
    group.bench_function("routing_sample", |b| b.iter(|| sampler.sample(&mut sr)));
    group.sample_size(10);
    group.bench_function("sample_many/10k_x8", |b| {
        b.iter(|| sample_many(black_box(&p), 1, 10_000, 8).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_convolve,
    bench_normed_exp,
    bench_compose,
    bench_omega,
    bench_sampling
);
criterion_main!(benches);
