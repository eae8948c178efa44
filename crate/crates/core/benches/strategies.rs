//! Sequential against parallel execution for the data-parallel kernels.

use std::hint::black_box;

use bohrlab::arith::rat;
use bohrlab::bohr::{sqrt_set_enumerate, BohrHammingBall, Frequency};
use bohrlab::certificates::{build_band_witness, rotation_certificate, verify_certificate, Bitset, Certificate, Provenance};
use bohrlab::harmonic::{GridFunction, RationalGrid};
use bohrlab::irrational::Surd;
use bohrlab::roth::roth_form_direct;
use bohrlab::torus::{ApproxHammingBall, TorusPoint};
use bohrlab::weyl::{running_average, FiniteSystem};
use bohrlab::Strategy;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64;

const BOTH: [(&str, Strategy); 2] = [("sequential", Strategy::Sequential), ("parallel", Strategy::Parallel)];

fn sqrt_enumeration(c: &mut Criterion) {
    let freq = Frequency::from_surds(&[Surd::sqrt(2), Surd::sqrt(3), Surd::sqrt(5)], 1_000_000_007).unwrap();
    let ball = ApproxHammingBall::new(TorusPoint::zero(3), 1, rat(1, 8)).unwrap();
    let bh = BohrHammingBall::new(freq, ball).unwrap();
    let mut g = c.benchmark_group("sqrt_set_enumerate");
    for (name, s) in BOTH {
        g.bench_with_input(BenchmarkId::new(name, 1_000_000), &s, |b, &s| {
            b.iter(|| sqrt_set_enumerate(black_box(&bh), 1_000_000, s).unwrap())
        });
    }
    g.finish();
}

fn certificate_verification(c: &mut Criterion) {
    let n = 4_000_000;
    let b = Bitset::from_fn(n, Strategy::Parallel, |i| i % 3 == 0);
    let s: Vec<i64> = (1..2000).filter(|x| x % 3 != 0).collect();
    let cert = Certificate::new(n, 1, rat(1, 4), &s, b, Provenance::Explicit).unwrap();
    let mut g = c.benchmark_group("verify_certificate");
    g.sample_size(10);
    for (name, st) in BOTH {
        g.bench_with_input(BenchmarkId::new(name, n), &st, |bch, &st| {
            bch.iter(|| assert!(verify_certificate(black_box(&cert), st).valid))
        });
    }
    g.finish();
}

fn rotation_certificates(c: &mut Criterion) {
    let band = build_band_witness(1, &rat(1, 4), 64).unwrap();
    let beta: Vec<Surd> = [2, 3, 5, 7].into_iter().take(band.witness.r).map(Surd::sqrt).collect();
    let freq = Frequency::from_surds(&beta, 1_000_003).unwrap();
    let mut g = c.benchmark_group("rotation_certificate");
    g.sample_size(10);
    for (name, s) in BOTH {
        g.bench_with_input(BenchmarkId::new(name, 1_000_000), &s, |b, &s| {
            b.iter(|| rotation_certificate(&band.witness, &band.ball, &freq, 1_000_000, s).unwrap())
        });
    }
    g.finish();
}

fn three_term_form(c: &mut Criterion) {
    let f = GridFunction::from_fn(2, 9, |z| Complex64::new((z[0] * 3 + z[1]) as f64 / 81.0, 0.0)).unwrap();
    let mut g = c.benchmark_group("roth_form_direct");
    for (name, s) in BOTH {
        g.bench_with_input(BenchmarkId::new(name, 81), &s, |b, &s| {
            b.iter(|| roth_form_direct(black_box(&f), &f, &f, s).unwrap())
        });
    }
    g.finish();
}

fn weyl_residues(c: &mut Criterion) {
    let sys = FiniteSystem::weyl(101, vec![7]).unwrap();
    let f = RationalGrid::indicator(2, 101, |z| (z[0] * z[0] + z[1]) % 5 < 2).unwrap();
    let mut g = c.benchmark_group("residue_table");
    g.sample_size(10);
    for (name, s) in BOTH {
        g.bench_with_input(BenchmarkId::new(name, 101), &s, |b, &s| {
            b.iter(|| sys.residue_table(black_box(&f), s).unwrap())
        });
    }
    g.finish();
}

fn running_averages(c: &mut Criterion) {
    let checkpoints = bohrlab::weyl::ladder(2_000_000, 12);
    let mut g = c.benchmark_group("running_average");
    g.sample_size(10);
    for (name, s) in BOTH {
        g.bench_with_input(BenchmarkId::new(name, 2_000_000), &s, |b, &s| {
            b.iter(|| {
                running_average(&checkpoints, s, |n| {
                    let x = (n as f64 * std::f64::consts::SQRT_2).fract();
                    (std::f64::consts::TAU * x * n as f64).cos()
                })
                .unwrap()
            })
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    sqrt_enumeration,
    certificate_verification,
    rotation_certificates,
    three_term_form,
    weyl_residues,
    running_averages
);
criterion_main!(benches);
