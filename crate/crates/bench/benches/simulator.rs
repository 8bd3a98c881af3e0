use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dmsgd_bench::{quadratic_simulation, ring_mixing};
use dmsgd_core::UpdateOption;

fn spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobi_spectrum");
    for n in [8, 32, 64] {
        let mixing = ring_mixing(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &mixing, |b, m| {
            b.iter(|| black_box(m).spectrum().expect("symmetric"))
        });
    }
    group.finish();
}

fn run_loop(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_200_iters");
    for (n, d) in [(8, 4), (32, 16)] {
        for option in [UpdateOption::I, UpdateOption::II] {
            let sim = quadratic_simulation(n, d, 200, option);
            group.bench_function(
                BenchmarkId::new(format!("option_{option}"), format!("n{n}_d{d}")),
                |b| b.iter(|| black_box(&sim).run()),
            );
        }
    }
    group.finish();
}

criterion_group!(benches, spectrum, run_loop);
criterion_main!(benches);
