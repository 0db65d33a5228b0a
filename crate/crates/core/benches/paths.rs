use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use localu::estimator::{evaluate_grid, u_naive_with, EvalPath};
use localu::models::sample;
use localu::par::Schedule;
use localu::{Kernel, SampleModel};

fn grid() -> Vec<Vec<f64>> {
    [-1.0, -0.5, 0.0, 0.5, 1.0]
        .iter()
        .map(|t| vec![*t])
        .collect()
}

fn naive_vs_fast(c: &mut Criterion) {
    let model: SampleModel = "normal01:sum:m=2".parse().unwrap();
    let gaussian = Kernel::gaussian();
    let uniform = Kernel::uniform();
    let t = grid();
    let mut group = c.benchmark_group("naive_vs_fast");
    group.sample_size(10);
    for n in [500usize, 1000, 2000] {
        let s = sample(&model, n, 1).unwrap();
        let lh = [(n as f64).powf(-1.0 / 3.0)];
        group.bench_with_input(BenchmarkId::new("naive_gaussian", n), &n, |b, _| {
            b.iter(|| evaluate_grid(&s, &model, &gaussian, &t, &lh, EvalPath::Naive).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fft_gaussian", n), &n, |b, _| {
            b.iter(|| evaluate_grid(&s, &model, &gaussian, &t, &lh, EvalPath::Fast).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("naive_uniform", n), &n, |b, _| {
            b.iter(|| evaluate_grid(&s, &model, &uniform, &t, &lh, EvalPath::Naive).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sorted_uniform", n), &n, |b, _| {
            b.iter(|| evaluate_grid(&s, &model, &uniform, &t, &lh, EvalPath::Exact).unwrap())
        });
    }
    group.finish();
}

fn pair_counts(c: &mut Criterion) {
    let model: SampleModel = "normal01:distance:d=2".parse().unwrap();
    let ball = Kernel::indicator_ball(1);
    let zero = vec![vec![0.0]];
    let mut group = c.benchmark_group("pair_counts");
    group.sample_size(10);
    for n in [1000usize, 4000] {
        let s = sample(&model, n, 2).unwrap();
        let lh = [0.05, 0.1, 0.2];
        group.bench_with_input(BenchmarkId::new("cells", n), &n, |b, _| {
            b.iter(|| evaluate_grid(&s, &model, &ball, &zero, &lh, EvalPath::Exact).unwrap())
        });
    }
    group.finish();
}

fn schedules(c: &mut Criterion) {
    let model: SampleModel = "normal01:sum:m=3".parse().unwrap();
    let k = Kernel::epanechnikov();
    let s = sample(&model, 120, 3).unwrap();
    let mut group = c.benchmark_group("schedule");
    group.sample_size(10);
    for (name, schedule) in [
        ("sequential", Schedule::Sequential),
        ("parallel", Schedule::Parallel),
    ] {
        group.bench_function(name, |b| {
            b.iter(|| u_naive_with(&s, &model, &k, black_box(&[0.0]), 0.3, schedule).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, naive_vs_fast, pair_counts, schedules);
criterion_main!(benches);
