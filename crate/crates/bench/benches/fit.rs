use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spectral_shift::{fit, fit_basis, FilterSpec, WeightScheme};
use spectral_shift_bench::workload;

fn bench_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit");
    group.sample_size(10);
    for n in [128usize, 256, 512] {
        let (problem, data) = workload(64, n).unwrap();
        let filter = FilterSpec::tikhonov();
        group.bench_with_input(BenchmarkId::new("gram", n), &n, |b, _| {
            b.iter(|| fit(&data, problem.kernel(), &filter, 1e-2, WeightScheme::Normalized).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("basis", n), &n, |b, _| {
            b.iter(|| fit_basis(&data, problem.kernel(), &filter, 1e-2, WeightScheme::Normalized).unwrap())
        });
    }
    group.finish();
}

fn bench_basis_large(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_basis_m512");
    group.sample_size(10);
    for n in [1024usize, 4096] {
        let (problem, data) = workload(512, n).unwrap();
        let filter = FilterSpec::tikhonov();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| fit_basis(&data, problem.kernel(), &filter, 1e-2, WeightScheme::Exact).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_fit, bench_basis_large);
criterion_main!(benches);
