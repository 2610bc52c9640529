use activemars::cmatrix::Assembly;
use activemars::{compute_c, ComputeOptions, PriorSpec, UnivariateMeasure};
use activemars_bench::model;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn by_dimension(c: &mut Criterion) {
    let mut g = c.benchmark_group("compute_c/p");
    g.sample_size(20);
    for p in [2, 8, 32] {
        let m = model(500, p, 41, 7);
        let prior = PriorSpec::unit_cube(p);
        g.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| compute_c(&m, &prior, &ComputeOptions::default()).unwrap())
        });
    }
    g.finish();
}

fn by_assembly(c: &mut Criterion) {
    let m = model(500, 8, 61, 3);
    let prior = PriorSpec::product(vec![UnivariateMeasure::beta(2.0, 3.0).unwrap(); 8]).unwrap();
    let mut g = c.benchmark_group("compute_c/assembly");
    g.sample_size(20);
    for (name, assembly) in [
        ("cached", Assembly::Cached),
        ("low_memory", Assembly::LowMemory),
        ("hadamard", Assembly::Hadamard { eps: 1e-12 }),
    ] {
        let opts = ComputeOptions {
            assembly,
            ..ComputeOptions::default()
        };
        g.bench_function(name, |b| b.iter(|| compute_c(&m, &prior, &opts).unwrap()));
    }
    g.finish();
}

fn mixture(c: &mut Criterion) {
    let m = model(500, 2, 41, 5);
    let comps = (0..16)
        .map(|k| {
            let lo = k as f64 / 16.0;
            let box_ = vec![
                UnivariateMeasure::uniform(lo, lo + 1.0 / 16.0).unwrap(),
                UnivariateMeasure::uniform(0.0, 1.0).unwrap(),
            ];
            (1.0 / 16.0, PriorSpec::product(box_).unwrap())
        })
        .collect();
    let prior = PriorSpec::mixture(comps).unwrap();
    c.bench_function("compute_c/mixture16", |b| {
        b.iter(|| compute_c(&m, &prior, &ComputeOptions::default()).unwrap())
    });
}

criterion_group!(benches, by_dimension, by_assembly, mixture);
criterion_main!(benches);
