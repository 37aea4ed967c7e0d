use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hiernet_core::model::Norm;
use hiernet_core::prox::{project_epi, EpiPoint};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn point(m: usize, seed: u64) -> EpiPoint {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let u: Array1<f64> = (0..m).map(|_| r.random_range(-3.0..3.0)).collect();
    EpiPoint::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), u)
}

fn epigraph(c: &mut Criterion) {
    for norm in [Norm::L1, Norm::Linf] {
        let mut group = c.benchmark_group(format!("epi_{norm}"));
        for m in [10, 100, 1000] {
            let x = point(m, m as u64);
            group.bench_with_input(BenchmarkId::from_parameter(m), &x, |b, x| {
                b.iter(|| project_epi(black_box(x), norm))
            });
        }
        group.finish();
    }
}

criterion_group!(benches, epigraph);
criterion_main!(benches);
