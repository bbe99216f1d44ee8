//! Sequential vs rayon evaluation of the hot loop: the weighted loss and
//! its parameter gradient over a batch of coordinates, and plain forward
//! passes as used when rendering frames.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use ofinr_core::objective::{total_loss_with_gradients, LossConfig, SampleBatch};
use ofinr_core::par::{with_backend, Backend};
use ofinr_core::{init_siren, SirenConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn batch(n: usize) -> SampleBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut triple = || [0; 3].map(|_| rng.random_range(-1.0..1.0));
    let coords = (0..n).map(|_| triple()).collect();
    let targets = (0..n).map(|_| triple()).collect();
    let flows = (0..n).map(|_| {
        let f = triple();
        [f[0] * 0.2, f[1] * 0.2, 1.0]
    });
    SampleBatch::new(coords, Some(targets), Some(flows.collect())).unwrap()
}

const BACKENDS: [(&str, Backend); 2] = [("sequential", Backend::Sequential), ("parallel", Backend::Parallel)];

fn loss_and_gradients(c: &mut Criterion) {
    let model = init_siren(SirenConfig::new(4, 64, 30.0).unwrap(), 1);
    let cfg = LossConfig::new(0.12).unwrap();
    let mut group = c.benchmark_group("loss_and_gradients");
    for n in [1024usize, 8192] {
        let b = batch(n);
        group.throughput(Throughput::Elements(n as u64));
        for (name, backend) in BACKENDS {
            group.bench_with_input(BenchmarkId::new(name, n), &b, |bench, b| {
                bench.iter(|| with_backend(backend, || total_loss_with_gradients(black_box(&model), b, &cfg).unwrap()))
            });
        }
    }
    group.finish();
}

fn forward(c: &mut Criterion) {
    let model = init_siren(SirenConfig::new(4, 64, 30.0).unwrap(), 1);
    let coords = batch(48 * 48).coords().to_vec();
    let mut group = c.benchmark_group("forward_frame_48x48");
    group.throughput(Throughput::Elements(coords.len() as u64));
    for (name, backend) in BACKENDS {
        group.bench_function(name, |bench| {
            bench.iter(|| with_backend(backend, || model.forward(black_box(&coords)).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, loss_and_gradients, forward);
criterion_main!(benches);
