use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use flipper_core::learn::agent::{Agent, NET_INPUT_DIM};
use flipper_core::learn::NetworkSizes;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let agent = Agent::new(&NetworkSizes::default(), -0.7, &mut rng);
    let single: Vec<f64> = (0..NET_INPUT_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
    c.bench_function("policy_forward_single", |b| b.iter(|| agent.policy_forward(black_box(&single)).unwrap()));

    let batch = Array2::from_shape_fn((512, NET_INPUT_DIM), |_| rng.random_range(-1.0..1.0));
    c.bench_function("policy_forward_batch_512", |b| b.iter(|| agent.policy.forward(black_box(batch.view()))));
}

criterion_group!(benches, forward);
criterion_main!(benches);
