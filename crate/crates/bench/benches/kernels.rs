use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttstack_core::meta::{compute_class_weights, fit_logreg, LogRegOptions};
use ttstack_core::metrics::roc_auc;
use ttstack_core::trainer::{adamw_step, OptimizerState, TrainConfig};
use ttstack_core::{NormalizedTensor, TinyViT, ViTConfig};

fn toy_model() -> TinyViT {
    TinyViT::new(ViTConfig {
        image_size: 16,
        patch_size: 4,
        embed_dim: 16,
        depth: 2,
        num_heads: 2,
        ..ViTConfig::default()
    })
    .unwrap()
}

fn batch(n: usize, rng: &mut ChaCha8Rng) -> Vec<NormalizedTensor> {
    (0..n)
        .map(|_| NormalizedTensor::from_values(16, 16, (0..256).map(|_| rng.random_range(-1.0..=1.0)).collect()))
        .collect()
}

fn vit(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = toy_model();
    let inputs = batch(32, &mut rng);
    let labels: Vec<u8> = (0..32).map(|i| (i % 2) as u8).collect();

    c.bench_function("vit_forward_b32", |b| b.iter(|| model.forward(black_box(&inputs)).unwrap()));
    c.bench_function("vit_backward_b32", |b| b.iter(|| model.backward(black_box(&inputs), &labels).unwrap()));

    let (_, grads) = model.backward(&inputs, &labels).unwrap();
    let cfg = TrainConfig::default();
    c.bench_function("adamw_step", |b| {
        b.iter_batched(
            || (model.clone(), OptimizerState::new(&model, cfg.learning_rate)),
            |(mut m, mut state)| adamw_step(&mut m, &grads, &mut state, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y: Vec<u8> = (0..10_000).map(|_| rng.random_range(0..2)).collect();
    let s: Vec<f64> = (0..10_000).map(|_| rng.random_range(0.0..1.0)).collect();
    c.bench_function("roc_auc_10k", |b| b.iter(|| roc_auc(black_box(&y), black_box(&s)).unwrap()));
}

fn meta(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<Vec<f64>> = (0..992).map(|_| (0..14).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<u8> = x.iter().map(|r| u8::from(r[0] - r[3] + rng.random_range(-1.0..1.0) > 0.0)).collect();
    let cw = compute_class_weights(&y).unwrap();
    let opts = LogRegOptions::default();
    c.bench_function("logreg_fit_992x14", |b| b.iter(|| fit_logreg(black_box(&x), &y, cw, &opts).unwrap()));
}

criterion_group!(benches, vit, metrics, meta);
criterion_main!(benches);
