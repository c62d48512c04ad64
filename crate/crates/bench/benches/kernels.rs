use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;
use vitforge::metrics::binary_auc;
use vitforge::tensor::kernels;
use vitforge::{ViTConfig, ViTParams, VisionTransformer};
use vitforge_bench::{auc_inputs, random_images, random_tensor};

fn matmul(c: &mut Criterion) {
    let mut group = c.benchmark_group("matmul");
    for &(m, k, n) in &[(64, 64, 64), (197, 768, 768), (197, 768, 3072)] {
        let a = random_tensor::<f32>(&[m, k], 1);
        let b = random_tensor::<f32>(&[k, n], 2);
        group.throughput(Throughput::Elements((2 * m * k * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(format!("{m}x{k}x{n}")), &(a, b), |bench, (a, b)| {
            bench.iter(|| kernels::matmul(black_box(a), black_box(b)).unwrap())
        });
    }
    group.finish();
}

fn attention(c: &mut Criterion) {
    let mut group = c.benchmark_group("multi_head_attention");
    for &(tokens, dim, heads) in &[(5, 16, 2), (65, 192, 3), (197, 768, 12)] {
        let qkv = random_tensor::<f32>(&[1, tokens, 3 * dim], 3);
        group.bench_with_input(BenchmarkId::from_parameter(format!("T{tokens}_D{dim}_h{heads}")), &qkv, |b, qkv| {
            b.iter(|| kernels::multi_head_attention(black_box(qkv), heads).unwrap())
        });
    }
    group.finish();
}

fn tiny_model(c: &mut Criterion) {
    let cfg = ViTConfig::tiny(3);
    let model = VisionTransformer::new(cfg).unwrap();
    let params = ViTParams::<f32>::init(&cfg, 0).unwrap();
    let images = random_images(32, cfg.image_size, 4);
    let labels: Vec<usize> = (0..32).map(|i| i % 3).collect();
    c.bench_function("tiny_forward_b32", |b| b.iter(|| model.forward(&params, black_box(&images)).unwrap()));
    c.bench_function("tiny_loss_and_gradients_b32", |b| {
        b.iter(|| model.loss_and_gradients(&params, black_box(&images), &labels).unwrap())
    });
}

fn auc(c: &mut Criterion) {
    let mut group = c.benchmark_group("binary_auc");
    for &n in &[500, 10_000] {
        let (scores, labels) = auc_inputs(n, 5);
        group.bench_with_input(BenchmarkId::from_parameter(n), &(scores, labels), |b, (s, l)| {
            b.iter(|| binary_auc(black_box(s), black_box(l)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, matmul, attention, tiny_model, auc);
criterion_main!(benches);
