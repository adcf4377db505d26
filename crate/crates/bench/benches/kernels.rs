use std::hint::black_box;

use ace_bench::{c4_model, random_param, random_tensor, set_model};
use ace_core::tasks::{set_regression, c4_toy, C4Target};
use ace_core::tensor::{conv2d, Padding};
use ace_core::trainer::{train, Objective, TrainConfig};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn tensor_ops(c: &mut Criterion) {
    let a = random_param(&[32, 64], 1);
    let b = random_param(&[64, 32], 2);
    c.bench_function("matmul_32x64x32_fwd_bwd", |bench| {
        bench.iter(|| {
            a.zero_grad();
            b.zero_grad();
            black_box(a.matmul(&b).unwrap().square().sum().backward().unwrap());
        })
    });

    let x = random_param(&[4, 16, 16], 3);
    let k = random_param(&[4, 4, 3, 3], 4);
    c.bench_function("conv2d_4x16x16_k3_fwd_bwd", |bench| {
        bench.iter(|| {
            x.zero_grad();
            k.zero_grad();
            black_box(conv2d(&x, &k, Padding::Same).unwrap().square().sum().backward().unwrap());
        })
    });
}

fn models(c: &mut Criterion) {
    let model = c4_model(8, 0);
    let x = random_tensor(&[1, 8, 8], 5);
    c.bench_function("c4_model_8x8_forward", |bench| bench.iter(|| black_box(model.forward(&x).unwrap())));
    c.bench_function("c4_model_8x8_fwd_bwd", |bench| {
        bench.iter(|| {
            model.zero_grad();
            black_box(model.forward(&x).unwrap().square().sum().backward().unwrap());
        })
    });
    c.bench_function("spectral_normalize_c4_cold_start", |bench| {
        bench.iter_batched(|| c4_model(8, 0), |mut m| black_box(m.spectral_normalize(3).unwrap()), BatchSize::SmallInput)
    });
}

fn training(c: &mut Criterion) {
    let sets = set_regression(5, 2, 0.5, 100, 0).unwrap();
    let images = c4_toy(C4Target::Square, 20, 8, 0).unwrap();
    let mut group = c.benchmark_group("train_one_epoch");
    group.sample_size(10);
    for objective in [Objective::Strict, Objective::Resilient] {
        let config = TrainConfig { epochs: 1, batch_size: 4, ..TrainConfig::new(objective, 1e-3) };
        group.bench_function(format!("set_{}", objective.name()), |bench| {
            bench.iter_batched(|| set_model(0), |m| black_box(train(m, &sets, config).unwrap()), BatchSize::SmallInput)
        });
        group.bench_function(format!("c4_{}", objective.name()), |bench| {
            bench.iter_batched(|| c4_model(8, 0), |m| black_box(train(m, &images, config).unwrap()), BatchSize::SmallInput)
        });
    }
    group.finish();
}

criterion_group!(benches, tensor_ops, models, training);
criterion_main!(benches);
