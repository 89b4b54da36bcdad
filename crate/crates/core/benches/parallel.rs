use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use salient_core::nn::{train, TrainConfig};
use salient_core::pipeline::run_batch;
use salient_core::superpixel::{slic, SlicParams};
use salient_core::synth::{class_names, generate_dataset};
use salient_core::{Execution, ImageRgb, Network, PipelineConfig};

const STRATEGIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn training(c: &mut Criterion) {
    let data: Vec<_> = generate_dataset(64, 4, 32, 1, Execution::Sequential)
        .unwrap()
        .iter()
        .map(|s| s.labeled())
        .collect();
    let net = Network::desk_scale(32, 32, class_names(4), 1).unwrap();
    let cfg = TrainConfig { epochs: 1, ..Default::default() };
    let mut g = c.benchmark_group("train_epoch_64");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut n = net.clone();
                train(&mut n, black_box(&data), &cfg, exec, |_| {}).unwrap()
            })
        });
    }
    g.finish();
}

fn superpixels(c: &mut Criterion) {
    let img = generate_dataset(1, 4, 128, 2, Execution::Sequential).unwrap().remove(0).image;
    let params = SlicParams::default();
    let mut g = c.benchmark_group("slic_128");
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| b.iter(|| slic(black_box(&img), &params, exec).unwrap()));
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let net = Network::desk_scale(32, 32, class_names(4), 3).unwrap();
    let images: Vec<(String, ImageRgb)> = generate_dataset(16, 4, 32, 3, Execution::Sequential)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(i, s)| (i.to_string(), s.image))
        .collect();
    let cfg = PipelineConfig::default();
    let mut g = c.benchmark_group("pipeline_batch_16");
    g.sample_size(10);
    for (name, exec) in STRATEGIES {
        g.bench_function(name, |b| b.iter(|| run_batch(&net, black_box(&images), &cfg, exec)));
    }
    g.finish();
}

criterion_group!(benches, training, superpixels, pipeline);
criterion_main!(benches);
