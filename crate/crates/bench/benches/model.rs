use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rstgcn::model::{backward, forward, forward_cached};
use rstgcn::railnet::scaled_laplacian;
use rstgcn::synth::{generate_cube, SynthConfig};
use rstgcn::train::batch_gradient;
use rstgcn_bench::fixture;

fn model_passes(c: &mut Criterion) {
    let f = fixture(64, 4);
    let s = &f.samples[0];
    c.bench_function("forward_n30_c64", |b| b.iter(|| forward(s, &f.params, &f.config, &f.context).unwrap()));
    let (pred, cache) = forward_cached(s, &f.params, &f.config, &f.context).unwrap();
    let ones = Array2::ones(pred.raw_dim());
    c.bench_function("backward_n30_c64", |b| b.iter(|| backward(&cache, &f.params, &f.context, &ones).unwrap()));
    c.bench_function("batch4_gradient_n30_c64", |b| {
        b.iter(|| batch_gradient(&f.params, &f.samples, &f.config, &f.context).unwrap())
    });
}

fn data_prep(c: &mut Criterion) {
    let synth = generate_cube(&SynthConfig::default()).unwrap();
    c.bench_function("scaled_laplacian_n30", |b| b.iter(|| scaled_laplacian(&synth.graph)));
    c.bench_function("synth_cube_default", |b| b.iter(|| generate_cube(&SynthConfig::default()).unwrap()));
}

criterion_group!(benches, model_passes, data_prep);
criterion_main!(benches);
