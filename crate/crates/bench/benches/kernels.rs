use std::hint::black_box;

use chanest_bench::gaussian;
use chanest_core::classical::{lmmse_estimate, omp};
use chanest_core::dl::{generate_sequences, param_estimator_spec, sequence_features, ParamTask, ParamTaskConfig};
use chanest_core::gan::{gan_gradient, GanBatch, GanConfig, GanState, TapFamily};
use chanest_core::linalg::{matmul, ComplexMatrix};
use chanest_core::nn::{Graph, ModelState};
use chanest_core::random::rng_for;
use criterion::{criterion_group, criterion_main, Criterion};

fn linalg(c: &mut Criterion) {
    let a = gaussian(64, 64, 1);
    let b = gaussian(64, 64, 2);
    c.bench_function("matmul_64", |bch| bch.iter(|| matmul(black_box(&a), black_box(&b)).unwrap()));

    let x = gaussian(80, 64, 3);
    let r = ComplexMatrix::identity(64);
    let y = gaussian(80, 1, 4);
    c.bench_function("lmmse_80x64", |bch| bch.iter(|| lmmse_estimate(black_box(&y), &x, &r, 0.1).unwrap()));

    let phi = gaussian(64, 256, 5);
    let y = gaussian(64, 1, 6);
    c.bench_function("omp_64x256_k6", |bch| bch.iter(|| omp(black_box(&y), &phi, 6, 0.0).unwrap()));
}

fn networks(c: &mut Criterion) {
    let task = ParamTask::new(ParamTaskConfig::default(), &mut rng_for(0, 0)).unwrap();
    let seqs = generate_sequences(&task, 32, &mut rng_for(0, 1)).unwrap();
    let x = sequence_features(&task, &seqs);
    let mut model = ModelState::new(param_estimator_spec(&task, 128).unwrap(), 0).unwrap();
    c.bench_function("lstm_forward_backward_b32", |bch| {
        bch.iter(|| {
            let mut g = Graph::new();
            let xv = g.input(x.clone());
            let out = model.forward(&mut g, xv).unwrap();
            let sq = g.square(out);
            let loss = g.sum(sq);
            g.backward(loss).unwrap()
        })
    });

    let mut gan = GanState::new(GanConfig::new(32), 0).unwrap();
    let data = TapFamily::eva(4e6, 16).samples(256, &mut rng_for(0, 2)).unwrap();
    let batch = GanBatch::sample(&data, 64, gan.cfg.latent_dim, &mut rng_for(0, 3)).unwrap();
    c.bench_function("gan_gradient_b64", |bch| bch.iter(|| gan_gradient(&mut gan, black_box(&batch)).unwrap()));
}

criterion_group!(benches, linalg, networks);
criterion_main!(benches);
