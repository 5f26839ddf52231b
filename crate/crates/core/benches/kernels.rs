//! Hot kernels at desk scale (512 particles).
//!
//! Run `cargo bench -p lagfluid` for the rayon path and
//! `cargo bench -p lagfluid --no-default-features` for the sequential
//! fallback. Benchmark ids carry the mode, so criterion's report shows both
//! side by side.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lagfluid::autodiff::Tape;
use lagfluid::metrics::{sinkhorn_distance, SinkhornConfig};
use lagfluid::models::{HaeMode, Model, ModelConfig};
use lagfluid::neighbors::build_edges;
use lagfluid::sph::{generate_trajectory, initial_state, sph_step, ScenarioConfig};
use lagfluid::training::{compute_stats, connectivity_radius, make_training_pair};

const MODE: &str = if cfg!(feature = "parallel") { "rayon" } else { "sequential" };

fn config() -> ScenarioConfig {
    let mut c = ScenarioConfig::tgv(8);
    c.relax_steps = 0;
    c
}

fn bench_neighbors(c: &mut Criterion) {
    let cfg = config();
    let state = initial_state(&cfg, 1).unwrap();
    c.bench_with_input(BenchmarkId::new("neighbors_512", MODE), &state.positions, |b, p| {
        b.iter(|| build_edges(black_box(p), &cfg.domain, cfg.kernel_radius()).unwrap())
    });
}

fn bench_sph(c: &mut Criterion) {
    let cfg = config();
    let state = initial_state(&cfg, 1).unwrap();
    let edges = build_edges(&state.positions, &cfg.domain, cfg.kernel_radius()).unwrap();
    c.bench_function(&format!("sph_step_512/{MODE}"), |b| b.iter(|| sph_step(black_box(&state), &cfg, &edges).unwrap()));
}

fn bench_model(c: &mut Criterion) {
    let mut cfg = config();
    cfg.frames = 8;
    let traj = generate_trajectory(&cfg, 1).unwrap();
    let model_cfg = ModelConfig::segnn(HaeMode::Lin, 2, 16, 5);
    let (model, params) = Model::build(&model_cfg).unwrap();
    let stats = compute_stats(std::slice::from_ref(&traj), model_cfg.kind.normalization()).unwrap();
    let radius = connectivity_radius(&traj.domain, traj.num_particles(), 1.5);
    let sample = make_training_pair(&traj, 5, 5, radius).unwrap();
    let input = model.prepare(&sample, &stats).unwrap();
    c.bench_function(&format!("segnn_fwd_bwd_512/{MODE}"), |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let loss = model.loss(&mut tape, &params, black_box(&input)).unwrap();
            tape.backward(loss, &params).unwrap()
        })
    });
}

fn bench_sinkhorn(c: &mut Criterion) {
    let cfg = config();
    let a = initial_state(&cfg, 1).unwrap().positions;
    let b = initial_state(&cfg, 2).unwrap().positions;
    let sc = SinkhornConfig::default();
    let mut group = c.benchmark_group("sinkhorn_512");
    group.sample_size(10);
    group.bench_function(MODE, |bench| bench.iter(|| sinkhorn_distance(black_box(&a), &b, &cfg.domain, &sc).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_neighbors, bench_sph, bench_model, bench_sinkhorn);
criterion_main!(benches);
