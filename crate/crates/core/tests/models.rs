mod common;

use common::oracles::perturb;
use common::*;
use lagfluid::autodiff::{ParamStore, Tape, Tensor};
use lagfluid::models::{shifted_init, GraphSample, HaeMode, Model, ModelConfig};
use lagfluid::neighbors::build_edges;
use lagfluid::training::{NormalizationMode, NormalizationStats};
use lagfluid::vec3::{mat_vec, Mat3, Vec3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: [HaeMode; 3] = [HaeMode::Avg, HaeMode::Lin, HaeMode::Tensor];

fn stats() -> NormalizationStats {
    NormalizationStats::identity(NormalizationMode::Magnitude)
}

fn max_abs(v: &[Vec3]) -> f64 {
    v.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn equivariance_error(model: &Model, store: &ParamStore<f64>, sample: &GraphSample, r: &Mat3) -> f64 {
    let out = model.predict(store, sample, &stats()).unwrap();
    let out_r = model.predict(store, &transform_sample(sample, r), &stats()).unwrap();
    let rotated: Vec<Vec3> = out.iter().map(|a| mat_vec(r, *a)).collect();
    max_diff(&rotated, &out_r) / max_abs(&out)
}

#[test]
fn segnn_ten_layers_is_o3_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sample = random_sample(60, 5, 4);
    let mut worst: f64 = 0.0;
    for (k, mode) in MODES.into_iter().enumerate() {
        for force_in_attributes in [false, true] {
            let mut config = ModelConfig::segnn(mode, 10, 16, 5);
            config.force_in_attributes = force_in_attributes;
            config.init_seed = k as u64;
            let (model, mut store) = Model::build(&config).unwrap();
            perturb(&mut store, 100 + k as u64, 0.05);
            for _ in 0..4 {
                let r = random_orthogonal(&mut rng);
                worst = worst.max(equivariance_error(&model, &store, &sample, &r));
            }
            // Always include a pure inversion.
            let inv = [[-1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]];
            worst = worst.max(equivariance_error(&model, &store, &sample, &inv));
        }
    }
    assert!(worst < 1e-5, "relative equivariance error {worst:e}");
}

fn translated(sample: &GraphSample, shift: Vec3) -> GraphSample {
    let positions: Vec<Vec3> = sample.positions.iter().map(|p| sample.domain.wrap(lagfluid::vec3::add(*p, shift))).collect();
    GraphSample { edges: build_edges(&positions, &sample.domain, sample.radius).unwrap(), positions, ..sample.clone() }
}

#[test]
fn both_models_are_translation_invariant() {
    let sample = random_sample(80, 5, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let configs = [ModelConfig::gns(3, 32, 5), ModelConfig::segnn(HaeMode::Tensor, 3, 16, 5), ModelConfig::segnn(HaeMode::Lin, 3, 16, 5)];
    for config in configs {
        let (model, store) = Model::build(&config).unwrap();
        let out = model.predict(&store, &sample, &stats()).unwrap();
        for _ in 0..5 {
            let shift = gaussian_vec(&mut rng, 0.7);
            let moved = translated(&sample, shift);
            assert_eq!(moved.edges.len(), sample.edges.len());
            let out_t = model.predict(&store, &moved, &stats()).unwrap();
            let err = max_diff(&out, &out_t) / max_abs(&out);
            assert!(err < 1e-12, "{:?}: translation error {err:e}", config.kind);
        }
    }
}

#[test]
fn both_models_are_exactly_permutation_equivariant() {
    let sample = random_sample(70, 5, 12);
    for (k, config) in [ModelConfig::gns(3, 32, 5), ModelConfig::segnn(HaeMode::Avg, 3, 16, 5), ModelConfig::segnn(HaeMode::Tensor, 3, 16, 5)]
        .into_iter()
        .enumerate()
    {
        let (model, store) = Model::build(&config).unwrap();
        let out = model.predict(&store, &sample, &stats()).unwrap();
        for s in 0..3 {
            let perm = random_permutation(sample.num_nodes(), 20 + 10 * k as u64 + s);
            let out_p = model.predict(&store, &permute_sample(&sample, &perm), &stats()).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                assert_eq!(out_p[new], out[old], "{:?}: particle {old}", config.kind);
            }
        }
    }
}

fn attribute_values(model: &Model, store: &ParamStore<f64>, sample: &GraphSample) -> Vec<Tensor<f64>> {
    let input = model.prepare(sample, &stats()).unwrap();
    let mut tape = Tape::no_grad();
    let sites = model.node_attributes(&mut tape, store, &input).unwrap();
    sites.into_iter().map(|v| tape.value(v).clone()).collect()
}

fn max_tensor_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data.iter().zip(&b.data).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[test]
fn lin_with_uniform_weights_matches_avg() {
    let h = 5;
    let sample = random_sample(50, h, 13);
    let (avg, mut avg_store) = Model::build(&ModelConfig::segnn(HaeMode::Avg, 3, 16, h)).unwrap();
    let (lin, mut lin_store) = Model::build(&ModelConfig::segnn(HaeMode::Lin, 3, 16, h)).unwrap();
    perturb(&mut avg_store, 14, 0.05);
    // Copy every shared parameter, then set the HAE weights to 1/H.
    for (name, value) in avg_store.iter() {
        let id = lin_store.id(name).unwrap();
        *lin_store.get_mut(id) = value.clone();
    }
    let mut hae_weights = 0;
    for (id, name) in lin_store.names().to_vec().iter().enumerate() {
        if name.contains(".hae.") {
            lin_store.tensors_mut()[id].data = vec![1.0 / h as f64];
            hae_weights += 1;
        }
    }
    assert_eq!(hae_weights, 3 * h);
    let a = avg.predict(&avg_store, &sample, &stats()).unwrap();
    let b = lin.predict(&lin_store, &sample, &stats()).unwrap();
    let err = max_diff(&a, &b) / max_abs(&a);
    assert!(err < 1e-12, "lin vs avg {err:e}");
    for (x, y) in attribute_values(&avg, &avg_store, &sample).iter().zip(&attribute_values(&lin, &lin_store, &sample)) {
        assert!(max_tensor_diff(x, y) < 1e-12);
    }
}

#[test]
fn identical_history_makes_avg_return_the_step_attribute() {
    let mut sample = random_sample(40, 4, 15);
    let v = sample.velocities[0].clone();
    sample.velocities = vec![v; 4];
    let (model, store) = Model::build(&ModelConfig::segnn(HaeMode::Avg, 2, 8, 4)).unwrap();
    let input = model.prepare(&sample, &stats()).unwrap();
    for site in attribute_values(&model, &store, &sample) {
        assert!(max_tensor_diff(&site, &input.history_attrs[0]) < 1e-15);
    }
}

#[test]
fn lin_selector_weights_pick_the_latest_step() {
    let h = 5;
    let sample = random_sample(40, h, 16);
    let (model, mut store) = Model::build(&ModelConfig::segnn(HaeMode::Lin, 2, 8, h)).unwrap();
    for l in 0..2 {
        for k in 0..h {
            let id = store.id(&format!("segnn.hae.{l}.w_h{k}")).unwrap();
            store.get_mut(id).data = vec![if k == h - 1 { 1.0 } else { 0.0 }];
        }
    }
    let input = model.prepare(&sample, &stats()).unwrap();
    for site in attribute_values(&model, &store, &sample) {
        assert_eq!(site.data, input.history_attrs[h - 1].data);
    }
}

#[test]
fn hae_attributes_are_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let sample = random_sample(40, 5, 18);
    for mode in MODES {
        let (model, mut store) = Model::build(&ModelConfig::segnn(mode, 2, 8, 5)).unwrap();
        perturb(&mut store, 19, 0.05);
        for _ in 0..10 {
            let r = random_orthogonal(&mut rng);
            let a = attribute_values(&model, &store, &sample);
            let b = attribute_values(&model, &store, &transform_sample(&sample, &r));
            for (x, y) in a.iter().zip(&b) {
                for i in 0..x.rows {
                    let (xr, yr) = (x.row(i), y.row(i));
                    assert!((xr[0] - yr[0]).abs() < 1e-12, "{mode:?} scalar");
                    let rv = mat_vec(&r, [xr[1], xr[2], xr[3]]);
                    for d in 0..3 {
                        assert!((rv[d] - yr[1 + d]).abs() < 1e-12, "{mode:?} vector");
                    }
                }
            }
        }
    }
}

#[test]
fn shifted_init_statistics() {
    let n = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for (n_weights, fan_in) in [(5, 5), (2, 40), (10, 3)] {
        let t = shifted_init(&mut rng, 100, 100, n_weights, fan_in);
        assert_eq!(t.len(), n);
        let mean = t.data.iter().sum::<f64>() / n as f64;
        let var = t.data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let (mu, sigma) = (1.0 / n_weights as f64, 1.0 / (fan_in as f64).sqrt());
        let se_mean = sigma / (n as f64).sqrt();
        let se_std = sigma / (2.0 * (n - 1) as f64).sqrt();
        assert!((mean - mu).abs() < 3.0 * se_mean, "mean {mean} vs {mu}");
        assert!((var.sqrt() - sigma).abs() < 3.0 * se_std, "std {} vs {sigma}", var.sqrt());
    }
}

#[test]
fn isolated_particles_get_finite_predictions() {
    let mut sample = random_sample(5, 3, 21);
    sample.positions = vec![[0.1, 0.1, 0.1], [0.5, 0.5, 0.5], [0.9, 0.1, 0.5], [0.1, 0.6, 0.9], [0.6, 0.9, 0.2]];
    sample.radius = 0.05;
    sample.edges = build_edges(&sample.positions, &sample.domain, sample.radius).unwrap();
    assert!(sample.edges.is_empty());
    for config in [ModelConfig::gns(2, 16, 3), ModelConfig::segnn(HaeMode::Lin, 2, 8, 3), ModelConfig::segnn(HaeMode::Tensor, 2, 8, 3)] {
        let (model, store) = Model::build(&config).unwrap();
        let acc = model.predict(&store, &sample, &stats()).unwrap();
        assert!(acc.iter().flatten().all(|x| x.is_finite()));
    }
}

#[test]
fn every_parameter_receives_gradient() {
    let sample = random_sample(40, 3, 22);
    for config in [ModelConfig::gns(2, 16, 3), ModelConfig::segnn(HaeMode::Avg, 2, 8, 3), ModelConfig::segnn(HaeMode::Lin, 2, 8, 3), ModelConfig::segnn(HaeMode::Tensor, 2, 8, 3)] {
        let (model, mut store) = Model::build(&config).unwrap();
        perturb(&mut store, 23, 0.05);
        let input = model.prepare(&sample, &stats()).unwrap();
        let mut tape = Tape::new();
        let loss = model.loss(&mut tape, &store, &input).unwrap();
        let grads = tape.backward(loss, &store).unwrap();
        for (name, g) in store.names().iter().zip(&grads.tensors) {
            assert!(g.data.iter().all(|x| x.is_finite()), "{name}");
            assert!(g.data.iter().any(|x| *x != 0.0), "{:?}: no gradient reaches {name}", config.kind);
        }
    }
}

#[test]
fn parameter_counts_and_lin_sites() {
    let (_, gns) = Model::build(&ModelConfig::gns(10, 128, 5)).unwrap();
    assert!((gns.num_params() as f64 / 1.2e6 - 1.0).abs() < 0.1, "{}", gns.num_params());
    let (_, lin) = Model::build(&ModelConfig::segnn(HaeMode::Lin, 10, 64, 5)).unwrap();
    for l in 0..10 {
        let per_site = lin.names().iter().filter(|n| n.starts_with(&format!("segnn.hae.{l}.w_h"))).count();
        assert_eq!(per_site, 5);
    }
}

#[test]
fn history_length_mismatch_is_an_error() {
    let (model, _) = Model::build(&ModelConfig::segnn(HaeMode::Avg, 2, 8, 5)).unwrap();
    assert!(model.prepare(&random_sample(10, 3, 24), &stats()).is_err());
}
