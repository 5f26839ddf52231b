mod common;

use std::cell::Cell;

use common::*;
use lagfluid::io::Checkpoint;
use lagfluid::models::{GraphSample, HaeMode, Model, ModelConfig};
use lagfluid::neighbors::{build_edges, DomainSpec};
use lagfluid::sph::Trajectory;
use lagfluid::training::*;
use lagfluid::vec3::{add, mat_vec, sub, Vec3};
use lagfluid::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sparse_sample(n: usize, history: usize, seed: u64) -> GraphSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let domain = DomainSpec::tgv();
    let positions = uniform_points(&mut rng, n, [1.0; 3]);
    let velocities = (0..history).map(|_| (0..n).map(|_| gaussian_vec(&mut rng, 0.01)).collect()).collect();
    let target = Some((0..n).map(|_| gaussian_vec(&mut rng, 0.001)).collect());
    let radius = 0.005;
    let edges = build_edges(&positions, &domain, radius).unwrap();
    GraphSample { positions, velocities, force: vec![[0.0; 3]; n], domain, radius, edges, target }
}

#[test]
fn random_walk_noise_has_the_requested_spread() {
    let (n, h, std) = (34_000, 5, 3e-4);
    let clean = sparse_sample(n, h, 1);
    let noisy = add_noise(&clean, std, 2).unwrap();
    let draws: Vec<f64> = last_velocity_noise(&clean, &noisy).into_iter().flatten().collect();
    assert!(draws.len() >= 100_000);
    let m = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / m;
    let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!((sd / std - 1.0).abs() < 0.01, "std {sd:e}");
    assert!(mean.abs() < 3.0 * std / m.sqrt(), "mean {mean:e}");
    // Increments: the first history step carries std / sqrt(H).
    let first: Vec<f64> = noisy.velocities[0].iter().zip(&clean.velocities[0]).flat_map(|(a, b)| sub(*a, *b)).collect();
    let sd0 = (first.iter().map(|x| x * x).sum::<f64>() / first.len() as f64).sqrt();
    assert!((sd0 / (std / (h as f64).sqrt()) - 1.0).abs() < 0.02, "first-step std {sd0:e}");
}

#[test]
fn noise_keeps_the_state_consistent() {
    let clean = sparse_sample(500, 4, 3);
    let noisy = add_noise(&clean, 1e-3, 4).unwrap();
    let domain = clean.domain;
    for i in 0..clean.num_nodes() {
        // Position shift equals the accumulated velocity perturbation.
        let shift = (0..4).fold([0.0; 3], |s, k| add(s, sub(noisy.velocities[k][i], clean.velocities[k][i])));
        let moved = domain.min_image(noisy.positions[i], clean.positions[i]);
        for d in 0..3 {
            assert!((moved[d] - shift[d]).abs() < 1e-15);
        }
        // Integrating the perturbed state with the corrected target lands
        // where the clean state lands.
        let a = noisy.target.as_ref().unwrap()[i];
        let landed = domain.wrap(add(noisy.positions[i], add(noisy.velocities[3][i], a)));
        let truth = domain.wrap(add(clean.positions[i], add(clean.velocities[3][i], clean.target.as_ref().unwrap()[i])));
        let err = domain.min_image(landed, truth);
        assert!(err.iter().all(|x| x.abs() < 1e-15));
    }
    let same = add_noise(&clean, 0.0, 5).unwrap();
    assert_eq!(same.positions, clean.positions);
    assert_eq!(same.velocities, clean.velocities);
    assert_eq!(same.target, clean.target);
    assert!(add_noise(&clean, -1.0, 5).is_err());
}

/// Replays the true accelerations of a reference trajectory.
struct Oracle<'a> {
    reference: &'a Trajectory,
    next_frame: Cell<usize>,
    history: usize,
}

impl AccelerationModel for Oracle<'_> {
    fn history(&self) -> usize {
        self.history
    }

    fn accelerations(&self, sample: &GraphSample) -> Result<Vec<Vec3>> {
        let k = self.next_frame.get();
        self.next_frame.set(k + 1);
        let last = sample.velocities.last().unwrap();
        Ok(corrected_target(&sample.domain, &sample.positions, last, &self.reference.positions[k]))
    }
}

#[test]
fn rollout_with_true_accelerations_reproduces_the_reference() {
    let traj = small_tgv(7, 30, 1);
    let radius = connectivity_radius(&traj.domain, traj.num_particles(), 1.5);
    let (h, start) = (5, 3);
    let oracle = Oracle { reference: &traj, next_frame: Cell::new(start + h + 1), history: h };
    let steps = traj.num_frames() - start - h - 1;
    let out = rollout(&oracle, &traj, start, steps, radius).unwrap().into_result().unwrap();
    assert_eq!(out.num_frames(), h + 1 + steps);
    let mut worst: f64 = 0.0;
    for (k, frame) in out.positions.iter().enumerate() {
        for (p, q) in frame.iter().zip(&traj.positions[start + k]) {
            worst = worst.max(traj.domain.min_image(*p, *q).iter().fold(0.0, |m: f64, x| m.max(x.abs())));
        }
    }
    assert!(worst < 1e-10, "oracle rollout drift {worst:e}");
}

#[test]
fn zero_acceleration_rollout_moves_in_straight_lines() {
    let traj = small_tgv(7, 12, 2);
    let radius = connectivity_radius(&traj.domain, traj.num_particles(), 1.5);
    let out = rollout(&ZeroAcceleration { history: 3 }, &traj, 0, 5, radius).unwrap().into_result().unwrap();
    let v = frame_velocity(&traj, 3);
    for (p0, (p5, v)) in out.positions[3].iter().zip(out.positions[8].iter().zip(&v)) {
        let moved = traj.domain.min_image(*p5, *p0);
        for d in 0..3 {
            assert!((moved[d] - 5.0 * v[d]).abs() < 1e-12);
        }
    }
}

#[test]
fn training_pairs_match_finite_differences() {
    let traj = small_tgv(7, 12, 3);
    let radius = connectivity_radius(&traj.domain, traj.num_particles(), 1.5);
    let sample = make_training_pair(&traj, 6, 4, radius).unwrap();
    assert_eq!(sample.velocities.len(), 4);
    let (v5, v6, v7) = (frame_velocity(&traj, 5), frame_velocity(&traj, 6), frame_velocity(&traj, 7));
    assert_eq!(sample.velocities[2], v5);
    assert_eq!(sample.velocities[3], v6);
    let target = sample.target.unwrap();
    for i in 0..traj.num_particles() {
        assert_eq!(target[i], sub(v7[i], v6[i]));
    }
    assert!(make_training_pair(&traj, 3, 4, radius).is_err());
    assert!(make_training_pair(&traj, 11, 4, radius).is_err());
}

#[test]
fn magnitude_normalization_commutes_with_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vel: Vec<Vec3> = (0..200).map(|_| gaussian_vec(&mut rng, 0.02)).collect();
    let acc: Vec<Vec3> = (0..200).map(|_| gaussian_vec(&mut rng, 0.001)).collect();
    let stats = NormalizationStats::compute(NormalizationMode::Magnitude, &vel, &acc).unwrap();
    let comp = NormalizationStats::compute(NormalizationMode::Component, &vel, &acc).unwrap();
    for _ in 0..20 {
        let r = random_orthogonal(&mut rng);
        let v = gaussian_vec(&mut rng, 0.02);
        let a = stats.normalize_velocity(mat_vec(&r, v));
        let b = mat_vec(&r, stats.normalize_velocity(v));
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12));
        for s in [&stats, &comp] {
            let back = s.denormalize_acceleration(s.normalize_acceleration(v));
            assert!(back.iter().zip(&v).all(|(x, y)| (x - y).abs() < 1e-15));
        }
    }
    let normalized: Vec<Vec3> = acc.iter().map(|a| comp.normalize_acceleration(*a)).collect();
    for d in 0..3 {
        let mean = normalized.iter().map(|a| a[d]).sum::<f64>() / 200.0;
        let var = normalized.iter().map(|a| (a[d] - mean).powi(2)).sum::<f64>() / 200.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pushforward_depths_follow_the_schedule() {
    let w = pushforward_weights(3, 0.5).unwrap();
    assert_eq!(w.len(), 4);
    assert!(w.windows(2).all(|p| p[1] < p[0]));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 4];
    let n = 100_000;
    for _ in 0..n {
        counts[sample_depth(&w, &mut rng)] += 1;
    }
    for (c, p) in counts.iter().zip(&w) {
        let freq = *c as f64 / n as f64;
        assert!((freq - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{freq} vs {p}");
    }
    assert!(pushforward_weights(3, 0.0).is_err());
}

fn tiny_setup() -> (Model, TrainConfig, Vec<Trajectory>, Vec<Trajectory>) {
    let (model, _) = Model::build(&ModelConfig::segnn(HaeMode::Lin, 2, 8, 3)).unwrap();
    let train = vec![small_tgv(7, 16, 10), small_tgv(7, 16, 11)];
    let valid = vec![small_tgv(7, 16, 12)];
    let config = TrainConfig {
        steps: 8,
        eval_every: 4,
        batch_size: 2,
        pushforward_steps: 2,
        valid_samples: 2,
        valid_rollout_steps: 3,
        lr: lagfluid::autodiff::LrSchedule::Constant { lr: 1e-3 },
        ..TrainConfig::default()
    };
    (model, config, train, valid)
}

#[test]
fn interrupted_training_resumes_bit_identically() {
    let (model, config, train, valid) = tiny_setup();
    let stats = compute_stats(&train, NormalizationMode::Magnitude).unwrap();
    let (_, init) = Model::build(model.config()).unwrap();
    let trainer = Trainer::new(&model, &config, &stats, &train, &valid).unwrap();

    let mut straight = TrainState::new(init.clone());
    let rows = trainer.run(&mut straight, |_, _, _| Ok(())).unwrap();
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![0, 4, 8]);

    // Stop after four steps, round-trip the state through a checkpoint, resume.
    let half = TrainConfig { steps: 4, ..config.clone() };
    let first_leg = Trainer::new(&model, &half, &stats, &train, &valid).unwrap();
    let mut state = TrainState::new(init);
    let rows_a = first_leg.run(&mut state, |_, _, _| Ok(())).unwrap();
    let ckpt = Checkpoint {
        model: model.config().clone(),
        stats: stats.clone(),
        params: state.params.clone(),
        optimizer: Some(state.optimizer.clone()),
        best_valid: state.best_valid,
        metadata: serde_json::json!({}),
    };
    let restored = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
    let mut resumed = TrainState { params: restored.params, optimizer: restored.optimizer.unwrap(), best_valid: restored.best_valid };
    let rows_b = trainer.run(&mut resumed, |_, _, _| Ok(())).unwrap();

    assert_eq!(resumed.params.tensors(), straight.params.tensors());
    assert_eq!(resumed.optimizer, straight.optimizer);
    let joined: Vec<_> = rows_a.into_iter().chain(rows_b).collect();
    assert_eq!(joined.len(), rows.len());
    for (a, b) in joined.iter().zip(&rows) {
        assert_eq!(a.step, b.step);
        assert_eq!(a.valid_acc_mse.to_bits(), b.valid_acc_mse.to_bits());
        assert_eq!(a.valid_mse_p.to_bits(), b.valid_mse_p.to_bits());
        assert!(a.train_loss.to_bits() == b.train_loss.to_bits() || (a.train_loss.is_nan() && b.train_loss.is_nan()));
    }
}

#[test]
fn trainer_rejects_inconsistent_data() {
    let (model, config, train, _) = tiny_setup();
    let stats = NormalizationStats::identity(NormalizationMode::Magnitude);
    let other = vec![small_tgv(8, 16, 13)];
    assert!(Trainer::new(&model, &config, &stats, &train, &other).is_err());
    let short = vec![small_tgv(7, 4, 14)];
    assert!(Trainer::new(&model, &config, &stats, &short, &[]).is_err());
    assert!(Trainer::new(&model, &config, &stats, &[], &[]).is_err());
    let bad = TrainConfig { batch_size: 0, ..config };
    assert!(Trainer::new(&model, &bad, &stats, &train, &[]).is_err());
}
