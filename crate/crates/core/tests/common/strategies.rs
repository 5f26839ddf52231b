//! Proptest strategies for arbitrary (bit-level) file contents.

use lagfluid::autodiff::{OptimizerState, ParamStore, Tensor};
use lagfluid::io::{Checkpoint, TrajectoryFile};
use lagfluid::models::{HaeMode, ModelConfig};
use lagfluid::sph::Scenario;
use lagfluid::training::NormalizationStats;
use proptest::prelude::*;
use serde_json::json;

pub fn trajectory_strategy() -> impl Strategy<Value = TrajectoryFile> {
    (1usize..20, 1usize..6, any::<bool>(), any::<bool>(), any::<u64>(), "[a-z]{0,12}").prop_flat_map(
        |(n, frames, with_vel, rpf, dt_bits, note)| {
            let len = n * frames * 3;
            (
                prop::collection::vec(any::<u32>(), len),
                prop::collection::vec(any::<u32>(), if with_vel { len } else { 0 }),
                prop::array::uniform3(0.1f64..10.0),
            )
                .prop_map(move |(pos, vel, box_lengths)| TrajectoryFile {
                    scenario: if rpf { Scenario::Rpf } else { Scenario::Tgv },
                    num_particles: n,
                    num_frames: frames,
                    frame_dt: f64::from_bits(dt_bits),
                    box_lengths,
                    positions: pos.into_iter().map(f32::from_bits).collect(),
                    velocities: with_vel.then(|| vel.into_iter().map(f32::from_bits).collect()),
                    metadata: json!({ "note": note.clone(), "n": n }),
                })
        },
    )
}

pub fn tensor_strategy() -> impl Strategy<Value = Tensor<f64>> {
    (0usize..4, 0usize..5).prop_flat_map(|(rows, cols)| {
        prop::collection::vec(any::<u64>(), rows * cols)
            .prop_map(move |bits| Tensor::new(rows, cols, bits.into_iter().map(f64::from_bits).collect()).unwrap())
    })
}

pub fn checkpoint_strategy() -> impl Strategy<Value = Checkpoint> {
    (
        prop::collection::vec(tensor_strategy(), 0..6),
        any::<Option<u64>>(),
        prop::option::of(-1e6f64..1e6),
        any::<bool>(),
        (1e-9f64..1e3, 1e-9f64..1e3),
        any::<u64>(),
    )
        .prop_map(|(tensors, step, best, component, (vs, acc), seed)| {
            let mut params = ParamStore::new();
            for (k, t) in tensors.into_iter().enumerate() {
                params.insert(format!("layer.{k}.w"), t);
            }
            let optimizer = step.map(|s| {
                let mut o = OptimizerState::new(&params);
                o.step = s;
                for (k, (m, v)) in o.m.iter_mut().zip(o.v.iter_mut()).enumerate() {
                    m.data.iter_mut().enumerate().for_each(|(i, x)| *x = (k * 31 + i) as f64 * 0.5);
                    v.data.iter_mut().enumerate().for_each(|(i, x)| *x = f64::from_bits(seed ^ (i as u64)));
                }
                o
            });
            let stats = if component {
                NormalizationStats::Component { vel_mean: [vs; 3], vel_std: [acc; 3], acc_mean: [-vs, 0.0, vs], acc_std: [1.0, acc, vs] }
            } else {
                NormalizationStats::Magnitude { vel_std: vs, acc_std: acc }
            };
            let mut model = ModelConfig::segnn(HaeMode::Tensor, 3, 16, 4);
            model.init_seed = seed;
            Checkpoint { model, stats, params, optimizer, best_valid: best, metadata: json!({ "seed": seed }) }
        })
}
