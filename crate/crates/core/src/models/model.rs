use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gns::{Gns, GNS_EDGE_FEATURES};
use super::hae::{edge_attributes, history_attributes, stack_history};
use super::sample::{GraphIndex, GraphSample};
use super::segnn::{Segnn, SegnnInputs};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::{HaeMode, ModelConfig};
use crate::scalar::Real;
use crate::training::NormalizationStats;
use crate::vec3::{norm, Vec3};

#[derive(Clone, Debug)]
enum Network {
    Gns(Gns),
    Segnn(Segnn, HaeMode),
}

/// Parameter-independent tensors derived from one [`GraphSample`].
#[derive(Clone, Debug)]
pub struct PreparedInput {
    pub index: GraphIndex,
    pub nodes: Tensor<f64>,
    /// GNS edge features or SEGNN edge attributes.
    pub edges: Tensor<f64>,
    /// Squared edge length over squared radius (SEGNN).
    pub edge_dist2: Tensor<f64>,
    /// Per-step node attributes (SEGNN).
    pub history_attrs: Vec<Tensor<f64>>,
    /// Normalized acceleration targets, when the sample carries targets.
    pub target: Option<Tensor<f64>>,
}

/// A learned simulator: architecture plus the names of its parameters.
/// Parameter values live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    net: Network,
}

fn rows_of(v: &[Vec3]) -> Tensor<f64> {
    Tensor { rows: v.len(), cols: 3, data: v.iter().flatten().copied().collect() }
}

impl Model {
    /// Builds the architecture and a freshly initialized parameter store.
    pub fn build(config: &ModelConfig) -> Result<(Self, ParamStore<f64>)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let net = match config.kind.hae() {
            None => Network::Gns(Gns::new(&mut store, &mut rng, config)),
            Some(mode) => Network::Segnn(Segnn::new(&mut store, &mut rng, config, mode), mode),
        };
        Ok((Self { config: config.clone(), net }, store))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Checks that `store` has exactly the parameters this model expects.
    pub fn check_store<T: Real>(&self, store: &ParamStore<T>) -> Result<()> {
        let (_, fresh) = Self::build(&self.config)?;
        if fresh.names() != store.names() {
            return Err(Error::Config("parameter names do not match the model architecture".into()));
        }
        for (a, b) in fresh.tensors().iter().zip(store.tensors()) {
            if (a.rows, a.cols) != (b.rows, b.cols) {
                return Err(Error::Shape("parameter shape does not match the model architecture".into()));
            }
        }
        Ok(())
    }

    pub fn prepare(&self, sample: &GraphSample, stats: &NormalizationStats) -> Result<PreparedInput> {
        sample.validate()?;
        let c = &self.config;
        if sample.history() != c.history {
            return Err(Error::Shape(format!("sample history {} but model expects {}", sample.history(), c.history)));
        }
        let n = sample.num_nodes();
        let e = &sample.edges;
        let index = GraphIndex::new(e)?;
        let target = sample
            .target
            .as_ref()
            .map(|t| rows_of(&t.iter().map(|&a| stats.normalize_acceleration(a)).collect::<Vec<_>>()));
        let inv_r = 1.0 / sample.radius;
        match &self.net {
            Network::Gns(_) => {
                let width = Gns::node_features(c.history);
                let mut nodes = Tensor::zeros(n, width);
                for i in 0..n {
                    let row = nodes.row_mut(i);
                    for (h, vel) in sample.velocities.iter().enumerate() {
                        row[3 * h..3 * h + 3].copy_from_slice(&stats.normalize_velocity(vel[i]));
                    }
                    row[width - 3..].copy_from_slice(&stats.scale_force(sample.force[i]));
                }
                let mut edges = Tensor::zeros(e.len(), GNS_EDGE_FEATURES);
                for (k, d) in e.displacements.iter().enumerate() {
                    let row = edges.row_mut(k);
                    row[..3].copy_from_slice(&d.map(|x| x * inv_r));
                    row[3] = e.distances[k] * inv_r;
                }
                Ok(PreparedInput { index, nodes, edges, edge_dist2: Tensor::zeros(0, 0), history_attrs: Vec::new(), target })
            }
            Network::Segnn(..) => {
                let h = c.history;
                let layout = Segnn::input_layout(c);
                let width = layout.dim();
                let mut nodes = Tensor::zeros(n, width);
                for i in 0..n {
                    let row = nodes.row_mut(i);
                    for (k, vel) in sample.velocities.iter().enumerate() {
                        let v = stats.normalize_velocity(vel[i]);
                        row[k] = norm(v);
                        row[h + 3 * k..h + 3 * k + 3].copy_from_slice(&v);
                    }
                    if !c.force_in_attributes {
                        row[width - 3..].copy_from_slice(&stats.scale_force(sample.force[i]));
                    }
                }
                let edges = edge_attributes(sample);
                let edge_dist2 = Tensor { rows: e.len(), cols: 1, data: e.distances.iter().map(|d| (d * inv_r).powi(2)).collect() };
                let history_attrs = history_attributes(sample, &edges, c.avg_num_neighbors, c.force_in_attributes);
                Ok(PreparedInput { index, nodes, edges, edge_dist2, history_attrs, target })
            }
        }
    }

    /// Node attributes of every HAE site (SEGNN only), as `[N, 4]` values.
    pub fn node_attributes<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, input: &PreparedInput) -> Result<Vec<Var>> {
        let Network::Segnn(net, mode) = &self.net else {
            return Err(Error::Config("node attributes exist only for SEGNN models".into()));
        };
        let history: Vec<Var> = input.history_attrs.iter().map(|a| tape.constant(a.cast())).collect();
        let stacked = (*mode == HaeMode::Tensor).then(|| tape.constant(stack_history(&input.history_attrs).cast()));
        let nodes = tape.constant(input.nodes.cast());
        let edge_attrs = tape.constant(input.edges.cast());
        let edge_dist2 = tape.constant(input.edge_dist2.cast());
        let inputs = SegnnInputs { nodes, edge_attrs, edge_dist2, history_attrs: &history, stacked_history: stacked };
        net.node_attributes(tape, store, &inputs)
    }

    /// Normalized accelerations `[N, 3]`.
    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, input: &PreparedInput) -> Result<Var> {
        let nodes = tape.constant(input.nodes.cast());
        let edges = tape.constant(input.edges.cast());
        match &self.net {
            Network::Gns(net) => net.forward(tape, store, nodes, edges, &input.index),
            Network::Segnn(net, mode) => {
                let edge_dist2 = tape.constant(input.edge_dist2.cast());
                let history: Vec<Var> = input.history_attrs.iter().map(|a| tape.constant(a.cast())).collect();
                let stacked = (*mode == HaeMode::Tensor).then(|| tape.constant(stack_history(&input.history_attrs).cast()));
                let inputs = SegnnInputs { nodes, edge_attrs: edges, edge_dist2, history_attrs: &history, stacked_history: stacked };
                net.forward(tape, store, &inputs, &input.index)
            }
        }
    }

    /// Mean squared error between predicted and target normalized accelerations.
    pub fn loss<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, input: &PreparedInput) -> Result<Var> {
        let target = input.target.as_ref().ok_or_else(|| Error::Config("sample has no acceleration target".into()))?;
        let pred = self.forward(tape, store, input)?;
        tape.mse(pred, target.cast())
    }

    /// Accelerations in frame units, without gradient tracking.
    pub fn predict(&self, store: &ParamStore<f64>, sample: &GraphSample, stats: &NormalizationStats) -> Result<Vec<Vec3>> {
        let input = self.prepare(sample, stats)?;
        let mut tape = Tape::no_grad();
        let out = self.forward(&mut tape, store, &input)?;
        let v = tape.value(out);
        let acc: Vec<Vec3> = (0..v.rows).map(|i| stats.denormalize_acceleration([v.data[3 * i], v.data[3 * i + 1], v.data[3 * i + 2]])).collect();
        if acc.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model prediction".into()));
        }
        Ok(acc)
    }

    /// Coarse parameter category used when reporting gradient checks.
    pub fn layer_type(name: &str) -> String {
        let last = name.rsplit('.').next().unwrap_or(name);
        if name.contains(".hae.") {
            return if last.starts_with("w_h") { "hae_lin".into() } else { format!("hae_tensor_{last}") };
        }
        match last {
            "gamma" | "beta" => "layer_norm".into(),
            "w" => "dense_weight".into(),
            "b" => "dense_bias".into(),
            "bias" => "steerable_bias".into(),
            tag => format!("cg_{tag}"),
        }
    }
}
