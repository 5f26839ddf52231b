use rand::Rng;

use super::layers::Mlp;
use super::sample::GraphIndex;
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::models::ModelConfig;
use crate::scalar::Real;

/// Number of edge input features: displacement and distance over the radius.
pub const GNS_EDGE_FEATURES: usize = 4;

/// Encoder-processor-decoder graph network on dense latents.
#[derive(Clone, Debug)]
pub struct Gns {
    node_encoder: Mlp,
    edge_encoder: Mlp,
    processor: Vec<(Mlp, Mlp)>,
    decoder: Mlp,
}

impl Gns {
    pub fn node_features(history: usize) -> usize {
        3 * history + 3
    }

    pub fn new<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R, c: &ModelConfig) -> Self {
        let (d, k) = (c.hidden, c.mlp_hidden_layers);
        let node_encoder = Mlp::new(store, rng, "gns.encoder.node", Self::node_features(c.history), d, d, k, true);
        let edge_encoder = Mlp::new(store, rng, "gns.encoder.edge", GNS_EDGE_FEATURES, d, d, k, true);
        let processor = (0..c.layers)
            .map(|l| {
                (
                    Mlp::new(store, rng, &format!("gns.processor.{l}.edge"), 3 * d, d, d, k, true),
                    Mlp::new(store, rng, &format!("gns.processor.{l}.node"), 2 * d, d, d, k, true),
                )
            })
            .collect();
        let decoder = Mlp::new(store, rng, "gns.decoder", d, d, 3, k, false);
        Self { node_encoder, edge_encoder, processor, decoder }
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, nodes: Var, edges: Var, index: &GraphIndex) -> Result<Var> {
        let mut v = self.node_encoder.apply(tape, store, nodes)?;
        let mut e = self.edge_encoder.apply(tape, store, edges)?;
        for (edge_mlp, node_mlp) in &self.processor {
            let vs = tape.gather(v, index.senders.clone())?;
            let vr = tape.gather(v, index.receivers.clone())?;
            let cat = tape.concat(&[e, vs, vr])?;
            let de = edge_mlp.apply(tape, store, cat)?;
            let agg = tape.scatter_sum(de, index.receivers.clone())?;
            let cat = tape.concat(&[v, agg])?;
            let dv = node_mlp.apply(tape, store, cat)?;
            e = tape.add(e, de)?;
            v = tape.add(v, dv)?;
        }
        self.decoder.apply(tape, store, v)
    }
}
