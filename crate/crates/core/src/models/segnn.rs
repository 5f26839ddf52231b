use rand::Rng;

use super::hae::Hae;
use super::layers::{SteerableInit, SteerableLinear};
use super::sample::GraphIndex;
use crate::autodiff::{ParamStore, Tape, Var};
use crate::error::Result;
use crate::models::{HaeMode, ModelConfig};
use crate::scalar::Real;
use crate::steerable::IrrepsLayout;

#[derive(Clone, Debug)]
struct SegnnLayer {
    message: [SteerableLinear; 2],
    update: [SteerableLinear; 2],
}

/// Steerable message passing conditioned on edge and historical node attributes.
#[derive(Clone, Debug)]
pub struct Segnn {
    hae: Vec<Hae>,
    embed: SteerableLinear,
    layers: Vec<SegnnLayer>,
    decoder: [SteerableLinear; 2],
    inv_neighbors: f64,
}

/// Per-call attribute inputs of a SEGNN forward pass.
pub struct SegnnInputs<'a> {
    pub nodes: Var,
    pub edge_attrs: Var,
    pub edge_dist2: Var,
    pub history_attrs: &'a [Var],
    pub stacked_history: Option<Var>,
}

impl Segnn {
    /// `H x 0e` speeds, then `H x 1o` velocities, then the force vector unless
    /// it is routed through the attributes.
    pub fn input_layout(c: &ModelConfig) -> IrrepsLayout {
        let force = usize::from(!c.force_in_attributes);
        IrrepsLayout::scalars_vectors(c.history, c.history + force)
    }

    pub fn hidden_layout(c: &ModelConfig) -> IrrepsLayout {
        IrrepsLayout::scalars_vectors(c.hidden / 2, c.hidden / 2)
    }

    pub fn new<R: Rng>(store: &mut ParamStore<f64>, rng: &mut R, c: &ModelConfig, mode: HaeMode) -> Self {
        let sh = IrrepsLayout::sh1();
        let hidden = Self::hidden_layout(c);
        let d2 = IrrepsLayout::scalars_vectors(1, 0);
        let msg_in = hidden.concat(&hidden).concat(&d2);
        let upd_in = hidden.concat(&hidden);
        let vec_out = IrrepsLayout::scalars_vectors(0, 1);
        let std = SteerableInit::Standard;
        let hae = (0..c.layers).map(|l| Hae::new(store, rng, &format!("segnn.hae.{l}"), mode, c.history)).collect();
        let embed = SteerableLinear::new(store, rng, "segnn.embed", &Self::input_layout(c), &sh, &hidden, true, true, std);
        let layers = (0..c.layers)
            .map(|l| {
                let p = format!("segnn.layer.{l}");
                SegnnLayer {
                    message: [
                        SteerableLinear::new(store, rng, &format!("{p}.message.0"), &msg_in, &sh, &hidden, true, true, std),
                        SteerableLinear::new(store, rng, &format!("{p}.message.1"), &hidden, &sh, &hidden, true, true, std),
                    ],
                    update: [
                        SteerableLinear::new(store, rng, &format!("{p}.update.0"), &upd_in, &sh, &hidden, true, true, std),
                        SteerableLinear::new(store, rng, &format!("{p}.update.1"), &hidden, &sh, &hidden, false, true, std),
                    ],
                }
            })
            .collect();
        let decoder = [
            SteerableLinear::new(store, rng, "segnn.decoder.0", &hidden, &sh, &hidden, true, true, std),
            SteerableLinear::new(store, rng, "segnn.decoder.1", &hidden, &sh, &vec_out, false, false, std),
        ];
        Self { hae, embed, layers, decoder, inv_neighbors: 1.0 / c.avg_num_neighbors }
    }

    /// Node attributes of every HAE site.
    pub fn node_attributes<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, inputs: &SegnnInputs) -> Result<Vec<Var>> {
        self.hae.iter().map(|h| h.apply(tape, store, inputs.history_attrs, inputs.stacked_history)).collect()
    }

    pub fn forward<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, inputs: &SegnnInputs, index: &GraphIndex) -> Result<Var> {
        let attrs = self.node_attributes(tape, store, inputs)?;
        let mut f = self.embed.apply(tape, store, inputs.nodes, attrs[0])?;
        for (layer, &a_i) in self.layers.iter().zip(&attrs) {
            let fi = tape.gather(f, index.receivers.clone())?;
            let fj = tape.gather(f, index.senders.clone())?;
            let cat = tape.concat(&[fi, fj, inputs.edge_dist2])?;
            let m = layer.message[0].apply(tape, store, cat, inputs.edge_attrs)?;
            let m = layer.message[1].apply(tape, store, m, inputs.edge_attrs)?;
            let agg = tape.scatter_sum(m, index.receivers.clone())?;
            let agg = tape.scale(agg, T::c(self.inv_neighbors));
            let cat = tape.concat(&[f, agg])?;
            let u = layer.update[0].apply(tape, store, cat, a_i)?;
            let u = layer.update[1].apply(tape, store, u, a_i)?;
            f = tape.add(f, u)?;
        }
        let last = *attrs.last().expect("at least one layer");
        let h = self.decoder[0].apply(tape, store, f, last)?;
        self.decoder[1].apply(tape, store, h, last)
    }
}
