use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::NormalizationMode;

/// How per-step historical node attributes are merged into one attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaeMode {
    Avg,
    Lin,
    Tensor,
}

/// Model selector as it appears in run configurations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "gns")]
    Gns,
    #[serde(rename = "segnn-avg")]
    SegnnAvg,
    #[serde(rename = "segnn-lin")]
    SegnnLin,
    #[serde(rename = "segnn-tensor")]
    SegnnTensor,
}

impl ModelKind {
    pub fn hae(self) -> Option<HaeMode> {
        match self {
            Self::Gns => None,
            Self::SegnnAvg => Some(HaeMode::Avg),
            Self::SegnnLin => Some(HaeMode::Lin),
            Self::SegnnTensor => Some(HaeMode::Tensor),
        }
    }

    pub fn normalization(self) -> NormalizationMode {
        match self {
            Self::Gns => NormalizationMode::Component,
            _ => NormalizationMode::Magnitude,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Gns => "gns",
            Self::SegnnAvg => "segnn-avg",
            Self::SegnnLin => "segnn-lin",
            Self::SegnnTensor => "segnn-tensor",
        }
    }
}

/// Architecture hyperparameters shared by both model families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Number of message-passing layers.
    pub layers: usize,
    /// Latent width (GNS) or steerable feature dimension split evenly into
    /// scalar and vector channels (SEGNN).
    pub hidden: usize,
    /// Number of past velocities fed to the model.
    pub history: usize,
    /// Hidden layers per dense MLP (GNS only).
    pub mlp_hidden_layers: usize,
    /// Feed the external force through the node attributes instead of the
    /// node features (SEGNN only).
    pub force_in_attributes: bool,
    /// Normalizer for neighbor sums (SEGNN attribute and message aggregation).
    pub avg_num_neighbors: f64,
    /// Seed for parameter initialization.
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn gns(layers: usize, hidden: usize, history: usize) -> Self {
        Self {
            kind: ModelKind::Gns,
            layers,
            hidden,
            history,
            mlp_hidden_layers: 1,
            force_in_attributes: false,
            avg_num_neighbors: 18.0,
            init_seed: 0,
        }
    }

    pub fn segnn(hae: HaeMode, layers: usize, hidden: usize, history: usize) -> Self {
        let kind = match hae {
            HaeMode::Avg => ModelKind::SegnnAvg,
            HaeMode::Lin => ModelKind::SegnnLin,
            HaeMode::Tensor => ModelKind::SegnnTensor,
        };
        Self { kind, ..Self::gns(layers, hidden, history) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("model needs at least one layer".into()));
        }
        if self.history == 0 {
            return Err(Error::Config("history length must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        if self.kind != ModelKind::Gns && self.hidden % 2 != 0 {
            return Err(Error::Config(format!("steerable feature dimension {} must be even", self.hidden)));
        }
        if !(self.avg_num_neighbors > 0.0 && self.avg_num_neighbors.is_finite()) {
            return Err(Error::Config("avg_num_neighbors must be positive".into()));
        }
        Ok(())
    }
}
