use std::sync::Arc;

use crate::autodiff::RowGroups;
use crate::error::{Error, Result};
use crate::neighbors::{DomainSpec, EdgeList};
use crate::vec3::Vec3;

/// One model input: the current configuration of a particle system with its
/// recent velocity history, all in frame units.
#[derive(Clone, Debug)]
pub struct GraphSample {
    pub positions: Vec<Vec3>,
    /// `velocities[h][i]`, oldest first; `velocities[H - 1]` is the most recent.
    pub velocities: Vec<Vec<Vec3>>,
    /// External force per particle, as an acceleration in frame units.
    pub force: Vec<Vec3>,
    pub domain: DomainSpec,
    /// Connectivity radius used to build `edges`.
    pub radius: f64,
    pub edges: EdgeList,
    /// Acceleration targets (training only).
    pub target: Option<Vec<Vec3>>,
}

impl GraphSample {
    pub fn num_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn history(&self) -> usize {
        self.velocities.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        if self.velocities.is_empty() {
            return Err(Error::Shape("sample has no velocity history".into()));
        }
        if self.velocities.iter().any(|v| v.len() != n) || self.force.len() != n {
            return Err(Error::Shape("per-node arrays disagree in length".into()));
        }
        if self.edges.num_nodes() != n {
            return Err(Error::Shape(format!("edge list built for {} nodes, sample has {n}", self.edges.num_nodes())));
        }
        if let Some(t) = &self.target {
            if t.len() != n {
                return Err(Error::Shape("target length differs from node count".into()));
            }
        }
        Ok(())
    }
}

/// Sender and receiver index groupings for gathers and scatter-sums.
#[derive(Clone, Debug)]
pub struct GraphIndex {
    pub senders: Arc<RowGroups>,
    pub receivers: Arc<RowGroups>,
}

impl GraphIndex {
    pub fn new(edges: &EdgeList) -> Result<Self> {
        let n = edges.num_nodes();
        Ok(Self {
            senders: Arc::new(RowGroups::new(edges.senders.clone(), n)?),
            receivers: Arc::new(RowGroups::new(edges.receivers.clone(), n)?),
        })
    }
}
