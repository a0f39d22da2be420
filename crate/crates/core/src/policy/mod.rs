//! Routing policies: the trajectory state, the transformer policy and a
//! trait shared with hand-written reference policies.

mod config;
mod model;
mod state;

pub use config::{PolicyConfig, PolicyVariant, TimeNorm};
pub use model::{feasible_mask, sinusoid_rows, Embedded, Padding, TransformerPolicy};
pub use state::{ActionDistribution, TrajectoryState};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::StochasticNetwork;
use crate::tensor::{ParameterStore, StoreCheckpoint, TensorError};

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid policy configuration: {0}")]
    Config(String),
    #[error("{kind} id {id} out of range (vocabulary {bound})")]
    IdOutOfRange {
        kind: &'static str,
        id: usize,
        bound: usize,
    },
    #[error("history of {len} edges exceeds the maximum of {max}")]
    HistoryOverflow { len: usize, max: usize },
    #[error("node {node} has no outgoing edges")]
    DeadEnd { node: usize },
    #[error("edge {edge} does not leave node {node}")]
    InfeasibleAction { edge: usize, node: usize },
    #[error("inconsistent trajectory state: {0}")]
    InconsistentState(String),
}

/// Anything that maps a trajectory state to a next-edge distribution.
pub trait RoutingPolicy {
    fn distribution(
        &self,
        net: &StochasticNetwork,
        state: &TrajectoryState,
    ) -> Result<ActionDistribution, PolicyError>;
}

impl RoutingPolicy for TransformerPolicy {
    fn distribution(
        &self,
        net: &StochasticNetwork,
        state: &TrajectoryState,
    ) -> Result<ActionDistribution, PolicyError> {
        self.action_distribution(net, state)
    }
}

/// Always follows a fixed edge sequence; at nodes off the route it falls back
/// to the lowest-id outgoing edge.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedRoutePolicy {
    pub edges: Vec<usize>,
}

impl RoutingPolicy for FixedRoutePolicy {
    fn distribution(
        &self,
        net: &StochasticNetwork,
        state: &TrajectoryState,
    ) -> Result<ActionDistribution, PolicyError> {
        let feasible = feasible_mask(net, state.current_node)?;
        let on_route = self
            .edges
            .get(state.history_len())
            .copied()
            .filter(|&e| feasible[e]);
        let pick = on_route.unwrap_or_else(|| net.out_edges(state.current_node)[0]);
        let mut probs = vec![0.0; net.num_edges()];
        probs[pick] = 1.0;
        Ok(ActionDistribution { probs, feasible })
    }
}

/// Uniform over outgoing edges.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UniformPolicy;

impl RoutingPolicy for UniformPolicy {
    fn distribution(
        &self,
        net: &StochasticNetwork,
        state: &TrajectoryState,
    ) -> Result<ActionDistribution, PolicyError> {
        let feasible = feasible_mask(net, state.current_node)?;
        let k = net.out_edges(state.current_node).len() as f64;
        let probs = feasible
            .iter()
            .map(|&f| if f { 1.0 / k } else { 0.0 })
            .collect();
        Ok(ActionDistribution { probs, feasible })
    }
}

/// Configuration header plus parameter snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub config: PolicyConfig,
    pub params: StoreCheckpoint,
}

impl TransformerPolicy {
    pub fn to_checkpoint(&self) -> PolicyCheckpoint {
        PolicyCheckpoint {
            config: self.config().clone(),
            params: self.store().to_checkpoint(),
        }
    }

    pub fn from_checkpoint(ckpt: &PolicyCheckpoint) -> Result<Self, PolicyError> {
        let store = ParameterStore::from_checkpoint(&ckpt.params)?;
        Self::from_parts(ckpt.config.clone(), store)
    }
}
