use rand::Rng;

use crate::network::{RealizedNetwork, StochasticNetwork};
use crate::policy::{RoutingPolicy, TrajectoryState};

use super::TrainError;

/// One decision: the state seen, the edge taken and its realized time.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: TrajectoryState,
    pub action: usize,
    pub reward: f64,
    /// The current node had a single outgoing edge, so the policy was not
    /// consulted and the step carries no gradient.
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub reached: bool,
    /// Total travel time, `+inf` unless the destination was reached.
    pub total_time: f64,
    /// Stopped early because the budget was already exhausted.
    pub abandoned: bool,
    pub budget: f64,
}

impl Trajectory {
    pub fn on_time(&self) -> bool {
        self.reached && self.total_time <= self.budget
    }

    pub fn edges(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// How a rollout picks among outgoing edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Argmax,
}

#[derive(Clone, Copy, Debug)]
pub struct RolloutSpec {
    pub origin: usize,
    pub destination: usize,
    pub budget: f64,
    pub max_steps: usize,
    /// Stop as soon as the remaining budget is non-positive away from the
    /// destination. Such a walk can no longer be on time.
    pub stop_when_late: bool,
    pub mode: ActionMode,
}

/// Walks `policy` over one realized network until the destination is reached
/// or `max_steps` edges have been taken.
pub fn rollout<P: RoutingPolicy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    net: &StochasticNetwork,
    realized: &RealizedNetwork,
    spec: &RolloutSpec,
    rng: &mut R,
) -> Result<Trajectory, TrainError> {
    let mut state = TrajectoryState::initial(spec.origin, spec.destination, spec.budget);
    let mut steps = Vec::new();
    let mut abandoned = false;
    while state.current_node != spec.destination {
        if steps.len() >= spec.max_steps {
            break;
        }
        if spec.stop_when_late && state.remaining_budget <= 0.0 {
            abandoned = true;
            break;
        }
        let out = net.out_edges(state.current_node);
        let (action, forced) = match out.len() {
            0 => {
                return Err(TrainError::DeadEnd {
                    node: state.current_node,
                })
            }
            1 => (out[0], true),
            _ => {
                let dist = policy.distribution(net, &state)?;
                let a = match spec.mode {
                    ActionMode::Sample => dist.pick(rng.gen::<f64>()),
                    ActionMode::Argmax => dist.argmax(),
                };
                (a, false)
            }
        };
        let reward = realized.time(action);
        let head = net.edge(action).head;
        let before = state.clone();
        state.advance(action, head, reward);
        steps.push(Step {
            state: before,
            action,
            reward,
            forced,
        });
    }
    let reached = state.current_node == spec.destination;
    let total_time = if reached {
        steps.iter().map(|s| s.reward).sum()
    } else {
        f64::INFINITY
    };
    Ok(Trajectory {
        steps,
        reached,
        total_time,
        abandoned,
        budget: spec.budget,
    })
}
