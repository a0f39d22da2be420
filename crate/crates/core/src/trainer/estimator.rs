use serde::{Deserialize, Serialize};

use crate::network::{RealizedNetwork, StochasticNetwork};
use crate::policy::TransformerPolicy;
use crate::tensor::{Graph, Gradients};

use super::{TrainError, Trajectory};

/// Which score-function weight each trajectory receives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// On-time indicator `1{G <= T}`.
    Gpg,
    /// Negated travel time; `-2T` for walks that never arrive.
    VanillaPg,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::Gpg => "gpg",
            Estimator::VanillaPg => "vanilla_pg",
        }
    }

    pub fn weight(self, traj: &Trajectory) -> f64 {
        match self {
            Estimator::Gpg => {
                if traj.on_time() {
                    1.0
                } else {
                    0.0
                }
            }
            Estimator::VanillaPg => {
                if traj.reached {
                    -traj.total_time
                } else {
                    -2.0 * traj.budget
                }
            }
        }
    }
}

/// Trajectories sampled in one iteration together with the realized networks
/// they ran on.
#[derive(Clone, Debug)]
pub struct RolloutBatch {
    pub trajectories: Vec<Trajectory>,
    pub budget: f64,
    pub networks: Vec<RealizedNetwork>,
}

impl RolloutBatch {
    pub fn on_time_fraction(&self) -> f64 {
        let hits = self.trajectories.iter().filter(|t| t.on_time()).count();
        hits as f64 / self.trajectories.len() as f64
    }
}

/// `scale * Σ_k ∇ log π(a_k | s_k)` over the non-forced steps of `traj`.
/// `None` when no step involved a choice.
pub fn score_gradient(
    policy: &TransformerPolicy,
    net: &StochasticNetwork,
    traj: &Trajectory,
    scale: f64,
) -> Result<Option<Gradients>, TrainError> {
    let mut g = Graph::new(policy.store());
    let mut total = None;
    for step in traj.steps.iter().filter(|s| !s.forced) {
        let lp = policy.log_prob(&mut g, net, &step.state, step.action)?;
        total = Some(match total {
            None => lp,
            Some(acc) => g.add(acc, lp)?,
        });
    }
    let Some(total) = total else { return Ok(None) };
    let loss = g.scale(total, scale);
    Ok(Some(g.backward(loss)?))
}

/// Gradient of `-(1/n) Σ_j w_j log π(τ_j)`, accumulated in trajectory order.
/// With `baseline` the batch-mean weight is subtracted first.
pub fn surrogate_gradient(
    policy: &TransformerPolicy,
    net: &StochasticNetwork,
    batch: &RolloutBatch,
    estimator: Estimator,
    baseline: bool,
) -> Result<Gradients, TrainError> {
    let n = batch.trajectories.len();
    if n == 0 {
        return Err(TrainError::Config("empty rollout batch".into()));
    }
    let mut weights: Vec<f64> = batch.trajectories.iter().map(|t| estimator.weight(t)).collect();
    if baseline {
        let mean = weights.iter().sum::<f64>() / n as f64;
        weights.iter_mut().for_each(|w| *w -= mean);
    }
    let mut grads = Gradients::new(policy.store().len());
    for (traj, w) in batch.trajectories.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        if let Some(gt) = score_gradient(policy, net, traj, -w / n as f64)? {
            grads.add_scaled(&gt, 1.0);
        }
    }
    Ok(grads)
}

pub fn gpg_gradient(
    policy: &TransformerPolicy,
    net: &StochasticNetwork,
    batch: &RolloutBatch,
) -> Result<Gradients, TrainError> {
    surrogate_gradient(policy, net, batch, Estimator::Gpg, false)
}

pub fn vanilla_pg_gradient(
    policy: &TransformerPolicy,
    net: &StochasticNetwork,
    batch: &RolloutBatch,
) -> Result<Gradients, TrainError> {
    surrogate_gradient(policy, net, batch, Estimator::VanillaPg, false)
}
