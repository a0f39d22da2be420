use serde::{Deserialize, Serialize};

use crate::network::StochasticNetwork;

use super::PolicyError;

/// Everything the router knows at a decision point: the traversed edges, their
/// realized travel times, where it is, where it is going and how much budget
/// is left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryState {
    pub edge_history: Vec<usize>,
    pub time_history: Vec<f64>,
    pub current_node: usize,
    pub destination: usize,
    /// Budget minus elapsed time; negative once late.
    pub remaining_budget: f64,
    pub budget_total: f64,
}

impl TrajectoryState {
    pub fn initial(origin: usize, destination: usize, budget: f64) -> Self {
        Self {
            edge_history: Vec::new(),
            time_history: Vec::new(),
            current_node: origin,
            destination,
            remaining_budget: budget,
            budget_total: budget,
        }
    }

    pub fn history_len(&self) -> usize {
        self.edge_history.len()
    }

    pub fn elapsed(&self) -> f64 {
        self.time_history.iter().sum()
    }

    /// Appends a traversed edge and moves to its head.
    pub fn advance(&mut self, edge: usize, head: usize, time: f64) {
        self.edge_history.push(edge);
        self.time_history.push(time);
        self.current_node = head;
        self.remaining_budget = self.budget_total - self.elapsed();
    }

    /// Checks the state against `net`: matching history lengths, a chained
    /// edge sequence ending at `current_node`, and a consistent budget.
    pub fn validate(&self, net: &StochasticNetwork, origin: usize) -> Result<(), PolicyError> {
        if self.edge_history.len() != self.time_history.len() {
            return Err(PolicyError::InconsistentState(format!(
                "{} edges but {} times",
                self.edge_history.len(),
                self.time_history.len()
            )));
        }
        let mut at = origin;
        for &e in &self.edge_history {
            if e >= net.num_edges() {
                return Err(PolicyError::IdOutOfRange {
                    kind: "edge",
                    id: e,
                    bound: net.num_edges(),
                });
            }
            let edge = net.edge(e);
            if edge.tail != at {
                return Err(PolicyError::InconsistentState(format!(
                    "edge {e} leaves node {} but the walk is at {at}",
                    edge.tail
                )));
            }
            at = edge.head;
        }
        if at != self.current_node {
            return Err(PolicyError::InconsistentState(format!(
                "history ends at {at}, current node is {}",
                self.current_node
            )));
        }
        let expected = self.budget_total - self.elapsed();
        if (expected - self.remaining_budget).abs() > 1e-9 {
            return Err(PolicyError::InconsistentState(format!(
                "remaining budget {} but total minus elapsed is {expected}",
                self.remaining_budget
            )));
        }
        Ok(())
    }
}

/// Distribution over the next edge. Only outgoing edges of the current node
/// carry mass.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionDistribution {
    pub probs: Vec<f64>,
    pub feasible: Vec<bool>,
}

impl ActionDistribution {
    /// Inverse-CDF pick for a uniform draw `u ∈ [0, 1)` over feasible edges in
    /// id order.
    pub fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        let mut last = None;
        for (e, (&p, &ok)) in self.probs.iter().zip(&self.feasible).enumerate() {
            if !ok || p <= 0.0 {
                continue;
            }
            acc += p;
            last = Some(e);
            if u < acc {
                return e;
            }
        }
        last.or_else(|| self.feasible.iter().position(|&f| f))
            .expect("at least one feasible edge")
    }

    /// Feasible edge with the highest probability; lowest id on ties.
    pub fn argmax(&self) -> usize {
        let mut best: Option<usize> = None;
        for (e, &ok) in self.feasible.iter().enumerate() {
            if ok && best.is_none_or(|b| self.probs[e] > self.probs[b]) {
                best = Some(e);
            }
        }
        best.expect("at least one feasible edge")
    }

    pub fn total_variation(&self, other: &ActionDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_synthetic;

    #[test]
    fn advance_keeps_budget_consistent() {
        let net = build_synthetic();
        let mut s = TrajectoryState::initial(0, 4, 106.0);
        s.advance(0, 1, 4.5);
        s.advance(2, 3, 101.25);
        assert_eq!(s.remaining_budget, 106.0 - 105.75);
        s.validate(&net, 0).unwrap();
    }

    #[test]
    fn broken_chain_is_rejected() {
        let net = build_synthetic();
        let mut s = TrajectoryState::initial(0, 4, 106.0);
        s.advance(1, 2, 3.0);
        assert!(s.validate(&net, 0).is_err());
    }

    #[test]
    fn pick_follows_cdf() {
        let d = ActionDistribution {
            probs: vec![0.0, 0.25, 0.75, 0.0],
            feasible: vec![false, true, true, false],
        };
        assert_eq!(d.pick(0.0), 1);
        assert_eq!(d.pick(0.2499), 1);
        assert_eq!(d.pick(0.25), 2);
        assert_eq!(d.pick(0.999999), 2);
        assert_eq!(d.argmax(), 2);
    }
}
