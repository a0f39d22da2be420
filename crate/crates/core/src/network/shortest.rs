use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{NetworkError, StochasticNetwork};

/// Least-expected-time route.
#[derive(Clone, Debug, PartialEq)]
pub struct LetPath {
    /// Visited nodes from origin to destination; empty when they coincide.
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    /// Sum of mean travel times along `edges`.
    pub expected_time: f64,
}

#[derive(Clone, Debug)]
struct Label {
    dist: f64,
    nodes: Vec<usize>,
    edges: Vec<usize>,
}

impl Label {
    /// Shorter first; equal lengths fall back to the node sequence.
    fn better_than(&self, other: &Label) -> bool {
        match self.dist.total_cmp(&other.dist) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.nodes < other.nodes,
        }
    }
}

struct Entry {
    dist: f64,
    node: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Dijkstra on mean travel times. Equal-length routes are resolved in favour
/// of the lexicographically smallest node sequence. Means must be positive.
pub fn let_path(
    net: &StochasticNetwork,
    origin: usize,
    destination: usize,
) -> Result<LetPath, NetworkError> {
    let n = net.num_nodes();
    if origin >= n || destination >= n {
        return Err(NetworkError::Invalid(format!(
            "node {} is outside 0..{n}",
            origin.max(destination)
        )));
    }
    if origin == destination {
        return Ok(LetPath {
            nodes: Vec::new(),
            edges: Vec::new(),
            expected_time: 0.0,
        });
    }
    let mu = net.mu();
    let mut best: Vec<Option<Label>> = vec![None; n];
    let mut done = vec![false; n];
    best[origin] = Some(Label {
        dist: 0.0,
        nodes: vec![origin],
        edges: Vec::new(),
    });
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        dist: 0.0,
        node: origin,
    });
    while let Some(Entry { node: u, .. }) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == destination {
            break;
        }
        let from = best[u].clone().expect("queued nodes carry a label");
        for &e in net.out_edges(u) {
            let v = net.edge(e).head;
            if done[v] {
                continue;
            }
            let mut nodes = from.nodes.clone();
            nodes.push(v);
            let mut edges = from.edges.clone();
            edges.push(e);
            let cand = Label {
                dist: from.dist + mu[e],
                nodes,
                edges,
            };
            if best[v].as_ref().is_none_or(|cur| cand.better_than(cur)) {
                heap.push(Entry {
                    dist: cand.dist,
                    node: v,
                });
                best[v] = Some(cand);
            }
        }
    }
    match best[destination].take() {
        Some(l) if done[destination] => Ok(LetPath {
            nodes: l.nodes,
            edges: l.edges,
            expected_time: l.dist,
        }),
        _ => Err(NetworkError::Unreachable {
            origin,
            destination,
        }),
    }
}
