//! Road networks whose edge travel times are jointly Gaussian.
//!
//! Travel times may be correlated across edges. Edges with zero variance are
//! deterministic and always take their mean.

mod covariance;
mod file;
mod instances;
mod shortest;

pub use covariance::{generate_covariance, min_eigenvalue, nearest_psd, CorrelationDraw};
pub use file::{NetworkFile, SigmaSpec};
pub use instances::{
    build_bandit, build_sioux_falls, build_synthetic, sioux_falls_links, SFN_OD_PAIRS, SYNTHETIC_DESTINATION,
    SYNTHETIC_NODE_LABELS, SYNTHETIC_ORIGIN,
};
pub use shortest::{let_path, LetPath};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

/// Lower bound applied to every sampled travel time.
pub const TIME_FLOOR: f64 = 1e-3;

pub const SYMMETRY_TOL: f64 = 1e-9;
pub const PSD_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed network file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("node {destination} is not reachable from node {origin}")]
    Unreachable { origin: usize, destination: usize },
}

fn invalid(msg: impl Into<String>) -> NetworkError {
    NetworkError::Invalid(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: usize,
    pub tail: usize,
    pub head: usize,
}

/// Directed graph with a multivariate normal law `N(mu, sigma)` over its edge
/// travel times. Immutable once built.
#[derive(Clone, Debug)]
pub struct StochasticNetwork {
    num_nodes: usize,
    edges: Vec<Edge>,
    mu: Vec<f64>,
    sigma: DMatrix<f64>,
    deterministic: Vec<bool>,
    out_edges: Vec<Vec<usize>>,
    /// `F` with `F Fᵀ = sigma`, from the clipped eigendecomposition.
    factor: DMatrix<f64>,
}

impl PartialEq for StochasticNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.num_nodes == other.num_nodes
            && self.edges == other.edges
            && self.mu == other.mu
            && self.sigma == other.sigma
    }
}

impl StochasticNetwork {
    /// Validates and builds a network. Violations are rejected, never repaired.
    pub fn new(
        num_nodes: usize,
        edges: Vec<Edge>,
        mu: Vec<f64>,
        sigma: DMatrix<f64>,
    ) -> Result<Self, NetworkError> {
        let l = edges.len();
        if num_nodes == 0 {
            return Err(invalid("network has no nodes"));
        }
        for (i, e) in edges.iter().enumerate() {
            if e.id != i {
                return Err(invalid(format!(
                    "edge ids must be dense and ordered; position {i} has id {}",
                    e.id
                )));
            }
            if e.tail >= num_nodes || e.head >= num_nodes {
                return Err(invalid(format!(
                    "edge {i} ({} -> {}) references a node outside 0..{num_nodes}",
                    e.tail, e.head
                )));
            }
        }
        if mu.len() != l {
            return Err(invalid(format!("mu has {} entries for {l} edges", mu.len())));
        }
        if let Some(i) = mu.iter().position(|m| !m.is_finite()) {
            return Err(invalid(format!("mu[{i}] is not finite")));
        }
        if sigma.shape() != (l, l) {
            return Err(invalid(format!(
                "sigma is {:?}, expected {l}x{l}",
                sigma.shape()
            )));
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sigma has non-finite entries"));
        }
        check_symmetric(&sigma)?;
        for i in 0..l {
            if sigma[(i, i)] < 0.0 {
                return Err(invalid(format!("negative variance {} on edge {i}", sigma[(i, i)])));
            }
        }
        let (values, vectors) = if l == 0 {
            (Vec::new(), DMatrix::zeros(0, 0))
        } else {
            let eig = SymmetricEigen::new(sigma.clone());
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        };
        let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eig < -PSD_TOL {
            return Err(invalid(format!(
                "sigma is not positive semi-definite (min eigenvalue {min_eig:e})"
            )));
        }
        let deterministic: Vec<bool> = (0..l).map(|i| sigma[(i, i)] == 0.0).collect();
        for i in 0..l {
            if deterministic[i] && (0..l).any(|j| sigma[(i, j)] != 0.0) {
                return Err(invalid(format!(
                    "edge {i} has zero variance but non-zero covariances"
                )));
            }
        }

        let mut factor = vectors;
        for (j, lambda) in values.iter().enumerate() {
            let s = lambda.max(0.0).sqrt();
            factor.column_mut(j).scale_mut(s);
        }
        let mut out_edges = vec![Vec::new(); num_nodes];
        for e in &edges {
            out_edges[e.tail].push(e.id);
        }
        Ok(Self {
            num_nodes,
            edges,
            mu,
            sigma,
            deterministic,
            out_edges,
            factor,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> Edge {
        self.edges[id]
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn is_deterministic(&self, edge: usize) -> bool {
        self.deterministic[edge]
    }

    /// Outgoing edge ids of `node`, in id order.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    /// Fewest edges on any walk from `from` to each node; `None` if unreachable.
    pub fn hop_distances(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.num_nodes];
        let mut queue = std::collections::VecDeque::from([from]);
        dist[from] = Some(0);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap_or(0);
            for &e in &self.out_edges[u] {
                let v = self.edges[e].head;
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Largest finite hop distance between any ordered node pair.
    pub fn hop_diameter(&self) -> usize {
        (0..self.num_nodes)
            .flat_map(|u| self.hop_distances(u))
            .flatten()
            .max()
            .unwrap_or(0)
    }

    /// Copy of the network with every covariance multiplied by `factor`.
    pub fn with_scaled_covariance(&self, factor: f64) -> Result<Self, NetworkError> {
        Self::new(
            self.num_nodes,
            self.edges.clone(),
            self.mu.clone(),
            &self.sigma * factor,
        )
    }

    /// One joint draw of all edge travel times.
    ///
    /// Pure in `(self, seed)`. Draws below [`TIME_FLOOR`] are clamped to it and
    /// deterministic edges take exactly their mean.
    pub fn sample_realization(&self, seed: u64) -> RealizedNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = self.edges.len();
        let z: Vec<f64> = (0..l).map(|_| StandardNormal.sample(&mut rng)).collect();
        let times = (0..l)
            .map(|i| {
                if self.deterministic[i] {
                    return self.mu[i];
                }
                let row = self.factor.row(i);
                let noise: f64 = row.iter().zip(&z).map(|(f, zj)| f * zj).sum();
                (self.mu[i] + noise).max(TIME_FLOOR)
            })
            .collect();
        RealizedNetwork { times, seed }
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<(), NetworkError> {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL {
                return Err(invalid(format!(
                    "sigma is not symmetric at ({i}, {j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Travel times of every edge for one sampled scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct RealizedNetwork {
    pub times: Vec<f64>,
    pub seed: u64,
}

impl RealizedNetwork {
    pub fn time(&self, edge: usize) -> f64 {
        self.times[edge]
    }
}
