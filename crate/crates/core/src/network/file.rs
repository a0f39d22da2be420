use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{generate_covariance, invalid, Edge, NetworkError, StochasticNetwork};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub id: usize,
    pub tail: usize,
    pub head: usize,
}

/// Covariance as an explicit matrix, or as variances plus a correlation seed
/// expanded through [`generate_covariance`] at load time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Matrix(Vec<Vec<f64>>),
    Generated {
        variances: Vec<f64>,
        correlation_seed: u64,
    },
}

/// On-disk network layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: usize,
    pub edges: Vec<EdgeRecord>,
    pub mu: Vec<f64>,
    pub sigma: SigmaSpec,
}

impl NetworkFile {
    pub fn from_network(net: &StochasticNetwork) -> Self {
        let l = net.num_edges();
        Self {
            nodes: net.num_nodes(),
            edges: net
                .edges()
                .iter()
                .map(|e| EdgeRecord {
                    id: e.id,
                    tail: e.tail,
                    head: e.head,
                })
                .collect(),
            mu: net.mu().to_vec(),
            sigma: SigmaSpec::Matrix(
                (0..l)
                    .map(|i| (0..l).map(|j| net.sigma()[(i, j)]).collect())
                    .collect(),
            ),
        }
    }

    pub fn into_network(self) -> Result<StochasticNetwork, NetworkError> {
        let l = self.edges.len();
        let sigma = match self.sigma {
            SigmaSpec::Matrix(rows) => {
                if rows.len() != l || rows.iter().any(|r| r.len() != l) {
                    return Err(invalid(format!("sigma must be {l}x{l}")));
                }
                DMatrix::from_fn(l, l, |i, j| rows[i][j])
            }
            SigmaSpec::Generated {
                variances,
                correlation_seed,
            } => {
                if variances.len() != l {
                    return Err(invalid(format!(
                        "{} variances for {l} edges",
                        variances.len()
                    )));
                }
                generate_covariance(&variances, correlation_seed)?.covariance
            }
        };
        let edges = self
            .edges
            .into_iter()
            .map(|e| Edge {
                id: e.id,
                tail: e.tail,
                head: e.head,
            })
            .collect();
        StochasticNetwork::new(self.nodes, edges, self.mu, sigma)
    }
}

impl StochasticNetwork {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from_network(self)).expect("plain data")
    }

    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text)?;
        file.into_network()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetworkError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_synthetic;

    #[test]
    fn synthetic_round_trips_exactly() {
        let net = build_synthetic();
        let back = StochasticNetwork::from_json(&net.to_json()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn asymmetric_sigma_rejected() {
        let text = r#"{"nodes":2,"edges":[{"id":0,"tail":0,"head":1},{"id":1,"tail":1,"head":0}],
            "mu":[1.0,1.0],"sigma":[[1.0,0.3],[0.2,1.0]]}"#;
        assert!(matches!(
            StochasticNetwork::from_json(text),
            Err(NetworkError::Invalid(_))
        ));
    }

    #[test]
    fn dangling_node_rejected() {
        let text = r#"{"nodes":2,"edges":[{"id":0,"tail":0,"head":5}],"mu":[1.0],"sigma":[[1.0]]}"#;
        assert!(matches!(
            StochasticNetwork::from_json(text),
            Err(NetworkError::Invalid(_))
        ));
    }

    #[test]
    fn malformed_file_is_a_parse_error() {
        assert!(matches!(
            StochasticNetwork::from_json("{\"nodes\": 3, \"edges\": ["),
            Err(NetworkError::Parse(_))
        ));
    }

    #[test]
    fn generated_sigma_is_expanded() {
        let text = r#"{"nodes":2,"edges":[{"id":0,"tail":0,"head":1},{"id":1,"tail":1,"head":0}],
            "mu":[1.0,2.0],"sigma":{"variances":[1.0,4.0],"correlation_seed":7}}"#;
        let net = StochasticNetwork::from_json(text).unwrap();
        assert_eq!(net.sigma()[(0, 0)], 1.0);
        assert_eq!(net.sigma()[(1, 1)], 4.0);
    }
}
