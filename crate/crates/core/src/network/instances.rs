use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{generate_covariance, Edge, NetworkError, StochasticNetwork};

pub const SYNTHETIC_NODE_LABELS: [&str; 5] = ["A", "B", "C", "D", "E"];
pub const SYNTHETIC_ORIGIN: usize = 0;
pub const SYNTHETIC_DESTINATION: usize = 4;

/// The five-node diamond A→B→{C,D}→E.
///
/// Edges are AB, BC, BD, CE, DE (ids 0..5). AB, BC and BD are jointly
/// Gaussian; CE and DE always take 1.
pub fn build_synthetic() -> StochasticNetwork {
    let edges = [(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)]
        .iter()
        .enumerate()
        .map(|(id, &(tail, head))| Edge { id, tail, head })
        .collect();
    let mu = vec![5.0, 100.0, 100.0, 1.0, 1.0];
    #[rustfmt::skip]
    let sigma = DMatrix::from_row_slice(5, 5, &[
        1.0, 0.5,  0.0, 0.0, 0.0,
        0.5, 2.0, -1.0, 0.0, 0.0,
        0.0, -1.0, 2.0, 0.0, 0.0,
        0.0, 0.0,  0.0, 0.0, 0.0,
        0.0, 0.0,  0.0, 0.0, 0.0,
    ]);
    StochasticNetwork::new(5, edges, mu, sigma).expect("synthetic network is valid")
}

/// Sioux Falls links as `(tail, head, free-flow time)` with 1-based node numbers.
const SIOUX_FALLS: [(usize, usize, f64); 76] = [
    (1, 2, 6.0), (1, 3, 4.0), (2, 1, 6.0), (2, 6, 5.0), (3, 1, 4.0), (3, 4, 4.0),
    (3, 12, 4.0), (4, 3, 4.0), (4, 5, 2.0), (4, 11, 6.0), (5, 4, 2.0), (5, 6, 4.0),
    (5, 9, 5.0), (6, 2, 5.0), (6, 5, 4.0), (6, 8, 2.0), (7, 8, 3.0), (7, 18, 2.0),
    (8, 6, 2.0), (8, 7, 3.0), (8, 9, 10.0), (8, 16, 5.0), (9, 5, 5.0), (9, 8, 10.0),
    (9, 10, 3.0), (10, 9, 3.0), (10, 11, 5.0), (10, 15, 6.0), (10, 16, 4.0), (10, 17, 8.0),
    (11, 4, 6.0), (11, 10, 5.0), (11, 12, 6.0), (11, 14, 4.0), (12, 3, 4.0), (12, 11, 6.0),
    (12, 13, 3.0), (13, 12, 3.0), (13, 24, 4.0), (14, 11, 4.0), (14, 15, 5.0), (14, 23, 4.0),
    (15, 10, 6.0), (15, 14, 5.0), (15, 19, 3.0), (15, 22, 3.0), (16, 8, 5.0), (16, 10, 4.0),
    (16, 17, 2.0), (16, 18, 3.0), (17, 10, 8.0), (17, 16, 2.0), (17, 19, 2.0), (18, 7, 2.0),
    (18, 16, 3.0), (18, 20, 4.0), (19, 15, 3.0), (19, 17, 2.0), (19, 20, 4.0), (20, 18, 4.0),
    (20, 19, 4.0), (20, 21, 6.0), (20, 22, 5.0), (21, 20, 6.0), (21, 22, 2.0), (21, 24, 3.0),
    (22, 15, 3.0), (22, 20, 5.0), (22, 21, 2.0), (22, 23, 4.0), (23, 14, 4.0), (23, 22, 4.0),
    (23, 24, 2.0), (24, 13, 4.0), (24, 21, 3.0), (24, 23, 2.0),
];

/// The 76 Sioux Falls links as 0-based `(tail, head, mean)`.
pub fn sioux_falls_links() -> Vec<(usize, usize, f64)> {
    SIOUX_FALLS.iter().map(|&(t, h, m)| (t - 1, h - 1, m)).collect()
}

/// Benchmark origin-destination pairs, 0-based (2-15, 4-7, 10-13, 13-19, 17-24 in
/// 1-based numbering).
pub const SFN_OD_PAIRS: [(usize, usize); 5] = [(1, 14), (3, 6), (9, 12), (12, 18), (16, 23)];

/// Sioux Falls with free-flow times as means.
///
/// Each link gets a coefficient of variation drawn from `U(0.1, 0.5)` with
/// `seed`; correlations come from [`generate_covariance`] with `seed + 1`.
pub fn build_sioux_falls(seed: u64) -> Result<StochasticNetwork, NetworkError> {
    let links = sioux_falls_links();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let variances: Vec<f64> = links
        .iter()
        .map(|&(_, _, m)| {
            let cv: f64 = rng.gen_range(0.1..0.5);
            (cv * m).powi(2)
        })
        .collect();
    let draw = generate_covariance(&variances, seed.wrapping_add(1))?;
    let edges = links
        .iter()
        .enumerate()
        .map(|(id, &(tail, head, _))| Edge { id, tail, head })
        .collect();
    let mu = links.iter().map(|&(_, _, m)| m).collect();
    StochasticNetwork::new(24, edges, mu, draw.covariance)
}

/// Two parallel edges from node 0 to node 1 with independent times
/// `N(means[k], variances[k])`: a one-step, two-action routing problem.
pub fn build_bandit(means: [f64; 2], variances: [f64; 2]) -> Result<StochasticNetwork, NetworkError> {
    let edges = vec![
        Edge { id: 0, tail: 0, head: 1 },
        Edge { id: 1, tail: 0, head: 1 },
    ];
    let sigma = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&variances));
    StochasticNetwork::new(2, edges, means.to_vec(), sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::min_eigenvalue;

    #[test]
    fn synthetic_parameters() {
        let net = build_synthetic();
        assert_eq!(net.num_nodes(), 5);
        assert_eq!(net.num_edges(), 5);
        assert_eq!(net.mu(), &[5.0, 100.0, 100.0, 1.0, 1.0]);
        assert_eq!(net.sigma()[(0, 2)], 0.0);
        assert_eq!(net.sigma()[(0, 1)], 0.5);
        assert_eq!(net.sigma()[(1, 2)], -1.0);
        assert!(net.is_deterministic(3) && net.is_deterministic(4));
        assert!(!net.is_deterministic(0));
        assert!(min_eigenvalue(net.sigma()) >= -1e-12);
    }

    #[test]
    fn sioux_falls_shape() {
        let net = build_sioux_falls(2024).unwrap();
        assert_eq!(net.num_nodes(), 24);
        assert_eq!(net.num_edges(), 76);
        for n in 0..24 {
            assert!(!net.out_edges(n).is_empty());
        }
        for (a, b) in SFN_OD_PAIRS {
            assert!(a < 24 && b < 24);
        }
    }
}
