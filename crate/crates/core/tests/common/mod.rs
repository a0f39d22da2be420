#![allow(dead_code)]

use nalgebra::DMatrix;
use sota_core::network::{Edge, StochasticNetwork};

/// Smallest eigenvalue by cyclic Jacobi rotations.
pub fn jacobi_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut a = m.clone();
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).fold(f64::INFINITY, f64::min)
}

/// Network over `num_nodes` nodes with the given `(tail, head, mean)` edges
/// and unit independent variances.
pub fn graph(num_nodes: usize, arcs: &[(usize, usize, f64)]) -> StochasticNetwork {
    let edges = arcs
        .iter()
        .enumerate()
        .map(|(id, &(tail, head, _))| Edge { id, tail, head })
        .collect();
    let mu = arcs.iter().map(|a| a.2).collect();
    StochasticNetwork::new(num_nodes, edges, mu, DMatrix::identity(arcs.len(), arcs.len()))
        .expect("generated graph is valid")
}

/// Cheapest simple path by expected time, ties broken by the smallest node
/// sequence. Returns `(cost, nodes)`.
pub fn best_simple_path(net: &StochasticNetwork, origin: usize, dest: usize) -> Option<(f64, Vec<usize>)> {
    fn walk(
        net: &StochasticNetwork,
        at: usize,
        dest: usize,
        cost: f64,
        nodes: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if at == dest {
            let better = match best {
                None => true,
                Some((c, n)) => cost < *c || (cost == *c && nodes < n),
            };
            if better {
                *best = Some((cost, nodes.clone()));
            }
            return;
        }
        for &e in net.out_edges(at) {
            let head = net.edge(e).head;
            if nodes.contains(&head) {
                continue;
            }
            nodes.push(head);
            walk(net, head, dest, cost + net.mu()[e], nodes, best);
            nodes.pop();
        }
    }
    let mut best = None;
    walk(net, origin, dest, 0.0, &mut vec![origin], &mut best);
    best
}
