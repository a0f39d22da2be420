use std::collections::BTreeMap;

use serde_json::json;

use crate::network::{RealizedNetwork, StochasticNetwork};
use crate::seed::{derive, stream};

use super::{OracleError, OracleMethod, OracleResult};

/// Largest policy table [`exhaustive_policy_value`] will build.
pub const MAX_POLICY_ENTRIES: usize = 1_000_000;

const MAX_NODES: usize = 8;

#[derive(Clone, Copy, Debug)]
pub struct ExhaustiveSpec {
    pub origin: usize,
    pub destination: usize,
    pub budget: f64,
    /// Each realized edge time is observed only through one of this many
    /// equal-width bins spanning its mean ± 4 standard deviations.
    pub bins: usize,
    pub samples: usize,
    pub seed: u64,
    pub max_steps: usize,
}

struct Search<'a> {
    net: &'a StochasticNetwork,
    spec: &'a ExhaustiveSpec,
    draws: Vec<RealizedNetwork>,
    entries: usize,
}

impl Search<'_> {
    fn bin(&self, edge: usize, t: f64) -> usize {
        let sd = self.net.sigma()[(edge, edge)].sqrt();
        if sd == 0.0 || self.spec.bins <= 1 {
            return 0;
        }
        let lo = self.net.mu()[edge] - 4.0 * sd;
        let width = 8.0 * sd / self.spec.bins as f64;
        (((t - lo) / width).floor().max(0.0) as usize).min(self.spec.bins - 1)
    }

    /// Largest number of on-time arrivals among `members`, all of which share
    /// one discretized history ending at `at` after `depth` edges.
    fn best(&mut self, at: usize, depth: usize, members: Vec<(usize, f64)>) -> Result<usize, OracleError> {
        let budget = self.spec.budget;
        if at == self.spec.destination {
            return Ok(members.iter().filter(|(_, el)| *el <= budget).count());
        }
        let members: Vec<_> = members.into_iter().filter(|(_, el)| *el <= budget).collect();
        if members.is_empty() || depth >= self.spec.max_steps {
            return Ok(0);
        }
        let out = self.net.out_edges(at).to_vec();
        if out.len() > 1 {
            self.entries += 1;
            if self.entries > MAX_POLICY_ENTRIES {
                return Err(OracleError::TooLarge {
                    limit: MAX_POLICY_ENTRIES,
                });
            }
        }
        let mut best = 0;
        for e in out {
            let head = self.net.edge(e).head;
            let mut groups: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
            for &(i, el) in &members {
                let t = self.draws[i].time(e);
                groups.entry(self.bin(e, t)).or_default().push((i, el + t));
            }
            let mut total = 0;
            for (_, g) in groups {
                total += self.best(head, depth + 1, g)?;
            }
            best = best.max(total);
        }
        Ok(best)
    }
}

/// Best on-time frequency over every deterministic policy whose choice may
/// depend on the traversed edges and the bins of their realized times. All
/// policies are scored on the same `samples` realizations, so the maximum is
/// found by backward induction over the tree of discretized histories.
pub fn exhaustive_policy_value(
    net: &StochasticNetwork,
    spec: &ExhaustiveSpec,
) -> Result<OracleResult, OracleError> {
    if net.num_nodes() > MAX_NODES {
        return Err(OracleError::Invalid(format!(
            "exhaustive search supports at most {MAX_NODES} nodes, got {}",
            net.num_nodes()
        )));
    }
    if spec.origin >= net.num_nodes() || spec.destination >= net.num_nodes() {
        return Err(OracleError::Invalid("OD pair outside the network".into()));
    }
    if spec.samples == 0 || spec.bins == 0 {
        return Err(OracleError::Invalid("samples and bins must be positive".into()));
    }
    let draws = (0..spec.samples)
        .map(|i| net.sample_realization(derive(spec.seed, stream::REALIZATION, i as u64)))
        .collect();
    let mut search = Search {
        net,
        spec,
        draws,
        entries: 0,
    };
    let members = (0..spec.samples).map(|i| (i, 0.0)).collect();
    let hits = search.best(spec.origin, 0, members)?;
    let n = spec.samples as f64;
    let p = hits as f64 / n;
    Ok(OracleResult {
        value: p,
        method: OracleMethod::Exhaustive,
        error_estimate: (p * (1.0 - p) / n).sqrt(),
        config: json!({
            "origin": spec.origin,
            "destination": spec.destination,
            "budget": spec.budget,
            "bins": spec.bins,
            "samples": spec.samples,
            "seed": spec.seed,
            "max_steps": spec.max_steps,
            "policy_entries": search.entries,
        }),
    })
}
