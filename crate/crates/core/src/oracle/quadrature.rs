use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::network::{build_synthetic, StochasticNetwork, TIME_FLOOR};

use super::{conditional, ConditionalGaussian, OracleMethod, OracleResult};

/// Adaptive Simpson refinement stops once successive estimates differ by less
/// than this.
pub const QUADRATURE_TOL: f64 = 1e-7;

const MAX_DEPTH: u32 = 40;

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(N(mean, sd²) <= x)`, a step function when `sd == 0`.
fn prob_below(x: f64, mean: f64, sd: f64) -> f64 {
    if sd > 0.0 {
        normal_cdf((x - mean) / sd)
    } else if mean <= x {
        1.0
    } else {
        0.0
    }
}

/// Integral of `f` over `[a, b]` and an estimate of its absolute error.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> (f64, f64) {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        return (left + right + diff / 15.0, diff.abs() / 15.0);
    }
    let (l, el) = simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1);
    let (r, er) = simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
    (l + r, el + er)
}

/// The two routes out of B on the five-node network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// B→C→E
    Upper,
    /// B→D→E
    Lower,
}

struct Diamond {
    x1_mean: f64,
    x1_sd: f64,
    upper: ConditionalGaussian,
    lower: ConditionalGaussian,
    upper_tail: f64,
    lower_tail: f64,
}

impl Diamond {
    fn new() -> Self {
        let net = build_synthetic();
        let (mu, sigma) = (net.mu(), net.sigma());
        Self {
            x1_mean: mu[0],
            x1_sd: sigma[(0, 0)].sqrt(),
            upper: conditional(sigma, mu, &[0], 1).expect("AB variance is positive"),
            lower: conditional(sigma, mu, &[0], 2).expect("AB variance is positive"),
            upper_tail: mu[3],
            lower_tail: mu[4],
        }
    }

    fn branch_prob(&self, branch: Branch, x1: f64, budget: f64) -> f64 {
        let (c, tail) = match branch {
            Branch::Upper => (&self.upper, self.upper_tail),
            Branch::Lower => (&self.lower, self.lower_tail),
        };
        prob_below(budget - tail - x1, c.mean_given(&[x1]), c.std())
    }

    fn best_branch(&self, x1: f64, budget: f64) -> Branch {
        if self.branch_prob(Branch::Upper, x1, budget) >= self.branch_prob(Branch::Lower, x1, budget)
        {
            Branch::Upper
        } else {
            Branch::Lower
        }
    }

    /// Integrates `g` against the AB density, split at every `breaks` point.
    fn integrate<G: Fn(f64) -> f64>(&self, g: G, breaks: &[f64]) -> (f64, f64) {
        let (m, s) = (self.x1_mean, self.x1_sd);
        let (a, b) = (m - 8.0 * s, m + 8.0 * s);
        let f = |x: f64| normal_pdf((x - m) / s) / s * g(x);
        let mut knots = vec![a];
        knots.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
        knots.push(b);
        let tol = QUADRATURE_TOL / (knots.len() - 1) as f64;
        knots.windows(2).fold((0.0, 0.0), |(v, e), w| {
            let (pv, pe) = adaptive_simpson(&f, w[0], w[1], tol);
            (v + pv, e + pe)
        })
    }

    /// AB times at which the better branch changes.
    fn switch_points(&self, budget: f64) -> Vec<f64> {
        let (m, s) = (self.x1_mean, self.x1_sd);
        let gap = |x: f64| {
            self.branch_prob(Branch::Upper, x, budget) - self.branch_prob(Branch::Lower, x, budget)
        };
        let n = 256;
        let grid: Vec<f64> = (0..=n).map(|i| m - 8.0 * s + 16.0 * s * i as f64 / n as f64).collect();
        let mut out = Vec::new();
        for w in grid.windows(2) {
            let (mut lo, mut hi) = (w[0], w[1]);
            let (glo, ghi) = (gap(lo), gap(hi));
            if glo == 0.0 || glo.signum() == ghi.signum() {
                continue;
            }
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if gap(mid).signum() == glo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out
    }
}

/// On-time probability of the best adaptive policy on the five-node network:
/// observe the AB time at B, then take whichever branch has the larger
/// conditional chance of arriving within `budget`.
pub fn synthetic_upper_bound(budget: f64) -> OracleResult {
    let d = Diamond::new();
    let breaks = d.switch_points(budget);
    let (value, err) = d.integrate(
        |x| {
            d.branch_prob(Branch::Upper, x, budget)
                .max(d.branch_prob(Branch::Lower, x, budget))
        },
        &breaks,
    );
    OracleResult {
        value: value.clamp(0.0, 1.0),
        method: OracleMethod::Quadrature,
        error_estimate: err,
        config: json!({ "budget": budget, "tolerance": QUADRATURE_TOL }),
    }
}

/// Budget at which [`synthetic_upper_bound`] equals `target`, by bisection.
pub fn solve_budget(target: f64) -> Option<f64> {
    if !(target > 0.0 && target < 1.0) {
        return None;
    }
    let value = |t: f64| synthetic_upper_bound(t).value;
    let (mut lo, mut hi) = (0.0, 200.0);
    while value(hi) < target {
        hi *= 2.0;
        if hi > 1e9 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if value(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Monte Carlo version of the optimal policy: draw the AB time, pick the
/// better branch, draw that branch's time from its conditional law.
pub fn oracle_policy_rollout_value(budget: f64, num_samples: usize, seed: u64) -> OracleResult {
    monte_carlo(budget, num_samples, seed, None)
}

/// Same harness with the branch fixed regardless of the AB time.
pub fn synthetic_fixed_branch_value(
    budget: f64,
    branch: Branch,
    num_samples: usize,
    seed: u64,
) -> OracleResult {
    monte_carlo(budget, num_samples, seed, Some(branch))
}

fn monte_carlo(budget: f64, num_samples: usize, seed: u64, fixed: Option<Branch>) -> OracleResult {
    let d = Diamond::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = num_samples.max(1);
    let mut hits = 0usize;
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        let x1 = d.x1_mean + d.x1_sd * z1;
        let branch = fixed.unwrap_or_else(|| d.best_branch(x1, budget));
        let (c, tail) = match branch {
            Branch::Upper => (&d.upper, d.upper_tail),
            Branch::Lower => (&d.lower, d.lower_tail),
        };
        let x = c.mean_given(&[x1]) + c.std() * z2;
        if x1 + x + tail <= budget {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    OracleResult {
        value: p,
        method: OracleMethod::MonteCarlo,
        error_estimate: (p * (1.0 - p) / n as f64).sqrt(),
        config: json!({
            "budget": budget,
            "num_samples": n,
            "seed": seed,
            "branch": fixed,
        }),
    }
}

/// `P(sum of the edge times on `edges` <= budget)` for the unclamped law.
pub fn fixed_path_probability(net: &StochasticNetwork, edges: &[usize], budget: f64) -> OracleResult {
    let mean: f64 = edges.iter().map(|&e| net.mu()[e]).sum();
    let var: f64 = edges
        .iter()
        .flat_map(|&i| edges.iter().map(move |&j| (i, j)))
        .map(|(i, j)| net.sigma()[(i, j)])
        .sum();
    OracleResult {
        value: prob_below(budget, mean, var.max(0.0).sqrt()),
        method: OracleMethod::ClosedForm,
        error_estimate: 0.0,
        config: json!({ "edges": edges, "budget": budget, "mean": mean, "variance": var }),
    }
}

/// Union bound on the chance that any edge of one draw falls below the
/// sampling floor.
pub fn floor_hit_bound(net: &StochasticNetwork) -> f64 {
    (0..net.num_edges())
        .filter(|&e| !net.is_deterministic(e))
        .map(|e| {
            let sd = net.sigma()[(e, e)].sqrt();
            normal_cdf((TIME_FLOOR - net.mu()[e]) / sd)
        })
        .sum()
}
