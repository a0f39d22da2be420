//! Reference values: Gaussian conditioning, the optimal adaptive policy on the
//! five-node network, and exhaustive search over discretized policies on
//! small networks.

mod exhaustive;
mod quadrature;

pub use exhaustive::{exhaustive_policy_value, ExhaustiveSpec, MAX_POLICY_ENTRIES};
pub use quadrature::{
    adaptive_simpson, fixed_path_probability, floor_hit_bound, normal_cdf,
    oracle_policy_rollout_value, solve_budget, synthetic_fixed_branch_value,
    synthetic_upper_bound, Branch, QUADRATURE_TOL,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::NetworkError;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("observed covariance block is singular")]
    Singular,
    #[error("invalid oracle input: {0}")]
    Invalid(String),
    #[error("policy table would exceed {limit} entries")]
    TooLarge { limit: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Law of one coordinate given others: mean `slopes · x_obs + intercept`,
/// variance `residual_variance`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionalGaussian {
    pub slopes: Vec<f64>,
    pub intercept: f64,
    pub residual_variance: f64,
}

impl ConditionalGaussian {
    pub fn mean_given(&self, observed: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(observed).map(|(a, x)| a * x).sum::<f64>()
    }

    pub fn std(&self) -> f64 {
        self.residual_variance.max(0.0).sqrt()
    }
}

/// Conditional law of coordinate `target` given the coordinates in `observed`.
pub fn conditional(
    sigma: &DMatrix<f64>,
    mu: &[f64],
    observed: &[usize],
    target: usize,
) -> Result<ConditionalGaussian, OracleError> {
    let n = mu.len();
    if sigma.shape() != (n, n) || target >= n || observed.iter().any(|&i| i >= n) {
        return Err(OracleError::Invalid("index or shape out of range".into()));
    }
    if observed.is_empty() {
        return Ok(ConditionalGaussian {
            slopes: Vec::new(),
            intercept: mu[target],
            residual_variance: sigma[(target, target)],
        });
    }
    let k = observed.len();
    let soo = DMatrix::from_fn(k, k, |i, j| sigma[(observed[i], observed[j])]);
    let sot = DVector::from_fn(k, |i, _| sigma[(observed[i], target)]);
    let chol = soo.cholesky().ok_or(OracleError::Singular)?;
    let slopes = chol.solve(&sot);
    let intercept = mu[target]
        - slopes
            .iter()
            .zip(observed)
            .map(|(a, &i)| a * mu[i])
            .sum::<f64>();
    let residual_variance = (sigma[(target, target)] - sot.dot(&slopes)).max(0.0);
    Ok(ConditionalGaussian {
        slopes: slopes.iter().copied().collect(),
        intercept,
        residual_variance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    Quadrature,
    MonteCarlo,
    Exhaustive,
    ClosedForm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    pub method: OracleMethod,
    pub error_estimate: f64,
    /// Inputs that produced the value.
    pub config: serde_json::Value,
}
