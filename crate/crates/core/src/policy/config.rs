use serde::{Deserialize, Serialize};

use crate::network::StochasticNetwork;

use super::PolicyError;

/// How a realized travel time is turned into the scalar fed to the time
/// embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeNorm {
    /// `t / scale`.
    Scale(f64),
    /// `(t - mean[e]) / sd[e]`; edges with zero spread map to 0.
    PerEdge { mean: Vec<f64>, sd: Vec<f64> },
}

impl TimeNorm {
    /// Standardizes each edge by its own mean and standard deviation.
    pub fn standardized(net: &StochasticNetwork) -> Self {
        TimeNorm::PerEdge {
            mean: net.mu().to_vec(),
            sd: (0..net.num_edges()).map(|e| net.sigma()[(e, e)].sqrt()).collect(),
        }
    }

    pub fn apply(&self, edge: usize, t: f64) -> f64 {
        match self {
            TimeNorm::Scale(s) => t / s,
            TimeNorm::PerEdge { mean, sd } => {
                if sd[edge] > 0.0 {
                    (t - mean[edge]) / sd[edge]
                } else {
                    0.0
                }
            }
        }
    }
}

impl Default for TimeNorm {
    fn default() -> Self {
        TimeNorm::Scale(1.0)
    }
}

/// Which architecture computes the action distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyVariant {
    /// Edge/time cross-attention, encoder and decoder.
    Full,
    /// Encoder reads time and position embeddings only; traversed edge ids
    /// are never embedded.
    NoHistory,
    /// One affine map of the mean-pooled embeddings.
    Linear,
}

impl PolicyVariant {
    pub fn label(self) -> &'static str {
        match self {
            PolicyVariant::Full => "full",
            PolicyVariant::NoHistory => "no_history",
            PolicyVariant::Linear => "linear",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    /// Longest edge history the policy accepts.
    pub max_history_len: usize,
    pub variant: PolicyVariant,
    pub num_edges: usize,
    pub num_nodes: usize,
    /// Hidden width of the feed-forward sublayer as a multiple of `embed_dim`.
    #[serde(default = "default_ffn_mult")]
    pub ffn_mult: usize,
    /// Remaining budget is divided by this before embedding (the OD pair's
    /// least-expected time).
    pub budget_scale: f64,
    #[serde(default)]
    pub time_norm: TimeNorm,
    /// Add the travel-time embedding after every encoder block, or only the
    /// first.
    #[serde(default = "yes")]
    pub residual_every_block: bool,
}

fn default_ffn_mult() -> usize {
    4
}
fn yes() -> bool {
    true
}

impl PolicyConfig {
    /// d=64, 2 layers, 4 heads.
    pub fn desk(num_nodes: usize, num_edges: usize, budget_scale: f64) -> Self {
        Self {
            embed_dim: 64,
            num_layers: 2,
            num_heads: 4,
            max_history_len: 4 * num_nodes,
            variant: PolicyVariant::Full,
            num_edges,
            num_nodes,
            ffn_mult: 4,
            budget_scale,
            time_norm: TimeNorm::default(),
            residual_every_block: true,
        }
    }

    /// d=256, 4 layers, 8 heads.
    pub fn paper_scale(num_nodes: usize, num_edges: usize, budget_scale: f64) -> Self {
        Self {
            embed_dim: 256,
            num_layers: 4,
            num_heads: 8,
            ..Self::desk(num_nodes, num_edges, budget_scale)
        }
    }

    /// Per-edge standardized time inputs taken from `net`.
    pub fn standardized_times(mut self, net: &StochasticNetwork) -> Self {
        self.time_norm = TimeNorm::standardized(net);
        self
    }

    pub fn with_variant(mut self, variant: PolicyVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: String| Err(PolicyError::Config(m));
        if self.embed_dim == 0 || self.num_heads == 0 {
            return bad("embed_dim and num_heads must be positive".into());
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return bad(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.max_history_len == 0 {
            return bad("max_history_len must be at least 1".into());
        }
        if self.num_edges == 0 || self.num_nodes == 0 {
            return bad("vocabularies must be non-empty".into());
        }
        if self.ffn_mult == 0 {
            return bad("ffn_mult must be positive".into());
        }
        if !(self.budget_scale > 0.0 && self.budget_scale.is_finite()) {
            return bad("budget_scale must be positive".into());
        }
        match &self.time_norm {
            TimeNorm::Scale(s) if !(*s > 0.0 && s.is_finite()) => {
                return bad("time scale must be positive".into());
            }
            TimeNorm::PerEdge { mean, sd }
                if mean.len() != self.num_edges
                    || sd.len() != self.num_edges
                    || sd.iter().any(|v| !(*v >= 0.0 && v.is_finite()))
                    || mean.iter().any(|v| !v.is_finite()) =>
            {
                return bad(format!(
                    "per-edge time statistics need {} finite entries with non-negative spread",
                    self.num_edges
                ));
            }
            _ => {}
        }
        Ok(())
    }
}
