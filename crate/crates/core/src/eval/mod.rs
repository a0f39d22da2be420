//! On-time probability estimation, experiment sweeps and report files.

mod experiment;
mod io;

pub use experiment::{
    config_hash, run_experiment, Ablation, CellResult, ExperimentConfig, NetworkSource,
    PolicyShape, ReportRow, EvalReport, ReportMeta, RunOptions,
};
pub use io::{emit_curve, emit_report, emit_rows, parse_curve, parse_report, read_report_dir};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, StochasticNetwork};
use crate::policy::RoutingPolicy;
use crate::seed::{derive, stream};
use crate::trainer::{rollout, ActionMode, RolloutSpec, Task, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
}

impl EvalError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        EvalError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Monte Carlo estimate of the on-time arrival probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SotaEstimate {
    pub j: f64,
    /// Binomial standard error `sqrt(J(1-J)/n)`.
    pub stderr: f64,
    /// Sample standard deviation of J across contiguous evaluation chunks.
    pub chunk_std: f64,
    pub samples: usize,
}

/// Fraction of `samples` rollouts that reach the destination within the
/// budget. Realization `i` and its action draws come from `seed` and `i`
/// alone, so different budgets and policies see the same scenarios.
#[allow(clippy::too_many_arguments)]
pub fn sota_probability<P: RoutingPolicy + ?Sized>(
    policy: &P,
    net: &StochasticNetwork,
    task: &Task,
    samples: usize,
    seed: u64,
    max_steps: usize,
    mode: ActionMode,
    chunks: usize,
) -> Result<SotaEstimate, TrainError> {
    if samples == 0 {
        return Err(TrainError::Config("evaluation needs at least one sample".into()));
    }
    let chunks = chunks.clamp(1, samples);
    let spec = RolloutSpec {
        origin: task.origin,
        destination: task.destination,
        budget: task.budget,
        max_steps,
        stop_when_late: true,
        mode,
    };
    let mut hits = vec![false; samples];
    for (i, hit) in hits.iter_mut().enumerate() {
        let realized = net.sample_realization(derive(seed, stream::REALIZATION, i as u64));
        let mut rng = ChaCha8Rng::seed_from_u64(derive(seed, stream::ACTIONS, i as u64));
        *hit = rollout(policy, net, &realized, &spec, &mut rng)?.on_time();
    }
    let n = samples as f64;
    let j = hits.iter().filter(|h| **h).count() as f64 / n;
    let chunk_means: Vec<f64> = (0..chunks)
        .map(|c| {
            let (lo, hi) = (c * samples / chunks, (c + 1) * samples / chunks);
            hits[lo..hi].iter().filter(|h| **h).count() as f64 / (hi - lo) as f64
        })
        .collect();
    let chunk_std = if chunks > 1 {
        let m = chunk_means.iter().sum::<f64>() / chunks as f64;
        let var = chunk_means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (chunks - 1) as f64;
        var.sqrt()
    } else {
        0.0
    };
    Ok(SotaEstimate {
        j,
        stderr: (j * (1.0 - j) / n).sqrt(),
        chunk_std,
        samples,
    })
}
