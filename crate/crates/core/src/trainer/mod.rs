//! Rollouts, score-function gradient estimators and the training loop.

mod estimator;
mod rollout;

pub use estimator::{
    gpg_gradient, score_gradient, surrogate_gradient, vanilla_pg_gradient, Estimator, RolloutBatch,
};
pub use rollout::{rollout, ActionMode, RolloutSpec, Step, Trajectory};

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::sota_probability;
use crate::network::{NetworkError, StochasticNetwork};
use crate::policy::{PolicyCheckpoint, PolicyConfig, PolicyError, TransformerPolicy};
use crate::seed::{derive, stream};
use crate::tensor::TensorError;

pub const TRAINER_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("node {node} has no outgoing edges")]
    DeadEnd { node: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
}

/// Origin, destination and time budget of one routing task.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub origin: usize,
    pub destination: usize,
    pub budget: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Realized networks sampled per iteration.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Step cap per rollout; `None` means four times the node count.
    pub max_steps: Option<usize>,
    pub estimator: Estimator,
    /// Held-out evaluation every this many iterations; 0 disables it.
    pub eval_every: usize,
    pub eval_samples: usize,
    pub eval_chunks: usize,
    pub rollouts_per_network: usize,
    /// Subtract the batch-mean weight.
    pub baseline: bool,
    /// Draw realizations from a fixed pool of this many with replacement
    /// instead of fresh samples.
    pub pool_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 200,
            batch_size: 100,
            learning_rate: 1e-3,
            seed: 0,
            max_steps: None,
            estimator: Estimator::Gpg,
            eval_every: 5,
            eval_samples: 2000,
            eval_chunks: 10,
            rollouts_per_network: 1,
            baseline: false,
            pool_size: None,
        }
    }
}

impl TrainConfig {
    pub fn max_steps_for(&self, net: &StochasticNetwork) -> usize {
        self.max_steps.unwrap_or(4 * net.num_nodes())
    }

    pub fn validate(&self, net: &StochasticNetwork) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 || self.rollouts_per_network == 0 {
            return bad("batch_size and rollouts_per_network must be at least 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        let diameter = net.hop_diameter();
        if self.max_steps_for(net) < diameter {
            return bad(format!(
                "max_steps {} is below the network diameter {diameter}",
                self.max_steps_for(net)
            ));
        }
        if self.eval_every > 0 && (self.eval_samples == 0 || self.eval_chunks == 0) {
            return bad("evaluation needs at least one sample and one chunk".into());
        }
        if self.pool_size == Some(0) {
            return bad("pool_size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub j_mean: f64,
    pub j_std: f64,
    pub wallclock_s: f64,
}

/// Held-out on-time probability recorded during training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub points: Vec<CurvePoint>,
}

impl ConvergenceCurve {
    /// Same iterations and bit-identical estimates; wall-clock times ignored.
    pub fn same_estimates(&self, other: &ConvergenceCurve) -> bool {
        self.points.len() == other.points.len()
            && self.points.iter().zip(&other.points).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.j_mean.to_bits() == b.j_mean.to_bits()
                    && a.j_std.to_bits() == b.j_std.to_bits()
            })
    }
}

/// Everything needed to continue training exactly where it stopped.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainerCheckpoint {
    pub version: u32,
    pub task: Task,
    pub config: TrainConfig,
    pub policy: PolicyCheckpoint,
    pub rng: ChaCha8Rng,
    pub iteration: usize,
    pub curve: ConvergenceCurve,
    pub wallclock_s: f64,
}

impl TrainerCheckpoint {
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|source| TrainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.version != TRAINER_CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "version {} is not supported (expected {TRAINER_CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }
}

/// Stateful training loop over one network and task.
pub struct Trainer<'n> {
    net: &'n StochasticNetwork,
    task: Task,
    config: TrainConfig,
    policy: TransformerPolicy,
    rng: ChaCha8Rng,
    iteration: usize,
    curve: ConvergenceCurve,
    clock: Instant,
    wallclock_offset: f64,
}

impl<'n> Trainer<'n> {
    /// Fresh policy initialized from the training seed.
    pub fn new(
        net: &'n StochasticNetwork,
        task: Task,
        policy_config: PolicyConfig,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        let policy = TransformerPolicy::new(policy_config, derive(config.seed, stream::INIT, 0))?;
        Self::with_policy(net, task, policy, config)
    }

    pub fn with_policy(
        net: &'n StochasticNetwork,
        task: Task,
        policy: TransformerPolicy,
        config: TrainConfig,
    ) -> Result<Self, TrainError> {
        config.validate(net)?;
        check_task(net, &task)?;
        check_policy(net, &policy)?;
        let rng = ChaCha8Rng::seed_from_u64(derive(config.seed, stream::TRAIN, 0));
        Ok(Self {
            net,
            task,
            config,
            policy,
            rng,
            iteration: 0,
            curve: ConvergenceCurve::default(),
            clock: Instant::now(),
            wallclock_offset: 0.0,
        })
    }

    pub fn resume(net: &'n StochasticNetwork, ckpt: &TrainerCheckpoint) -> Result<Self, TrainError> {
        if ckpt.version != TRAINER_CHECKPOINT_VERSION {
            return Err(TrainError::Checkpoint(format!(
                "version {} is not supported",
                ckpt.version
            )));
        }
        let policy = TransformerPolicy::from_checkpoint(&ckpt.policy)?;
        check_policy(net, &policy)?;
        check_task(net, &ckpt.task)?;
        ckpt.config.validate(net)?;
        Ok(Self {
            net,
            task: ckpt.task,
            config: ckpt.config.clone(),
            policy,
            rng: ckpt.rng.clone(),
            iteration: ckpt.iteration,
            curve: ckpt.curve.clone(),
            clock: Instant::now(),
            wallclock_offset: ckpt.wallclock_s,
        })
    }

    pub fn checkpoint(&self) -> TrainerCheckpoint {
        TrainerCheckpoint {
            version: TRAINER_CHECKPOINT_VERSION,
            task: self.task,
            config: self.config.clone(),
            policy: self.policy.to_checkpoint(),
            rng: self.rng.clone(),
            iteration: self.iteration,
            curve: self.curve.clone(),
            wallclock_s: self.wallclock(),
        }
    }

    pub fn policy(&self) -> &TransformerPolicy {
        &self.policy
    }

    pub fn into_policy(self) -> TransformerPolicy {
        self.policy
    }

    pub fn curve(&self) -> &ConvergenceCurve {
        &self.curve
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn is_done(&self) -> bool {
        self.iteration >= self.config.iterations
    }

    fn wallclock(&self) -> f64 {
        self.wallclock_offset + self.clock.elapsed().as_secs_f64()
    }

    fn rollout_spec(&self) -> RolloutSpec {
        RolloutSpec {
            origin: self.task.origin,
            destination: self.task.destination,
            budget: self.task.budget,
            max_steps: self.config.max_steps_for(self.net),
            stop_when_late: self.config.estimator == Estimator::Gpg,
            mode: ActionMode::Sample,
        }
    }

    /// Samples `batch_size` realized networks and rolls out on each.
    pub fn sample_batch(&mut self) -> Result<RolloutBatch, TrainError> {
        let spec = self.rollout_spec();
        let cfg = &self.config;
        let mut trajectories = Vec::with_capacity(cfg.batch_size * cfg.rollouts_per_network);
        let mut networks = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let seed = match cfg.pool_size {
                Some(n) => derive(cfg.seed, stream::POOL, self.rng.gen_range(0..n as u64)),
                None => self.rng.gen::<u64>(),
            };
            let realized = self.net.sample_realization(seed);
            for _ in 0..cfg.rollouts_per_network {
                trajectories.push(rollout(
                    &self.policy,
                    self.net,
                    &realized,
                    &spec,
                    &mut self.rng,
                )?);
            }
            networks.push(realized);
        }
        Ok(RolloutBatch {
            trajectories,
            budget: self.task.budget,
            networks,
        })
    }

    /// One iteration: batch, gradient, Adam step, and evaluation when due.
    pub fn step(&mut self) -> Result<(), TrainError> {
        let batch = self.sample_batch()?;
        let grads = surrogate_gradient(
            &self.policy,
            self.net,
            &batch,
            self.config.estimator,
            self.config.baseline,
        )?;
        let store = self.policy.store_mut();
        store.zero_grad();
        store.accumulate(&grads);
        store.adam_step(self.config.learning_rate);
        self.iteration += 1;
        let every = self.config.eval_every;
        if every > 0 && (self.iteration.is_multiple_of(every) || self.iteration == self.config.iterations) {
            self.evaluate_into_curve()?;
        }
        Ok(())
    }

    fn evaluate_into_curve(&mut self) -> Result<(), TrainError> {
        let est = sota_probability(
            &self.policy,
            self.net,
            &self.task,
            self.config.eval_samples,
            derive(self.config.seed, stream::EVAL, 0),
            self.config.max_steps_for(self.net),
            ActionMode::Sample,
            self.config.eval_chunks,
        )?;
        self.curve.points.push(CurvePoint {
            iteration: self.iteration,
            j_mean: est.j,
            j_std: est.chunk_std,
            wallclock_s: self.wallclock(),
        });
        Ok(())
    }

    /// Runs up to `n` more iterations, stopping at the configured total.
    pub fn run_for(&mut self, n: usize) -> Result<(), TrainError> {
        for _ in 0..n {
            if self.is_done() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<(), TrainError> {
        self.run_for(usize::MAX)
    }
}

/// Trains a fresh policy for `config.iterations` iterations.
pub fn train(
    net: &StochasticNetwork,
    task: Task,
    policy_config: PolicyConfig,
    config: TrainConfig,
) -> Result<(TransformerPolicy, ConvergenceCurve), TrainError> {
    let mut trainer = Trainer::new(net, task, policy_config, config)?;
    trainer.run()?;
    let curve = trainer.curve.clone();
    Ok((trainer.into_policy(), curve))
}

fn check_task(net: &StochasticNetwork, task: &Task) -> Result<(), TrainError> {
    let n = net.num_nodes();
    if task.origin >= n || task.destination >= n {
        return Err(TrainError::Config(format!(
            "OD pair ({}, {}) is outside 0..{n}",
            task.origin, task.destination
        )));
    }
    if net.hop_distances(task.origin)[task.destination].is_none() {
        return Err(NetworkError::Unreachable {
            origin: task.origin,
            destination: task.destination,
        }
        .into());
    }
    if net.out_edges(task.origin).is_empty() && task.origin != task.destination {
        return Err(TrainError::DeadEnd { node: task.origin });
    }
    if !task.budget.is_finite() {
        return Err(TrainError::Config(format!("budget {} is not finite", task.budget)));
    }
    Ok(())
}

fn check_policy(net: &StochasticNetwork, policy: &TransformerPolicy) -> Result<(), TrainError> {
    let cfg = policy.config();
    if cfg.num_edges != net.num_edges() || cfg.num_nodes != net.num_nodes() {
        return Err(TrainError::Checkpoint(format!(
            "policy vocabulary is {} nodes / {} edges, network has {} / {}",
            cfg.num_nodes,
            cfg.num_edges,
            net.num_nodes(),
            net.num_edges()
        )));
    }
    Ok(())
}
