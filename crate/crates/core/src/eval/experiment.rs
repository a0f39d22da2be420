use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::network::{build_sioux_falls, build_synthetic, let_path, StochasticNetwork};
use crate::policy::{PolicyConfig, PolicyVariant};
use crate::seed::{derive, stream};
use crate::trainer::{
    ActionMode, ConvergenceCurve, Estimator, Task, TrainConfig, Trainer, TrainerCheckpoint,
};

use super::{emit_curve, emit_report, sota_probability, EvalError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSource {
    Synthetic,
    /// Generated Sioux Falls parameters.
    SiouxFalls { seed: u64 },
    File { path: PathBuf },
}

impl NetworkSource {
    pub fn load(&self) -> Result<StochasticNetwork, EvalError> {
        Ok(match self {
            NetworkSource::Synthetic => build_synthetic(),
            NetworkSource::SiouxFalls { seed } => build_sioux_falls(*seed)?,
            NetworkSource::File { path } => StochasticNetwork::load(path)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            NetworkSource::Synthetic => "synthetic".into(),
            NetworkSource::SiouxFalls { seed } => format!("sioux_falls(generated, seed {seed})"),
            NetworkSource::File { path } => format!("file:{}", path.display()),
        }
    }
}

/// A policy architecture paired with a gradient estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    NoHistory,
    Linear,
    VanillaPg,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Full,
        Ablation::NoHistory,
        Ablation::Linear,
        Ablation::VanillaPg,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoHistory => "no_history",
            Ablation::Linear => "linear",
            Ablation::VanillaPg => "vanilla_pg",
        }
    }

    pub fn policy_variant(self) -> PolicyVariant {
        match self {
            Ablation::NoHistory => PolicyVariant::NoHistory,
            Ablation::Linear => PolicyVariant::Linear,
            Ablation::Full | Ablation::VanillaPg => PolicyVariant::Full,
        }
    }

    pub fn estimator(self) -> Estimator {
        match self {
            Ablation::VanillaPg => Estimator::VanillaPg,
            _ => Estimator::Gpg,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub ffn_mult: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            num_layers: 2,
            num_heads: 4,
            ffn_mult: 4,
        }
    }
}

impl PolicyShape {
    /// Policy for `net` with per-edge standardized time inputs.
    pub fn config(
        &self,
        net: &StochasticNetwork,
        variant: PolicyVariant,
        budget_scale: f64,
        max_history_len: usize,
    ) -> PolicyConfig {
        PolicyConfig {
            embed_dim: self.embed_dim,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            ffn_mult: self.ffn_mult,
            max_history_len,
            ..PolicyConfig::desk(net.num_nodes(), net.num_edges(), budget_scale)
        }
        .with_variant(variant)
        .standardized_times(net)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub network: NetworkSource,
    /// Zero-based (origin, destination) node pairs.
    pub od_pairs: Vec<(usize, usize)>,
    /// Budgets as multiples of the least-expected travel time.
    pub budget_multipliers: Vec<f64>,
    /// Shared training settings. `baseline` is honoured by the GPG variants
    /// only; vanilla PG always trains on raw returns.
    pub train: TrainConfig,
    #[serde(default)]
    pub policy: PolicyShape,
    pub eval_samples: usize,
    #[serde(default)]
    pub eval_seed: u64,
    pub seeds: Vec<u64>,
    pub variants: Vec<Ablation>,
    /// Train one policy per cell at this multiplier and evaluate it at every
    /// budget; `None` trains separately for each budget.
    #[serde(default)]
    pub train_multiplier: Option<f64>,
}

impl ExperimentConfig {
    pub fn validate(&self, net: &StochasticNetwork) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.od_pairs.is_empty() || self.seeds.is_empty() || self.variants.is_empty() {
            return bad("od_pairs, seeds and variants must be non-empty".into());
        }
        if self.budget_multipliers.is_empty() {
            return bad("at least one budget multiplier is required".into());
        }
        let positive = |m: f64| m > 0.0 && m.is_finite();
        if let Some(m) = self
            .budget_multipliers
            .iter()
            .chain(&self.train_multiplier)
            .find(|m| !positive(**m))
        {
            return bad(format!("budget multiplier {m} must be positive"));
        }
        if self.eval_samples == 0 {
            return bad("eval_samples must be at least 1".into());
        }
        for &(o, d) in &self.od_pairs {
            if o >= net.num_nodes() || d >= net.num_nodes() {
                return bad(format!("OD pair ({o}, {d}) is outside 0..{}", net.num_nodes()));
            }
            if o == d {
                return bad(format!("OD pair ({o}, {d}) has identical endpoints"));
            }
        }
        self.train.validate(net)?;
        Ok(())
    }
}

/// Hex SHA-256 of the canonical JSON form of `config`.
pub fn config_hash(config: &ExperimentConfig) -> String {
    let text = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub origin: usize,
    pub destination: usize,
    pub multiplier: f64,
    pub budget: f64,
    pub t_let: f64,
    pub variant: String,
    pub seed: u64,
    pub j: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub config_hash: String,
    pub network: String,
    pub started_unix: u64,
    pub finished_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub meta: ReportMeta,
    pub config: ExperimentConfig,
}

/// Finished rows of one (OD, variant, seed[, budget]) training unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
    pub curve: ConvergenceCurve,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Per-cell results, curves and checkpoints go here; finished cells are
    /// reused on rerun.
    pub work_dir: Option<PathBuf>,
    /// Trainer checkpoint cadence inside a cell; 0 disables it.
    pub checkpoint_every: usize,
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

struct Cell {
    od_index: usize,
    origin: usize,
    destination: usize,
    variant: Ablation,
    seed: u64,
    train_multiplier: f64,
    eval_multipliers: Vec<f64>,
    name: String,
}

fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for (od_index, &(origin, destination)) in config.od_pairs.iter().enumerate() {
        for &variant in &config.variants {
            for &seed in &config.seeds {
                let base = format!("cell-{origin}-{destination}-{}-{seed}", variant.label());
                match config.train_multiplier {
                    Some(m) => out.push(Cell {
                        od_index,
                        origin,
                        destination,
                        variant,
                        seed,
                        train_multiplier: m,
                        eval_multipliers: config.budget_multipliers.clone(),
                        name: base,
                    }),
                    None => {
                        for (k, &m) in config.budget_multipliers.iter().enumerate() {
                            out.push(Cell {
                                od_index,
                                origin,
                                destination,
                                variant,
                                seed,
                                train_multiplier: m,
                                eval_multipliers: vec![m],
                                name: format!("{base}-m{k}"),
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Trains and evaluates every cell of the sweep. With a work directory,
/// finished cells are skipped on rerun and a partial report is written if a
/// cell fails.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<EvalReport, EvalError> {
    let net = config.network.load()?;
    config.validate(&net)?;
    let hash = config_hash(config);
    let started_unix = unix_now();
    if let Some(dir) = &opts.work_dir {
        std::fs::create_dir_all(dir).map_err(|e| EvalError::io(dir, e))?;
    }
    let mut rows = Vec::new();
    let meta = |finished_unix| ReportMeta {
        config_hash: hash.clone(),
        network: config.network.label(),
        started_unix,
        finished_unix,
    };
    for cell in cells(config) {
        match run_cell(config, &net, &cell, &hash, opts) {
            Ok(mut r) => rows.append(&mut r),
            Err(err) => {
                if let Some(dir) = &opts.work_dir {
                    let partial = EvalReport {
                        rows,
                        meta: meta(unix_now()),
                        config: config.clone(),
                    };
                    let _ = emit_report(&partial, &dir.join("partial-report.csv"));
                }
                return Err(err);
            }
        }
    }
    Ok(EvalReport {
        rows,
        meta: meta(unix_now()),
        config: config.clone(),
    })
}

fn run_cell(
    config: &ExperimentConfig,
    net: &StochasticNetwork,
    cell: &Cell,
    hash: &str,
    opts: &RunOptions,
) -> Result<Vec<ReportRow>, EvalError> {
    let paths = opts.work_dir.as_ref().map(|dir| CellPaths::new(dir, &cell.name));
    if let Some(p) = &paths {
        if let Some(done) = read_cell(&p.result)? {
            if done.config_hash == hash {
                log::info!("{}: reusing finished cell", cell.name);
                return Ok(done.rows);
            }
        }
    }
    let t_let = let_path(net, cell.origin, cell.destination)?.expected_time;
    let mut train = config.train.clone();
    train.seed = derive(cell.seed, stream::CELL, cell.od_index as u64);
    train.estimator = cell.variant.estimator();
    train.baseline &= train.estimator == Estimator::Gpg;
    let task = Task {
        origin: cell.origin,
        destination: cell.destination,
        budget: cell.train_multiplier * t_let,
    };
    let max_steps = train.max_steps_for(net);
    let policy_cfg = config
        .policy
        .config(net, cell.variant.policy_variant(), t_let, max_steps);

    let resumed = match &paths {
        Some(p) if p.checkpoint.exists() => {
            let ckpt = TrainerCheckpoint::load(&p.checkpoint)?;
            (ckpt.config == train && ckpt.task == task && ckpt.policy.config == policy_cfg)
                .then_some(ckpt)
        }
        _ => None,
    };
    let mut trainer = match resumed {
        Some(ckpt) => Trainer::resume(net, &ckpt)?,
        None => Trainer::new(net, task, policy_cfg, train)?,
    };
    while !trainer.is_done() {
        let chunk = if opts.checkpoint_every > 0 {
            opts.checkpoint_every
        } else {
            usize::MAX
        };
        trainer.run_for(chunk)?;
        if let (Some(p), true) = (&paths, opts.checkpoint_every > 0) {
            trainer.checkpoint().save(&p.checkpoint)?;
        }
    }
    log::info!(
        "{}: trained {} iterations at budget {:.4}",
        cell.name,
        trainer.iteration(),
        task.budget
    );

    let eval_seed = derive(config.eval_seed, stream::EVAL, cell.od_index as u64);
    let mut rows = Vec::new();
    for &m in &cell.eval_multipliers {
        let eval_task = Task {
            budget: m * t_let,
            ..task
        };
        let est = sota_probability(
            trainer.policy(),
            net,
            &eval_task,
            config.eval_samples,
            eval_seed,
            max_steps,
            ActionMode::Sample,
            1,
        )?;
        rows.push(ReportRow {
            origin: cell.origin,
            destination: cell.destination,
            multiplier: m,
            budget: eval_task.budget,
            t_let,
            variant: cell.variant.label().to_string(),
            seed: cell.seed,
            j: est.j,
            stderr: est.stderr,
            samples: est.samples,
        });
    }
    if let Some(p) = &paths {
        let result = CellResult {
            config_hash: hash.to_string(),
            rows: rows.clone(),
            curve: trainer.curve().clone(),
        };
        let text = serde_json::to_string_pretty(&result)?;
        std::fs::write(&p.result, text).map_err(|e| EvalError::io(&p.result, e))?;
        emit_curve(trainer.curve(), &p.curve)?;
        if p.checkpoint.exists() {
            std::fs::remove_file(&p.checkpoint).map_err(|e| EvalError::io(&p.checkpoint, e))?;
        }
    }
    Ok(rows)
}

struct CellPaths {
    result: PathBuf,
    curve: PathBuf,
    checkpoint: PathBuf,
}

impl CellPaths {
    fn new(dir: &Path, name: &str) -> Self {
        Self {
            result: dir.join(format!("{name}.json")),
            curve: dir.join(format!("{name}-curve.csv")),
            checkpoint: dir.join(format!("{name}-checkpoint.json")),
        }
    }
}

pub(crate) fn read_cell(path: &Path) -> Result<Option<CellResult>, EvalError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::io(path, e))?;
    Ok(Some(serde_json::from_str(&text)?))
}
