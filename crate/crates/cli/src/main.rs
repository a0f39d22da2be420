//! `sota`: generate networks, query oracles, train, evaluate and sweep.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use sota_core::eval::{
    emit_curve, emit_report, emit_rows, read_report_dir, run_experiment, sota_probability, Ablation,
    EvalError, ExperimentConfig, PolicyShape, RunOptions,
};
use sota_core::network::{build_sioux_falls, build_synthetic, let_path, NetworkError, StochasticNetwork};
use sota_core::oracle::{oracle_policy_rollout_value, solve_budget, synthetic_upper_bound};
use sota_core::policy::{PolicyError, TransformerPolicy};
use sota_core::trainer::{ActionMode, Estimator, Task, TrainConfig, TrainError, Trainer, TrainerCheckpoint};

#[derive(Parser)]
#[command(name = "sota", version, about = "On-time arrival routing on correlated stochastic networks")]
struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum NetworkKind {
    Synthetic,
    Sfn,
}

#[derive(Subcommand)]
enum Command {
    /// Write a network file.
    Gen {
        #[arg(long, value_enum)]
        network: NetworkKind,
        /// Covariance seed for the generated Sioux Falls parameters.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Upper bound on the synthetic network at a budget, or the budget reaching a target.
    Oracle {
        #[arg(long, required_unless_present = "target", conflicts_with = "target")]
        budget: Option<f64>,
        #[arg(long)]
        target: Option<f64>,
        /// Also run the conditional-sampling Monte Carlo with this many draws.
        #[arg(long, default_value_t = 0)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one policy on one OD pair.
    Train {
        #[arg(long)]
        network: PathBuf,
        /// Zero-based origin and destination, e.g. `0,4`.
        #[arg(long)]
        od: String,
        /// Budget as a multiple of the least-expected travel time.
        #[arg(long, default_value_t = 1.0)]
        budget_mult: f64,
        /// JSON with optional `train`, `policy` and `variant` fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the on-time probability of a trained checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Defaults to `network.json` beside the checkpoint.
        #[arg(long)]
        network: Option<PathBuf>,
        /// Overrides the budget stored in the checkpoint.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Pick the most likely edge instead of sampling.
        #[arg(long)]
        argmax: bool,
    },
    /// Run an experiment sweep from a JSON config.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Cell files, checkpoints and the final report go here.
        #[arg(long, default_value = "ablation")]
        out: PathBuf,
        /// Iterations between per-cell training checkpoints (0 disables them).
        #[arg(long, default_value_t = 50)]
        checkpoint_every: usize,
    },
    /// Collect finished cell results from a sweep directory into one CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Invalid(msg.into()).into())
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    train: TrainConfig,
    policy: PolicyShape,
    variant: Option<Ablation>,
}

#[derive(Serialize)]
struct TrainSummary {
    origin: usize,
    destination: usize,
    t_let: f64,
    budget: f64,
    variant: &'static str,
    iterations: usize,
    j: f64,
    stderr: f64,
    samples: usize,
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var("SOTA_SEED") {
        Ok(v) => match v.trim().parse() {
            Ok(s) => Ok(Some(s)),
            Err(_) => invalid(format!("SOTA_SEED={v:?} is not an unsigned integer")),
        },
        Err(_) => Ok(None),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())).into())
}

fn parse_od(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => invalid(format!("--od {s:?}: expected two node indices like 0,4")),
        },
        _ => invalid(format!("--od {s:?}: expected two node indices like 0,4")),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn gen(kind: NetworkKind, seed: u64, out: &Path) -> Result<()> {
    let net = match kind {
        NetworkKind::Synthetic => build_synthetic(),
        NetworkKind::Sfn => build_sioux_falls(seed_override()?.unwrap_or(seed))?,
    };
    net.save(out)?;
    log::info!("wrote {} nodes, {} edges to {}", net.num_nodes(), net.num_edges(), out.display());
    Ok(())
}

fn oracle(budget: Option<f64>, target: Option<f64>, mc_samples: usize, seed: u64) -> Result<()> {
    let budget = match (budget, target) {
        (Some(t), _) if t.is_finite() => t,
        (Some(t), _) => return invalid(format!("budget {t} must be finite")),
        (None, Some(p)) => match solve_budget(p) {
            Some(t) => t,
            None => return invalid(format!("target {p} is not attainable (must lie strictly in (0, 1))")),
        },
        (None, None) => return invalid("one of --budget or --target is required"),
    };
    let bound = synthetic_upper_bound(budget);
    let mut out = serde_json::json!({ "budget": budget, "quadrature": bound });
    if mc_samples > 0 {
        let seed = seed_override()?.unwrap_or(seed);
        out["monte_carlo"] = serde_json::to_value(oracle_policy_rollout_value(budget, mc_samples, seed))?;
    }
    print_json(&out)
}

fn train(network: &Path, od: &str, budget_mult: f64, config: Option<&Path>, out: &Path) -> Result<()> {
    let net = StochasticNetwork::load(network)?;
    let (origin, destination) = parse_od(od)?;
    if !(budget_mult > 0.0 && budget_mult.is_finite()) {
        return invalid(format!("--budget-mult {budget_mult} must be positive"));
    }
    if origin >= net.num_nodes() || destination >= net.num_nodes() || origin == destination {
        return invalid(format!("--od {od}: need two distinct nodes in 0..{}", net.num_nodes()));
    }
    let file: TrainFile = match config {
        Some(p) => read_json(p)?,
        None => TrainFile::default(),
    };
    let variant = file.variant.unwrap_or(Ablation::Full);
    let mut cfg = file.train;
    cfg.estimator = variant.estimator();
    cfg.baseline &= cfg.estimator == Estimator::Gpg;
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    cfg.validate(&net)?;

    let t_let = let_path(&net, origin, destination)?.expected_time;
    let task = Task {
        origin,
        destination,
        budget: budget_mult * t_let,
    };
    let max_steps = cfg.max_steps_for(&net);
    let policy_cfg = file.policy.config(&net, variant.policy_variant(), t_let, max_steps);
    let mut trainer = Trainer::new(&net, task, policy_cfg, cfg.clone())?;
    trainer.run()?;

    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    trainer.checkpoint().save(&out.join("checkpoint.json"))?;
    emit_curve(trainer.curve(), &out.join("curve.csv"))?;
    net.save(out.join("network.json"))?;
    let est = sota_probability(
        trainer.policy(),
        &net,
        &task,
        cfg.eval_samples,
        cfg.seed,
        max_steps,
        ActionMode::Sample,
        cfg.eval_chunks,
    )?;
    let summary = TrainSummary {
        origin,
        destination,
        t_let,
        budget: task.budget,
        variant: variant.label(),
        iterations: trainer.iteration(),
        j: est.j,
        stderr: est.stderr,
        samples: est.samples,
    };
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", out.join("summary.json").display()))?;
    print_json(&summary)
}

fn eval(
    checkpoint: &Path,
    samples: usize,
    network: Option<&Path>,
    budget: Option<f64>,
    seed: u64,
    argmax: bool,
) -> Result<()> {
    if samples == 0 {
        return invalid("--samples must be at least 1");
    }
    let ckpt = TrainerCheckpoint::load(checkpoint)?;
    let net_path = match network {
        Some(p) => p.to_path_buf(),
        None => checkpoint.with_file_name("network.json"),
    };
    let net = StochasticNetwork::load(&net_path)?;
    let policy = TransformerPolicy::from_checkpoint(&ckpt.policy)?;
    let mut task = ckpt.task;
    if let Some(b) = budget {
        task.budget = b;
    }
    let mode = if argmax { ActionMode::Argmax } else { ActionMode::Sample };
    let seed = seed_override()?.unwrap_or(seed);
    let est = sota_probability(
        &policy,
        &net,
        &task,
        samples,
        seed,
        ckpt.config.max_steps_for(&net),
        mode,
        ckpt.config.eval_chunks,
    )?;
    print_json(&serde_json::json!({ "task": task, "estimate": est }))
}

fn ablate(config: &Path, out: &Path, checkpoint_every: usize) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(config)?;
    if let Some(seed) = seed_override()? {
        cfg.seeds = vec![seed];
    }
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report = run_experiment(
        &cfg,
        &RunOptions {
            work_dir: Some(out.to_path_buf()),
            checkpoint_every,
        },
    )?;
    let path = out.join("report.csv");
    emit_report(&report, &path)?;
    log::info!("{} rows written to {}", report.rows.len(), path.display());
    println!("{}", path.display());
    Ok(())
}

fn report(input: &Path, out: &Path) -> Result<()> {
    let rows = read_report_dir(input)?;
    emit_rows(&rows, out)?;
    log::info!("{} rows from {} written to {}", rows.len(), input.display(), out.display());
    Ok(())
}

fn is_validation(err: &anyhow::Error) -> bool {
    fn network(e: &NetworkError) -> bool {
        !matches!(e, NetworkError::Io { .. })
    }
    fn policy(e: &PolicyError) -> bool {
        matches!(e, PolicyError::Config(_))
    }
    fn train(e: &TrainError) -> bool {
        match e {
            TrainError::Config(_) | TrainError::Checkpoint(_) | TrainError::Json(_) => true,
            TrainError::Network(n) => network(n),
            TrainError::Policy(p) => policy(p),
            _ => false,
        }
    }
    err.chain().any(|cause| {
        if cause.is::<Invalid>() {
            return true;
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::Config(_) | EvalError::Json(_) => true,
                EvalError::Network(n) => network(n),
                EvalError::Train(t) => train(t),
                _ => false,
            };
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return train(e);
        }
        if let Some(e) = cause.downcast_ref::<NetworkError>() {
            return network(e);
        }
        cause.downcast_ref::<PolicyError>().is_some_and(policy)
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { network, seed, out } => gen(network, seed, &out),
        Command::Oracle {
            budget,
            target,
            mc_samples,
            seed,
        } => oracle(budget, target, mc_samples, seed),
        Command::Train {
            network,
            od,
            budget_mult,
            config,
            out,
        } => train(&network, &od, budget_mult, config.as_deref(), &out),
        Command::Eval {
            checkpoint,
            samples,
            network,
            budget,
            seed,
            argmax,
        } => eval(&checkpoint, samples, network.as_deref(), budget, seed, argmax),
        Command::Ablate {
            config,
            out,
            checkpoint_every,
        } => ablate(&config, &out, checkpoint_every),
        Command::Report { input, out } => report(&input, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_validation(&err) { 2 } else { 1 })
        }
    }
}
