use std::path::Path;
use std::process::{Command, Output};

fn sota(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sota"))
        .args(args)
        .env_remove("SOTA_SEED")
        .output()
        .expect("binary runs")
}

fn sota_seeded(args: &[&str], seed: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sota"))
        .args(args)
        .env("SOTA_SEED", seed)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY_TRAIN: &str = r#"{
  "train": {"iterations": 3, "batch_size": 4, "eval_every": 0, "eval_samples": 50, "eval_chunks": 5},
  "policy": {"embed_dim": 4, "num_layers": 1, "num_heads": 1, "ffn_mult": 1}
}"#;

#[test]
fn gen_writes_loadable_networks() {
    let dir = tempfile::tempdir().unwrap();
    let syn = dir.path().join("syn.json");
    assert!(sota(&["gen", "--network", "synthetic", "--out", s(&syn)]).status.success());
    let net = sota_core::network::StochasticNetwork::load(&syn).unwrap();
    assert_eq!((net.num_nodes(), net.num_edges()), (5, 5));

    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(sota(&["gen", "--network", "sfn", "--seed", "3", "--out", s(&a)]).status.success());
    assert!(sota_seeded(&["gen", "--network", "sfn", "--out", s(&b)], "3").status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let net = sota_core::network::StochasticNetwork::load(&a).unwrap();
    assert_eq!((net.num_nodes(), net.num_edges()), (24, 76));
}

#[test]
fn oracle_budget_and_target() {
    let v = json(&sota(&["oracle", "--target", "0.537"]));
    assert!((v["budget"].as_f64().unwrap() - 106.0).abs() < 1e-3);
    assert!((v["quadrature"]["value"].as_f64().unwrap() - 0.537).abs() < 1e-7);

    let v = json(&sota(&["oracle", "--budget", "106", "--mc-samples", "2000"]));
    let q = v["quadrature"]["value"].as_f64().unwrap();
    let mc = v["monte_carlo"]["value"].as_f64().unwrap();
    let se = v["monte_carlo"]["error_estimate"].as_f64().unwrap();
    assert!((q - mc).abs() < 4.0 * se);
}

#[test]
fn bad_arguments_exit_with_two() {
    assert_eq!(sota(&["oracle"]).status.code(), Some(2));
    assert_eq!(sota(&["oracle", "--target", "1.5"]).status.code(), Some(2));
    assert_eq!(sota_seeded(&["oracle", "--target", "0.5", "--mc-samples", "5"], "x").status.code(), Some(2));
    assert_eq!(sota(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn train_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    let cfg = dir.path().join("train.json");
    let out = dir.path().join("run");
    std::fs::write(&cfg, TINY_TRAIN).unwrap();
    assert!(sota(&["gen", "--network", "synthetic", "--out", s(&net)]).status.success());

    let args = [
        "train", "--network", s(&net), "--od", "0,4", "--budget-mult", "1.0", "--config", s(&cfg), "--out", s(&out),
    ];
    let summary = json(&sota(&args));
    assert_eq!(summary["t_let"].as_f64(), Some(106.0));
    assert_eq!(summary["iterations"].as_u64(), Some(3));
    for f in ["checkpoint.json", "curve.csv", "network.json", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let ckpt = out.join("checkpoint.json");
    let eval = ["eval", "--checkpoint", s(&ckpt), "--samples", "200"];
    let a = json(&sota(&eval));
    let j = a["estimate"]["j"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&j));
    assert_eq!(a, json(&sota(&eval)));
    assert_eq!(json(&sota_seeded(&eval, "0")), a);

    let late = json(&sota(&["eval", "--checkpoint", s(&ckpt), "--samples", "50", "--budget", "0"]));
    assert_eq!(late["estimate"]["j"].as_f64(), Some(0.0));
    assert!(sota(&["eval", "--checkpoint", s(&ckpt), "--samples", "50", "--argmax"]).status.success());
}

#[test]
fn train_failures() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("net.json");
    let out = dir.path().join("run");
    assert!(sota(&["gen", "--network", "synthetic", "--out", s(&net)]).status.success());

    let bad_od = sota(&["train", "--network", s(&net), "--od", "0,9", "--out", s(&out)]);
    assert_eq!(bad_od.status.code(), Some(2));
    let unreachable = sota(&["train", "--network", s(&net), "--od", "4,0", "--out", s(&out)]);
    assert_eq!(unreachable.status.code(), Some(2));
    let bad_mult = sota(&["train", "--network", s(&net), "--od", "0,4", "--budget-mult", "-1", "--out", s(&out)]);
    assert_eq!(bad_mult.status.code(), Some(2));

    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"train": {"batch_size": 0}}"#).unwrap();
    let zero_batch = sota(&["train", "--network", s(&net), "--od", "0,4", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(zero_batch.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"trian": {}}"#).unwrap();
    let typo = sota(&["train", "--network", s(&net), "--od", "0,4", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(typo.status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    let gone = sota(&["train", "--network", s(&missing), "--od", "0,4", "--out", s(&out)]);
    assert_eq!(gone.status.code(), Some(1));
    let no_ckpt = sota(&["eval", "--checkpoint", s(&missing)]);
    assert_eq!(no_ckpt.status.code(), Some(1));
}

#[test]
fn ablate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    let config = serde_json::json!({
        "network": {"kind": "synthetic"},
        "od_pairs": [[0, 4]],
        "budget_multipliers": [0.95, 1.0, 1.05],
        "train": {"iterations": 2, "batch_size": 4, "eval_every": 0},
        "policy": {"embed_dim": 4, "num_layers": 1, "num_heads": 1, "ffn_mult": 1},
        "eval_samples": 100,
        "seeds": [0, 1],
        "variants": ["full", "no_history", "linear", "vanilla_pg"],
        "train_multiplier": 1.0
    });
    std::fs::write(&cfg, config.to_string()).unwrap();
    let out = dir.path().join("sweep");
    let run = sota(&["ablate", "--config", s(&cfg), "--out", s(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = sota_core::eval::parse_report(&out.join("report.csv")).unwrap();
    assert_eq!(rows.len(), 24);
    assert!(out.join("report.json").exists());

    let collected = dir.path().join("collected.csv");
    assert!(sota(&["report", "--in", s(&out), "--out", s(&collected)]).status.success());
    let mut again = sota_core::eval::parse_report(&collected).unwrap();
    let mut rows = rows;
    let key = |r: &sota_core::eval::ReportRow| (r.variant.clone(), r.seed, (r.multiplier * 100.0) as i64);
    rows.sort_by_key(key);
    again.sort_by_key(key);
    assert_eq!(rows, again);

    let seeded_out = dir.path().join("seeded");
    let seeded = sota_seeded(&["ablate", "--config", s(&cfg), "--out", s(&seeded_out)], "1");
    assert!(seeded.status.success());
    let seeded_rows = sota_core::eval::parse_report(&seeded_out.join("report.csv")).unwrap();
    assert_eq!(seeded_rows.len(), 12);
    assert!(seeded_rows.iter().all(|r| r.seed == 1));

    let bad = dir.path().join("bad.json");
    let mut broken = config.clone();
    broken["eval_samples"] = 0.into();
    std::fs::write(&bad, broken.to_string()).unwrap();
    assert_eq!(sota(&["ablate", "--config", s(&bad), "--out", s(&out)]).status.code(), Some(2));
}
