use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use starlab::lattice::StackSpec;
use starlab::train::{load_checkpoint, TrainConfig};

fn starlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("STARLAB_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, name: &str, v: Value) -> String {
    let p = dir.join(name);
    std::fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn analyze_reports_fixed_point_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = starlab(
        &["analyze", "--cell", "vrnn,lstm,star", "--hidden", "16", "--trials", "2", "--json", "--out", "a"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = json(&dir.path().join("a/fixed_point.json"));
    let want = [("vrnn", 1.414, 2.0), ("lstm", 0.354, 0.5), ("star", 0.707, 1.0)];
    for (r, (kind, unc, cor)) in v.as_array().unwrap().iter().zip(want) {
        assert_eq!(r["kind"], kind);
        assert!((r["factor_uncorrelated"].as_f64().unwrap() - unc).abs() < 1e-3);
        assert!((r["factor_correlated"].as_f64().unwrap() - cor).abs() < 1e-3);
    }
    let m = json(&dir.path().join("a/manifest.json"));
    assert_eq!(m["subcommand"], "analyze");
    assert_eq!(m["outputs"][0]["path"], "fixed_point.json");
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.7071"));
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&starlab(&["analyze", "--cell", "indrnn"], dir.path())), 2);
    assert_eq!(code(&starlab(&["simulate", "--cell", "star", "--runs", "0"], dir.path())), 2);
    assert_eq!(code(&starlab(&["gradcheck", "--cell", "star", "--eps", "1e-1"], dir.path())), 2);
    assert_eq!(code(&starlab(&["frobnicate"], dir.path())), 2);
    assert_eq!(code(&starlab(&["--help"], dir.path())), 0);
}

#[test]
fn simulate_loss_modes_share_a_schema() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["simulate", "--cell", "gru", "--layers", "3", "--steps", "5", "--hidden", "6", "--runs", "4"];
    let mut final_args = base.to_vec();
    final_args.extend(["--loss", "final", "--out", "f", "--heatmap"]);
    let mut all_args = base.to_vec();
    all_args.extend(["--loss", "all", "--out", "a"]);
    assert_eq!(code(&starlab(&final_args, dir.path())), 0);
    assert_eq!(code(&starlab(&all_args, dir.path())), 0);
    let f = std::fs::read_to_string(dir.path().join("f/field.csv")).unwrap();
    let a = std::fs::read_to_string(dir.path().join("a/field.csv")).unwrap();
    assert_eq!(f.lines().next(), a.lines().next());
    assert_eq!(f.lines().count(), 1 + 3 * 5);
    assert_eq!(a.lines().count(), f.lines().count());
    assert_ne!(f, a);
    let svg = std::fs::read_to_string(dir.path().join("f/field_mean.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(!dir.path().join("a/field_mean.svg").exists());
}

#[test]
fn simulate_from_stack_file_and_mnist_input() {
    let dir = tempfile::tempdir().unwrap();
    let stack = write_config(
        dir.path(),
        "stack.json",
        serde_json::json!({"layers": [{"kind": "lstmwf", "n_hidden": 5}, {"kind": "star", "n_hidden": 4}], "n_in": 1, "t_max": 9}),
    );
    let data = repo().join("data/mnist-subset");
    let o = starlab(
        &["simulate", "--stack", &stack, "--runs", "3", "--input", "mnist", "--data-dir", data.to_str().unwrap(), "--out", "s"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.path().join("s/manifest.json"));
    assert_eq!(m["job"]["config"]["sim"]["stack"]["t_max"], 9);
    assert!(m["data_dir"].as_str().unwrap().ends_with("mnist-subset"));

    let o = starlab(
        &["simulate", "--stack", &stack, "--runs", "3", "--input", "mnist", "--data-dir", "/nonexistent", "--out", "x"],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not found"));
}

#[test]
fn gradcheck_pass_fail_and_single_trial() {
    let dir = tempfile::tempdir().unwrap();
    let o = starlab(&["gradcheck", "--cell", "all", "--trials", "100", "--out", "g"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let reports = json(&dir.path().join("g/gradcheck.json"));
    assert_eq!(reports.as_array().unwrap().len(), 5);
    assert!(reports.as_array().unwrap().iter().all(|r| r["max_rel_err"].as_f64().unwrap() < 1e-6));
    assert_eq!(code(&starlab(&["gradcheck", "--cell", "lstm", "--trials", "1", "--out", "g1"], dir.path())), 0);
    let o = starlab(&["gradcheck", "--cell", "gru", "--trials", "2", "--inject-fault", "--out", "g2"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

fn tiny_adding(seed: u64) -> Value {
    serde_json::json!({
        "task": {"kind": "adding", "t": 8},
        "layers": [{"kind": "star", "n_hidden": 6}, {"kind": "lstm", "n_hidden": 5}],
        "epochs": 2, "steps_per_epoch": 6, "batch_size": 8, "micro_batch": 3,
        "seed": seed, "eval_every": 4, "eval_size": 16,
        "instrument": {"layer_grad_norms": true, "weight_state": true}
    })
}

#[test]
fn train_writes_metrics_checkpoint_and_replays_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "adding.json", tiny_adding(3));
    let o = starlab(&["train", "--task", "adding", "--config", &cfg, "--out", "t"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let metrics = std::fs::read_to_string(dir.path().join("t/metrics.jsonl")).unwrap();
    let recs: Vec<Value> = metrics.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 12);
    assert_eq!(recs[0]["step"], 1);
    assert_eq!(recs[0]["layer_grad_norms"].as_array().unwrap().len(), 2);
    assert!(recs[3]["eval"]["loss"].is_f64());
    let (model, step) = load_checkpoint(&dir.path().join("t/checkpoint")).unwrap();
    assert_eq!(step, 12);
    assert_eq!(model.lattice.depth(), 2);

    let o = starlab(&["replay", "t/manifest.json", "--out", "r"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    for f in ["metrics.jsonl", "checkpoint.bin", "checkpoint.json"] {
        assert_eq!(
            std::fs::read(dir.path().join("t").join(f)).unwrap(),
            std::fs::read(dir.path().join("r").join(f)).unwrap(),
            "{f}"
        );
    }

    // a seed override changes the stream
    let o = starlab(&["train", "--task", "adding", "--config", &cfg, "--seed", "4", "--out", "s"], dir.path());
    assert_eq!(code(&o), 0);
    assert_ne!(metrics, std::fs::read_to_string(dir.path().join("s/metrics.jsonl")).unwrap());
}

#[test]
fn replay_detects_changed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = starlab(&["analyze", "--cell", "star", "--hidden", "8", "--trials", "1", "--out", "a"], dir.path());
    assert_eq!(code(&o), 0);
    let path = dir.path().join("a/manifest.json");
    let mut m = json(&path);
    m["outputs"][0]["sha256"] = Value::from("0".repeat(64));
    std::fs::write(&path, m.to_string()).unwrap();
    let o = starlab(&["replay", "a/manifest.json"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("DIFFERS"));
}

#[test]
fn train_rejects_bad_configs_before_compute() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = tiny_adding(0);
    v["optimizer"] = serde_json::json!({"type": "adam", "lr": -0.001});
    let cfg = write_config(dir.path(), "neg.json", v);
    let o = starlab(&["train", "--task", "adding", "--config", &cfg, "--out", "n"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("n").exists());

    let cfg = write_config(dir.path(), "ok.json", tiny_adding(0));
    assert_eq!(code(&starlab(&["train", "--task", "copy", "--config", &cfg], dir.path())), 2);

    let mut v = tiny_adding(0);
    v["bogus"] = Value::from(1);
    let cfg = write_config(dir.path(), "unknown.json", v);
    assert_eq!(code(&starlab(&["train", "--task", "adding", "--config", &cfg], dir.path())), 2);

    let mnist = serde_json::json!({"task": {"kind": "mnist"}, "layers": [{"kind": "star", "n_hidden": 4}]});
    let cfg = write_config(dir.path(), "mnist.json", mnist);
    let o = starlab(&["train", "--task", "mnist", "--config", &cfg, "--data-dir", "/nonexistent"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_with_one_and_a_diagnostic_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut v = tiny_adding(0);
    v["optimizer"] = serde_json::json!({"type": "sgd", "lr": 1e200});
    let cfg = write_config(dir.path(), "boom.json", v);
    let o = starlab(&["train", "--task", "adding", "--config", &cfg, "--out", "d"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("diverged"));
    let metrics = std::fs::read_to_string(dir.path().join("d/metrics.jsonl")).unwrap();
    let last: Value = serde_json::from_str(metrics.lines().last().unwrap()).unwrap();
    assert!(last["diverged"].is_string());
    assert!(dir.path().join("d/manifest.json").exists());
}

#[test]
fn pmnist_records_its_permutation() {
    let dir = tempfile::tempdir().unwrap();
    let v = serde_json::json!({
        "task": {"kind": "pmnist", "train_size": 20, "test_size": 10, "permutation_seed": 5},
        "layers": [{"kind": "star", "n_hidden": 4}],
        "batch_size": 10, "epochs": 1
    });
    let cfg = write_config(dir.path(), "p.json", v);
    let data = repo().join("data/mnist-subset");
    let o = Command::new(env!("CARGO_BIN_EXE_starlab"))
        .args(["train", "--task", "pmnist", "--config", &cfg, "--out", "p"])
        .current_dir(dir.path())
        .env("STARLAB_DATA_DIR", &data)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(&dir.path().join("p/manifest.json"));
    let perm: Vec<u64> = serde_json::from_value(m["extra"]["pixel_permutation"].clone()).unwrap();
    let mut sorted = perm.clone();
    sorted.sort();
    assert_eq!(sorted, (0..784).collect::<Vec<u64>>());
    assert_ne!(perm, sorted);
    assert_eq!(m["job"]["config"]["task"]["permutation_seed"], 5);
    assert_eq!(code(&starlab(&["replay", "p/manifest.json"], dir.path())), 0);
}

#[test]
fn bundled_configs_parse() {
    let mut n = 0;
    for entry in std::fs::read_dir(repo().join("configs")).unwrap() {
        let p = entry.unwrap().path();
        let text = std::fs::read_to_string(&p).unwrap();
        let name = p.file_name().unwrap().to_str().unwrap();
        if name.starts_with("stack_") {
            serde_json::from_str::<StackSpec>(&text).unwrap().validate().unwrap();
        } else {
            TrainConfig::from_json(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        n += 1;
    }
    assert!(n >= 5);
}
