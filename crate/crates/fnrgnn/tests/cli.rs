use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fnrgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnrgnn"))
        .args(args)
        .env_remove("FNRGNN_CONFIG")
        .output()
        .expect("spawn fnrgnn")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Data {
    dir: TempDir,
    nodes: PathBuf,
    edges: PathBuf,
    config: PathBuf,
}

/// A small synthetic graph plus a short training config.
fn data() -> Data {
    let dir = tempfile::tempdir().unwrap();
    let gen_cfg = dir.path().join("gen.json");
    fs::write(&gen_cfg, r#"{"n": 80, "d": 4, "p_intra": 0.1, "p_inter": 0.02}"#).unwrap();
    let nodes = dir.path().join("nodes.csv");
    let edges = dir.path().join("edges.tsv");
    let o = fnrgnn(&[
        "generate",
        "--config",
        s(&gen_cfg),
        "--out-nodes",
        s(&nodes),
        "--out-edges",
        s(&edges),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let config = dir.path().join("train.json");
    fs::write(
        &config,
        r#"{"format_version": 1, "epochs": 15, "patience": 15, "hidden": 8, "sample_per_group": 30}"#,
    )
    .unwrap();
    Data {
        dir,
        nodes,
        edges,
        config,
    }
}

#[test]
fn generate_defaults_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = ["a.csv", "a.tsv", "b.csv", "b.tsv"]
        .iter()
        .map(|f| dir.path().join(f))
        .collect();
    for pair in paths.chunks(2) {
        let o = fnrgnn(&[
            "generate",
            "--seed",
            "4",
            "--out-nodes",
            s(&pair[0]),
            "--out-edges",
            s(&pair[1]),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("generated 400 nodes"), "{}", stdout(&o));
    }
    assert_eq!(fs::read(&paths[0]).unwrap(), fs::read(&paths[2]).unwrap());
    assert_eq!(fs::read(&paths[1]).unwrap(), fs::read(&paths[3]).unwrap());
    let (g, _) = fnrgnn::graph_io::load_graph(&paths[0], &paths[1]).unwrap();
    assert_eq!(g.num_nodes(), 400);
}

#[test]
fn generate_prints_label_gap() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("g.json");
    fs::write(&cfg, r#"{"delta": 2.0}"#).unwrap();
    let (n, e) = (dir.path().join("n.csv"), dir.path().join("e.tsv"));
    let o = fnrgnn(&["generate", "--config", s(&cfg), "--out-nodes", s(&n), "--out-edges", s(&e)]);
    assert!(o.status.success());
    let out = stdout(&o);
    let mg: f64 = out
        .split("label mg ")
        .nth(1)
        .and_then(|rest| rest.split(',').next())
        .unwrap()
        .parse()
        .unwrap();
    // oracle: mean difference read back from the written labels
    let (g, _) = fnrgnn::graph_io::load_graph(&n, &e).unwrap();
    let mean = |grp: u8| {
        let ys: Vec<f64> = (0..g.num_nodes())
            .filter(|&i| g.sensitive()[i] == grp)
            .map(|i| g.targets()[i])
            .collect();
        ys.iter().sum::<f64>() / ys.len() as f64
    };
    let direct = (mean(1) - mean(0)).abs();
    assert!((mg - direct).abs() < 1e-4, "{mg} vs {direct}");
    assert!((mg - 2.0).abs() < 0.5, "{mg}");
}

#[test]
fn generate_unwritable_path_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("missing_dir").join("n.csv");
    let o = fnrgnn(&["generate", "--out-nodes", s(&bad), "--out-edges", s(&dir.path().join("e.tsv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing_dir"), "{}", stderr(&o));
}

#[test]
fn train_writes_outputs_and_is_deterministic() {
    let d = data();
    let mut metrics = Vec::new();
    for run in ["r1", "r2"] {
        let out = d.dir.path().join(run);
        let o = fnrgnn(&[
            "train",
            "--nodes",
            s(&d.nodes),
            "--edges",
            s(&d.edges),
            "--config",
            s(&d.config),
            "--ablation",
            "vanilla",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        for f in ["result.json", "metrics.json", "curves.csv", "checkpoint.json"] {
            assert!(out.join(f).exists(), "{f}");
        }
        let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
        assert_eq!(curves.lines().next(), Some("epoch,total,mse,mmd,dist,val_mse"));
        assert_eq!(curves.lines().count(), 16);
        metrics.push(fs::read(out.join("metrics.json")).unwrap());
    }
    assert_eq!(metrics[0], metrics[1]);
    let doc: serde_json::Value = serde_json::from_slice(&metrics[0]).unwrap();
    assert_eq!(doc["format_version"], 1);
    for key in ["mse", "mae", "mg", "vg", "wd"] {
        assert!(doc["metrics"]["test"][key].is_f64(), "{key}");
    }
}

#[test]
fn config_path_can_come_from_environment() {
    let d = data();
    let out = d.dir.path().join("env");
    let o = Command::new(env!("CARGO_BIN_EXE_fnrgnn"))
        .args(["train", "--nodes", s(&d.nodes), "--edges", s(&d.edges), "--out", s(&out)])
        .env("FNRGNN_CONFIG", &d.config)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("curves.csv")).unwrap().lines().count(), 16);
}

#[test]
fn evaluate_reproduces_training_metrics() {
    let d = data();
    let out = d.dir.path().join("run");
    let o = fnrgnn(&[
        "train",
        "--nodes",
        s(&d.nodes),
        "--edges",
        s(&d.edges),
        "--config",
        s(&d.config),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let eval = d.dir.path().join("eval.json");
    let o = fnrgnn(&[
        "evaluate",
        "--checkpoint",
        s(&out.join("checkpoint.json")),
        "--nodes",
        s(&d.nodes),
        "--edges",
        s(&d.edges),
        "--out",
        s(&eval),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read(&eval).unwrap(), fs::read(out.join("metrics.json")).unwrap());
}

#[test]
fn evaluate_rejects_mismatched_graph() {
    let d = data();
    let out = d.dir.path().join("run");
    let o = fnrgnn(&[
        "train", "--nodes", s(&d.nodes), "--edges", s(&d.edges), "--config", s(&d.config), "--out", s(&out),
    ]);
    assert!(o.status.success());
    // a graph with a different feature dimension
    let other = d.dir.path().join("other.csv");
    let other_edges = d.dir.path().join("other.tsv");
    let o = fnrgnn(&["generate", "--out-nodes", s(&other), "--out-edges", s(&other_edges)]);
    assert!(o.status.success());
    let o = fnrgnn(&[
        "evaluate",
        "--checkpoint",
        s(&out.join("checkpoint.json")),
        "--nodes",
        s(&other),
        "--edges",
        s(&other_edges),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_edges_file_exits_2_with_path() {
    let d = data();
    let missing = d.dir.path().join("absent_edges.tsv");
    let o = fnrgnn(&[
        "train",
        "--nodes",
        s(&d.nodes),
        "--edges",
        s(&missing),
        "--out",
        s(&d.dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent_edges.tsv"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_2() {
    let d = data();
    for body in [r#"{"epochs": 0}"#, r#"{"lerning_rate": 0.1}"#, "not json", r#"{"format_version": 9}"#] {
        let cfg = d.dir.path().join("bad.json");
        fs::write(&cfg, body).unwrap();
        let o = fnrgnn(&[
            "train",
            "--nodes",
            s(&d.nodes),
            "--edges",
            s(&d.edges),
            "--config",
            s(&cfg),
            "--out",
            s(&d.dir.path().join("x")),
        ]);
        assert_eq!(o.status.code(), Some(2), "{body}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: "), "{body}");
    }
}

#[test]
fn diverging_training_exits_3() {
    let d = data();
    let cfg = d.dir.path().join("huge_lr.json");
    fs::write(&cfg, r#"{"epochs": 10, "patience": 10, "lr": 1e305, "hidden": 4}"#).unwrap();
    let o = fnrgnn(&[
        "train",
        "--nodes",
        s(&d.nodes),
        "--edges",
        s(&d.edges),
        "--config",
        s(&cfg),
        "--out",
        s(&d.dir.path().join("x")),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes() {
    let o = fnrgnn(&["gradcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    for case in ["mse", "mmd", "sinkhorn", "moment", "total"] {
        assert!(out.lines().any(|l| l.starts_with(case) && l.ends_with("ok")), "{out}");
    }
}

#[test]
fn ablate_writes_one_row_per_case_and_seed() {
    let d = data();
    let cfg = d.dir.path().join("short.json");
    fs::write(&cfg, r#"{"epochs": 3, "patience": 3, "hidden": 4, "sample_per_group": 20}"#).unwrap();
    let out = d.dir.path().join("abl");
    let o = fnrgnn(&[
        "ablate",
        "--nodes",
        s(&d.nodes),
        "--edges",
        s(&d.edges),
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--jobs",
        "2",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let runs = fs::read_to_string(out.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 25);
    assert!(runs.lines().skip(1).all(|l| l.split(',').nth(2) == Some("ok")), "{runs}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 5);
    let cases: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(cases, ["vanilla", "no_reweight", "no_mmd", "mean_only_dist", "full"]);
}
