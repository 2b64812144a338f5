use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ecgage"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    data: PathBuf,
    config: PathBuf,
}

/// Small cohort plus a config whose grids fit 12 subjects.
fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let data = root.join("data");
    let o = run(&["synth", "--n-subjects", "12", "--duration-s", "60", "--seed", "3", "--out", p(&data)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let config = root.join("cfg.json");
    std::fs::write(
        &config,
        r#"{"grids": [{"kind": "tree", "tree_min_leaf": [1, 2]}, {"kind": "forest", "forest_n_trees": [30]}]}"#,
    )
    .unwrap();
    Fixture {
        _dir: dir,
        root,
        data,
        config,
    }
}

#[test]
fn usage_errors_exit_with_2() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["bogus"])), 2);
    assert_eq!(code(&run(&["finetune", "--data", "f.csv"])), 2);
    assert_eq!(code(&run(&["run", "--scenario", "finetune", "--data-root", ".", "--out", "x"])), 2);
    assert_eq!(code(&run(&["train", "--features", "f.csv", "--model", "boosting"])), 2);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seeed": 1}"#).unwrap();
    let o = run(&["run", "--scenario", "segmented", "--config", p(&cfg), "--data-root", ".", "--out", "x"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seeed"));
}

#[test]
fn missing_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["ingest", "--data-root", p(dir.path())]);
    assert_eq!(code(&o), 3);
    let o = run(&["report", p(dir.path())]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("metrics.json"));
}

#[test]
fn stages_compose_and_runs_are_reproducible() {
    let f = fixture();
    let cfg = p(&f.config);
    let data = p(&f.data);
    assert_eq!(code(&run(&["ingest", "--data-root", data])), 0);

    let run_dir = |name: &str| {
        let out = f.root.join(name);
        let o = run(&["run", "--scenario", "unsegmented", "--config", cfg, "--data-root", data, "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run_dir("a");
    let b = run_dir("b");
    for file in ["metrics.json", "run_manifest.json", "model_forest.json", "features.csv"] {
        assert_eq!(std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap(), "{file}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("run_manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    let feat = f.root.join("feat");
    let o = run(&["features", "--scope", "unsegmented", "--config", cfg, "--data-root", data, "--out", p(&feat)]);
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(feat.join("features.csv")).unwrap(), std::fs::read(a.join("features.csv")).unwrap());

    for stage in ["preprocess", "delineate", "segment"] {
        let out = f.root.join(stage);
        assert_eq!(code(&run(&[stage, "--data-root", data, "--out", p(&out)])), 0, "{stage}");
        assert!(std::fs::read_dir(&out).unwrap().count() >= 12, "{stage}");
    }

    let rep1 = f.root.join("rep1");
    let rep2 = f.root.join("rep2");
    assert_eq!(code(&run(&["report", p(&a), "--out", p(&rep1)])), 0);
    assert_eq!(code(&run(&["report", p(&a), "--out", p(&rep2)])), 0);
    let md = std::fs::read(rep1.join("summary.md")).unwrap();
    assert_eq!(md, std::fs::read(rep2.join("summary.md")).unwrap());
    assert!(String::from_utf8(md).unwrap().contains("| forest |"));
}

#[test]
fn train_finetune_and_evaluate() {
    let f = fixture();
    let cfg = p(&f.config);
    let data = p(&f.data);
    let feat = f.root.join("feat");
    assert_eq!(code(&run(&["features", "--scope", "unsegmented", "--data-root", data, "--out", p(&feat)])), 0);
    let features = feat.join("features.csv");

    let pre = f.root.join("pre");
    let o = run(&["train", "--config", cfg, "--features", p(&features), "--model", "forest", "--split", "kfold", "--out", p(&pre)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model = pre.join("model.json");

    let tuned = f.root.join("tuned");
    let o = run(&[
        "finetune",
        "--pretrained",
        p(&model),
        "--data",
        p(&features),
        "--policy",
        "forest-augment:k=10,w=0.5",
        "--out",
        p(&tuned),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["evaluate", "--model", p(&tuned.join("model.json")), "--features", p(&features)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["n"], 12);

    let o = run(&["finetune", "--pretrained", p(&model), "--data", p(&features), "--policy", "warm-start:iters=5", "--out", p(&tuned)]);
    assert_eq!(code(&o), 2, "warm start does not apply to a forest");

    let ft = f.root.join("ft");
    let o = run(&[
        "evaluate", "--report-dir", p(&ft), "--scenario", "US+TL", "--pretrained", p(&model), "--config", cfg, "--data-root", data,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ft.join("eval_finetuned.json").is_file());
}
