use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_set-twister"));
    c.env("RUST_LOG", "error");
    c
}

fn run(args: &[&str], root: &Path) -> Output {
    bin().args(args).env("SET_TWISTER_OUT", root).output().expect("binary runs")
}

fn ok(args: &[&str], root: &Path) -> String {
    let out = run(args, root);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn gen_variance(root: &Path, name: &str, seed: &str) -> std::path::PathBuf {
    let dir = root.join(name);
    ok(
        &["gen", "--task", "variance", "--vocab", "20", "--len", "4", "--dim", "8", "--train", "200", "--seed", seed, "--out", dir.to_str().unwrap()],
        root,
    );
    dir
}

fn small_train(data: &Path, extra: &[&str], out: &Path) -> Vec<String> {
    let mut args = vec![
        "train",
        "--data",
        data.to_str().unwrap(),
        "--epochs",
        "3",
        "--batch-size",
        "32",
        "--d-rep",
        "4",
        "--phi-hidden",
        "8",
        "--rho",
        "linear",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    args.into_iter().map(String::from).collect()
}

#[test]
fn gen_writes_three_splits_and_embedding_deterministically() {
    let root = tempfile::tempdir().unwrap();
    let a = gen_variance(root.path(), "a", "7");
    let b = gen_variance(root.path(), "b", "7");
    for f in ["train.jsonl", "validation.jsonl", "test.jsonl", "embedding.json", "manifest.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let train = std::fs::read_to_string(a.join("train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 200);
    let c = gen_variance(root.path(), "c", "8");
    assert_ne!(std::fs::read(a.join("train.jsonl")).unwrap(), std::fs::read(c.join("train.jsonl")).unwrap());
}

#[test]
fn gen_default_output_uses_environment_root() {
    let root = tempfile::tempdir().unwrap();
    ok(&["gen", "--task", "range", "--vocab", "10", "--len", "3", "--dim", "4", "--train", "20"], root.path());
    assert!(root.path().join("data-range-s0").join("train.jsonl").is_file());
}

#[test]
fn invalid_task_is_a_usage_error() {
    let root = tempfile::tempdir().unwrap();
    let out = run(&["gen", "--task", "median"], root.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2));
    assert!(err.contains("median") && err.contains("possible values"), "{err}");
}

#[test]
fn missing_dataset_names_the_path() {
    let root = tempfile::tempdir().unwrap();
    let missing = root.path().join("nowhere-to-be-found");
    let out = run(&["train", "--data", missing.to_str().unwrap()], root.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nowhere-to-be-found"), "{err}");
}

#[test]
fn train_both_models_writes_run_directories_and_reproduces() {
    let root = tempfile::tempdir().unwrap();
    let data = gen_variance(root.path(), "data", "1");
    let ds_dir = root.path().join("ds");
    let st_dir = root.path().join("st");
    let st_again = root.path().join("st2");
    let args = small_train(&data, &["--model", "deepsets", "--tag", "cmp"], &ds_dir);
    ok(&args.iter().map(String::as_str).collect::<Vec<_>>(), root.path());
    for out in [&st_dir, &st_again] {
        let args = small_train(&data, &["--model", "set-twister", "--M", "2", "--k", "2", "--tag", "cmp"], out);
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>(), root.path());
    }
    for dir in [&ds_dir, &st_dir] {
        for f in ["config.toml", "metrics.jsonl", "summary.json", "model.ckpt"] {
            assert!(dir.join(f).is_file(), "{} missing {f}", dir.display());
        }
        let metrics = std::fs::read_to_string(dir.join("metrics.jsonl")).unwrap();
        assert_eq!(metrics.lines().count(), 4);
        let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["tag"], "cmp");
        assert_eq!(summary["metric"], "mae");
        assert!(summary["test_at_best"].as_f64().unwrap().is_finite());
        assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
    }
    let config = std::fs::read_to_string(st_dir.join("config.toml")).unwrap();
    assert!(config.contains("model = \"set-twister\"") && config.contains("M = 2"), "{config}");

    let strip = |dir: &Path| -> Vec<serde_json::Value> {
        std::fs::read_to_string(dir.join("metrics.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                v.as_object_mut().unwrap().remove("wall_time_secs");
                v
            })
            .collect()
    };
    assert_eq!(strip(&st_dir), strip(&st_again));
    assert_eq!(
        std::fs::read(st_dir.join("model.ckpt")).unwrap(),
        std::fs::read(st_again.join("model.ckpt")).unwrap()
    );

    let eval = ok(
        &["eval", "--checkpoint", st_dir.join("model.ckpt").to_str().unwrap(), "--data", data.to_str().unwrap(), "--split", "test"],
        root.path(),
    );
    let report: serde_json::Value = serde_json::from_str(eval.trim()).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(st_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(report["value"].as_f64().unwrap(), summary["test_at_best"].as_f64().unwrap());
}

#[test]
fn config_file_with_flag_overrides() {
    let root = tempfile::tempdir().unwrap();
    let data = gen_variance(root.path(), "data", "2");
    let cfg = root.path().join("run.toml");
    std::fs::write(&cfg, format!("data = {:?}\nmodel = \"deepsets\"\nepochs = 5\nd-rep = 4\nphi-hidden = \"-\"\nseed = 3\n", data)).unwrap();
    let out = root.path().join("run");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--epochs", "2", "--out", out.to_str().unwrap()], root.path());
    let echo = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(echo.contains("epochs = 2") && echo.contains("seed = 3") && echo.contains("model = \"deepsets\""), "{echo}");
    assert_eq!(std::fs::read_to_string(out.join("metrics.jsonl")).unwrap().lines().count(), 3);

    std::fs::write(&cfg, "bogus-key = 1\n").unwrap();
    assert!(!run(&["train", "--config", cfg.to_str().unwrap()], root.path()).status.success());
}

#[test]
fn graph_generation_and_training() {
    let root = tempfile::tempdir().unwrap();
    let data = root.path().join("g");
    ok(&["gen", "--task", "graph", "--nodes", "120", "--classes", "3", "--intra-p", "0.1", "--inter-p", "0.01", "--seed", "4", "--out", data.to_str().unwrap()], root.path());
    let out = root.path().join("run");
    ok(
        &["train", "--data", data.to_str().unwrap(), "--epochs", "5", "--d-rep", "4", "--phi-hidden", "8", "--rho", "linear", "--out", out.to_str().unwrap()],
        root.path(),
    );
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metric"], "accuracy");
    let eval = ok(&["eval", "--checkpoint", out.join("model.ckpt").to_str().unwrap(), "--data", data.to_str().unwrap()], root.path());
    let report: serde_json::Value = serde_json::from_str(eval.trim()).unwrap();
    assert_eq!(report["value"].as_f64().unwrap(), summary["test_at_best"].as_f64().unwrap());
}

#[test]
fn verify_all_passes_and_corruption_fails() {
    let root = tempfile::tempdir().unwrap();
    let out = ok(&["verify", "all"], root.path());
    for suite in ["invariance", "oracle", "gradients", "counts"] {
        assert!(out.contains(&format!("PASS {suite}")), "{out}");
    }
    let bad = run(&["verify", "oracle", "--corrupt-alpha"], root.path());
    assert!(!bad.status.success());
    let text = String::from_utf8_lossy(&bad.stdout);
    assert!(text.contains("FAIL oracle") && text.contains("max error"), "{text}");
}

#[test]
fn counts_print_reference_breakdowns() {
    let root = tempfile::tempdir().unwrap();
    let out = ok(&["verify", "counts", "--M", "3", "--k", "2"], root.path());
    let st = out.lines().find(|l| l.starts_with("set-twister")).unwrap();
    let ds = out.lines().find(|l| l.starts_with("deepsets")).unwrap();
    for n in ["240", "300", "512", "572"] {
        assert!(st.split_whitespace().any(|w| w == n), "{st}");
    }
    for n in ["408", "548", "828", "968"] {
        assert!(ds.split_whitespace().any(|w| w == n), "{ds}");
    }
    let json = ok(&["param-count", "--model", "deepsets", "--d-rep", "12", "--phi-hidden", "12,12", "--json"], root.path());
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v[0]["params"]["with_rho"], 548);
}
