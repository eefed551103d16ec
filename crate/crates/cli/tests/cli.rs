//! End-to-end tests of the drchot binary: the full pipeline on a small
//! synthetic suite, determinism of generated artifacts, and the exit-code
//! contract (0 success, 1 usage, 2 data error, 3 undefined metric).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn drchot(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drchot"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawning drchot")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process exited normally")
}

/// Small suite + extracted samples + split used by most tests: three 14x14
/// designs, a high hotspot rate so tiny splits still carry both classes.
fn make_suite(dir: &Path) -> Vec<String> {
    fs::write(
        dir.join("synth.json"),
        r#"{"nx": 14, "ny": 14, "target_hotspot_rate": 0.1, "seed": 11}"#,
    )
    .unwrap();
    assert_ok(&drchot(
        &[
            "gen-synth",
            "--config",
            "synth.json",
            "--out-dir",
            "suite",
            "--count",
            "3",
        ],
        dir,
    ));

    let mut sample_files = Vec::new();
    for i in 0..3 {
        let name = format!("synth_{i:02}");
        let out = format!("{name}.samples.jsonl");
        assert_ok(&drchot(
            &[
                "extract",
                "--layout",
                &format!("suite/{name}.layout.json"),
                "--drc",
                &format!("suite/{name}.drc.json"),
                "--out",
                &out,
            ],
            dir,
        ));
        sample_files.push(out);
    }

    let mut args = vec!["split", "--samples"];
    args.extend(sample_files.iter().map(String::as_str));
    args.extend(["--seed", "3", "--out", "split.json"]);
    assert_ok(&drchot(&args, dir));
    sample_files
}

fn train_config(dir: &Path) -> PathBuf {
    let path = dir.join("train.json");
    fs::write(
        &path,
        r#"{
            "epochs": 8,
            "selection": {"mode": "srs", "subset_size": 8, "num_voters": 3, "seed": 5},
            "seed": 5
        }"#,
    )
    .unwrap();
    path
}

#[test]
fn pipeline_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let samples = make_suite(dir);

    let mut args = vec!["train", "--samples"];
    args.extend(samples.iter().map(String::as_str));
    args.extend([
        "--manifest",
        "split.json",
        "--config",
        "train.json",
        "--out",
        "model.json",
        "--threads",
        "2",
    ]);
    train_config(dir);
    assert_ok(&drchot(&args, dir));

    assert_ok(&drchot(
        &[
            "predict",
            "--model",
            "model.json",
            "--samples",
            &samples[2],
            "--out",
            "scores.csv",
        ],
        dir,
    ));
    let scores = fs::read_to_string(dir.join("scores.csv")).unwrap();
    let mut lines = scores.lines();
    assert_eq!(lines.next(), Some("key,score"));
    let first = lines.next().unwrap();
    assert!(first.starts_with("synth_02:"), "unexpected key: {first}");
    let score: f64 = first.rsplit_once(',').unwrap().1.parse().unwrap();
    assert!((0.0..=3.0).contains(&score), "3-voter sum out of range");

    assert_ok(&drchot(
        &[
            "evaluate",
            "--scores",
            "scores.csv",
            "--samples",
            &samples[2],
            "--report",
            "report.json",
            "--roc",
            "roc.csv",
            "--pr",
            "pr.csv",
        ],
        dir,
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["undefined"], serde_json::Value::Bool(false));
    for metric in ["acc_e", "a_roc", "a_prc"] {
        let v = report[metric].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{metric} = {v}");
    }
    let roc = fs::read_to_string(dir.join("roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr,threshold\n"));
    let pr = fs::read_to_string(dir.join("pr.csv")).unwrap();
    assert!(pr.starts_with("recall,precision,threshold\n"));

    // Every output carries a run manifest recording input hashes.
    for manifest in ["suite/run.json", "model.json.run.json", "scores.csv.run.json"] {
        let doc: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.join(manifest)).unwrap()).unwrap();
        assert!(doc["command"].is_string(), "{manifest} missing command");
        for input in doc["inputs"].as_array().unwrap() {
            assert_eq!(input["sha256"].as_str().unwrap().len(), 64);
        }
    }
}

#[test]
fn gen_synth_is_deterministic_per_seed() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    for out_dir in ["a", "b"] {
        assert_ok(&drchot(
            &["gen-synth", "--out-dir", out_dir, "--count", "2", "--seed", "9"],
            dir,
        ));
    }
    assert_ok(&drchot(
        &["gen-synth", "--out-dir", "c", "--count", "2", "--seed", "10"],
        dir,
    ));

    for name in ["synth_00.layout.json", "synth_00.drc.json", "synth_01.layout.json"] {
        let a = fs::read(dir.join("a").join(name)).unwrap();
        let b = fs::read(dir.join("b").join(name)).unwrap();
        let c = fs::read(dir.join("c").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical-seed runs");
        assert_ne!(a, c, "{name} identical across different seeds");
    }
}

#[test]
fn gen_synth_emits_one_file_pair_per_design() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("small.json"), r#"{"nx": 10, "ny": 10}"#).unwrap();
    assert_ok(&drchot(
        &[
            "gen-synth",
            "--config",
            "small.json",
            "--out-dir",
            "suite",
            "--count",
            "14",
            "--seed",
            "1",
        ],
        dir,
    ));
    let mut names: Vec<String> = fs::read_dir(dir.join("suite"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 29, "14 layout + 14 drc + run.json");
    assert!(names.contains(&"synth_13.layout.json".to_owned()));
    assert!(names.contains(&"synth_13.drc.json".to_owned()));
}

#[test]
fn rf_pipeline_end_to_end() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let samples = make_suite(dir);

    fs::write(dir.join("rf.json"), r#"{"num_trees": 12, "max_depth": 6}"#).unwrap();
    let mut args = vec!["rf-train", "--samples"];
    args.extend(samples.iter().map(String::as_str));
    args.extend([
        "--manifest",
        "split.json",
        "--config",
        "rf.json",
        "--seed",
        "4",
        "--out",
        "forest.json",
    ]);
    assert_ok(&drchot(&args, dir));

    // predict dispatches on the file contents, not a flag.
    assert_ok(&drchot(
        &[
            "predict",
            "--model",
            "forest.json",
            "--samples",
            &samples[0],
            "--out",
            "rf_scores.csv",
        ],
        dir,
    ));
    let scores = fs::read_to_string(dir.join("rf_scores.csv")).unwrap();
    for line in scores.lines().skip(1) {
        let p: f64 = line.rsplit_once(',').unwrap().1.parse().unwrap();
        assert!((0.0..=1.0).contains(&p), "forest prob out of range: {p}");
    }
}

#[test]
fn grid_search_ranks_candidates() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let samples = make_suite(dir);

    fs::write(
        dir.join("grid.json"),
        r#"{
            "learning_rates": [0.001, 0.01],
            "epochs": [6],
            "num_voters": [2],
            "subset_sizes": [6, 10]
        }"#,
    )
    .unwrap();
    let mut args = vec!["grid-search", "--samples"];
    args.extend(samples.iter().map(String::as_str));
    args.extend([
        "--manifest",
        "split.json",
        "--grid",
        "grid.json",
        "--seed",
        "2",
        "--out",
        "grid_results.json",
        "--threads",
        "2",
    ]);
    let out = drchot(&args, dir);
    assert_ok(&out);

    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("learning_rate,epochs,num_voters,subset_size,score"));
    assert_eq!(stdout.lines().count(), 5, "header + 4 candidates");

    let doc: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("grid_results.json")).unwrap()).unwrap();
    assert_eq!(doc["metric"], "a_roc");
    let ranked = doc["ranked"].as_array().unwrap();
    assert_eq!(ranked.len(), 4);
    assert_eq!(doc["best"], ranked[0]);
    let scores: Vec<f64> = ranked.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "not sorted: {scores:?}");
}

#[test]
fn matrix_renders_all_rows() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let samples = make_suite(dir);

    let mut args = vec!["matrix", "--samples"];
    args.extend(samples.iter().map(String::as_str));
    args.extend(["--manifest", "split.json", "--out-dir", "matrix", "--seed", "6"]);
    assert_ok(&drchot(&args, dir));

    let csv = fs::read_to_string(dir.join("matrix/matrix.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("test_set,setting1_acc_e,setting1_a_roc,setting1_a_prc,setting2_"));
    assert!(header.ends_with("rf_acc_e,rf_a_roc,rf_a_prc"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4, "3 designs + pooled row");
    assert!(rows[3].starts_with("All testing samples,"));
    // 5 column groups x 3 metrics per row.
    assert_eq!(rows[0].split(',').count(), 16);

    let md = fs::read_to_string(dir.join("matrix/matrix.md")).unwrap();
    assert_eq!(md.lines().count(), 6, "header + separator + 4 rows");
}

#[test]
fn usage_errors_exit_1() {
    let tmp = TempDir::new().unwrap();
    let out = drchot(&["no-such-command"], tmp.path());
    assert_eq!(exit_code(&out), 1);

    let out = drchot(&["train", "--out", "m.json"], tmp.path());
    assert_eq!(exit_code(&out), 1, "missing required args is a usage error");

    let out = drchot(&["--help"], tmp.path());
    assert_eq!(exit_code(&out), 0);
}

#[test]
fn data_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();

    let out = drchot(
        &["extract", "--layout", "nope.json", "--drc", "nope.json", "--out", "x"],
        dir,
    );
    assert_eq!(exit_code(&out), 2);

    fs::write(dir.join("bad.json"), "{not json").unwrap();
    let out = drchot(
        &["extract", "--layout", "bad.json", "--drc", "bad.json", "--out", "x"],
        dir,
    );
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bad.json"), "error names the file: {stderr}");

    // Config schema violations point at the offending path.
    fs::write(dir.join("synth.json"), r#"{"nx": "wide"}"#).unwrap();
    let out = drchot(
        &["gen-synth", "--config", "synth.json", "--out-dir", "suite"],
        dir,
    );
    assert_eq!(exit_code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nx"), "schema error names the field: {stderr}");
}

#[test]
fn single_class_evaluation_exits_3() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();

    // Hand-built: two negative samples and matching scores. No model needed.
    let mut jsonl = String::new();
    for (i, score) in [(0, 0.2), (1, 0.7)] {
        jsonl.push_str(&format!(
            "{}\n",
            serde_json::json!({
                "design": "d",
                "col": i,
                "row": 0,
                "features": [0.0, score],
                "label": false,
            })
        ));
    }
    fs::write(dir.join("neg.jsonl"), jsonl).unwrap();
    fs::write(dir.join("scores.csv"), "key,score\nd:0:0,0.2\nd:1:0,0.7\n").unwrap();

    let out = drchot(
        &[
            "evaluate",
            "--scores",
            "scores.csv",
            "--samples",
            "neg.jsonl",
            "--report",
            "report.json",
        ],
        dir,
    );
    assert_eq!(exit_code(&out), 3);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("undefined"), "stderr explains: {stderr}");
    assert!(!dir.join("report.json").exists(), "no partial report on abort");
}

#[test]
fn train_logs_per_voter_loss_at_debug() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let samples = make_suite(dir);
    train_config(dir);

    let mut args = vec!["train", "--samples"];
    args.extend(samples.iter().map(String::as_str));
    args.extend([
        "--manifest",
        "split.json",
        "--config",
        "train.json",
        "--out",
        "model.json",
        "--threads",
        "1",
    ]);
    let out = Command::new(env!("CARGO_BIN_EXE_drchot"))
        .args(&args)
        .current_dir(dir)
        .env("RUST_LOG", "debug")
        .output()
        .unwrap();
    assert_ok(&out);

    let stderr = String::from_utf8_lossy(&out.stderr);
    let trace = stderr
        .lines()
        .find(|l| l.contains("voter 0: per-epoch mean loss ["))
        .unwrap_or_else(|| panic!("no loss trace in stderr: {stderr}"));
    // The trace is a Debug-printed Vec<f64>; training on real gradients
    // should drive the mean loss down over the 8 epochs. (rsplit: the
    // env_logger prefix also contains a `[`.)
    let list = trace.rsplit('[').next().unwrap().trim_end_matches(']');
    let losses: Vec<f64> = list.split(", ").map(|v| v.parse().unwrap()).collect();
    assert_eq!(losses.len(), 8);
    assert!(
        losses.last().unwrap() < losses.first().unwrap(),
        "loss did not decrease: {losses:?}"
    );
}

#[test]
fn split_holdout_flag_sends_design_to_test() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let samples = make_suite(dir);

    let mut args = vec!["split", "--samples"];
    args.extend(samples.iter().map(String::as_str));
    args.extend([
        "--holdout",
        "synth_01",
        "--seed",
        "3",
        "--out",
        "holdout_split.json",
    ]);
    assert_ok(&drchot(&args, dir));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("holdout_split.json")).unwrap()).unwrap();
    let in_set = |set: &serde_json::Value| {
        set.as_array()
            .unwrap()
            .iter()
            .any(|key| key[0] == "synth_01")
    };
    assert!(!in_set(&manifest["train"]), "holdout leaked into train");
    assert!(!in_set(&manifest["valid"]), "holdout leaked into valid");
    let held = manifest["tests"]["synth_01"].as_array().unwrap();
    let total: usize = fs::read_to_string(dir.join(&samples[1]))
        .unwrap()
        .lines()
        .count();
    assert_eq!(held.len(), total, "every holdout sample is in its test set");
}
