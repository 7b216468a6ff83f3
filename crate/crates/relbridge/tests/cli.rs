use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

const CONFIG: &str = r#"schema_version = 1
[data]
source = "syn/source.aug.jsonl"
target = "syn/target.aug.jsonl"
[model]
hidden_size = 8
[train]
epochs = 2
lr = 1e-2
lr_rel_embed = 1e-2
implicit_dim_source = 10
[matrix]
designs = ["vanilla", "implicit"]
regimes = ["sequential_transfer", "in_domain"]
shots = [0, 5]
seeds = [0]
n_samples = 2
[synth]
n_train = 60
n_valid = 20
n_test = 30
[output]
dir = "out"
"#;

fn relbridge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relbridge"))
        .current_dir(dir)
        .env_remove("RELBRIDGE_STORE")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = relbridge(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn prepare(dir: &Path) {
    fs::write(dir.join("cfg.toml"), CONFIG).unwrap();
    ok(dir, &["--config", "cfg.toml", "synth", "--out-dir", "syn"]);
    for tag in ["source", "target"] {
        ok(
            dir,
            &[
                "--config",
                "cfg.toml",
                "postprocess-triples",
                "--corpus",
                &format!("syn/{tag}.jsonl"),
                "--extractions",
                &format!("syn/{tag}.triples.jsonl"),
                "--out",
                &format!("syn/{tag}.aug.jsonl"),
            ],
        );
    }
}

#[test]
fn pipeline_end_to_end() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();
    prepare(dir);
    assert!(dir.join("syn/source.aug.jsonl.report.json").exists());

    let stats = ok(dir, &["stats", "--corpus", "syn/source.aug.jsonl"]);
    assert!(stats.starts_with("split\t#Sent\t#Tr\t#Re\n"));
    assert!(stats.contains("train\t60\t"));

    ok(dir, &["--config", "cfg.toml", "train-source", "--design", "implicit", "--out", "ck/src.json"]);
    assert!(dir.join("ck/src.json.metrics.jsonl").exists());
    assert!(dir.join("ck/config.toml").exists());
    ok(
        dir,
        &[
            "--config",
            "cfg.toml",
            "transfer",
            "--regime",
            "sequential-transfer",
            "--design",
            "implicit",
            "--shots",
            "5",
            "--checkpoint",
            "ck/src.json",
            "--out",
            "ck/run.json",
        ],
    );
    let log = fs::read_to_string(dir.join("ck/run.json.metrics.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);

    let eval = ok(dir, &["evaluate", "--gold", "syn/target.aug.jsonl", "--checkpoint", "ck/src.json"]);
    let v: serde_json::Value = serde_json::from_str(eval.trim()).unwrap();
    assert!(v.get("f1").is_some(), "{eval}");
    let rec: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("ck/run.json")).unwrap()).unwrap();
    assert_eq!(rec["shots"], 5);
    assert_eq!(rec["regime"], "sequential_transfer");

    ok(dir, &["--config", "cfg.toml", "--deterministic", "run-matrix"]);
    let records = fs::read_to_string(dir.join("out/records.jsonl")).unwrap();
    let n = records.lines().count();
    assert!(n > 0);
    // resume: nothing left to run
    ok(dir, &["--config", "cfg.toml", "--deterministic", "run-matrix"]);
    assert_eq!(fs::read_to_string(dir.join("out/records.jsonl")).unwrap().lines().count(), n);

    let md = ok(dir, &["--config", "cfg.toml", "report", "--format", "markdown"]);
    assert!(md.contains('|'));
    ok(dir, &["--config", "cfg.toml", "plot", "--out-dir", "plots"]);
    let svg = fs::read_to_string(dir.join("plots/sequential_transfer.svg")).unwrap();
    assert!(svg.starts_with("<svg") || svg.starts_with("<?xml"));
    assert!(dir.join("plots/sequential_transfer.csv").exists());

    // env var locates the store when no flag or config entry is given
    let out = Command::new(env!("CARGO_BIN_EXE_relbridge"))
        .current_dir(dir)
        .env("RELBRIDGE_STORE", dir.join("out"))
        .args(["report", "--format", "json"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!rows["aggregate"]["rows"].as_array().unwrap().is_empty());
}

#[test]
fn stats_on_empty_corpus() {
    let tmp = tempdir().unwrap();
    fs::write(tmp.path().join("e.jsonl"), "").unwrap();
    let out = ok(tmp.path(), &["stats", "--corpus", "e.jsonl"]);
    assert_eq!(out, "split\t#Sent\t#Tr\t#Re\ntrain\t0\t0\t0\nvalid\t0\t0\t0\ntest\t0\t0\t0\n");
}

#[test]
fn exit_codes() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();

    let out = relbridge(dir, &["frobnicate"]);
    assert_eq!(code(&out), 2);

    fs::write(dir.join("bad.toml"), "[train]\nnot_a_key = 3\n").unwrap();
    let out = relbridge(dir, &["--config", "bad.toml", "synth", "--out-dir", "x"]);
    assert_eq!(code(&out), 3);

    let out = relbridge(dir, &["stats", "--corpus", "missing.jsonl"]);
    assert_eq!(code(&out), 4);

    fs::write(dir.join("broken.jsonl"), "{not json\n").unwrap();
    let out = relbridge(dir, &["stats", "--corpus", "broken.jsonl"]);
    assert_eq!(code(&out), 5);
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["code"], 5);
}

#[test]
fn evaluate_length_mismatch() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path();
    let line = |id: &str| {
        format!(r#"{{"sentence_id":"{id}","doc_id":"d","tokens":["a","b"],"trigger_spans":[[0,1]],"split":"test"}}"#)
    };
    fs::write(dir.join("gold.jsonl"), format!("{}\n{}\n", line("1"), line("2"))).unwrap();
    fs::write(dir.join("pred.jsonl"), "{\"sentence_id\":\"1\",\"tags\":[\"B-TRG\",\"O\"]}\n").unwrap();
    let out = relbridge(dir, &["evaluate", "--gold", "gold.jsonl", "--pred", "pred.jsonl"]);
    assert_ne!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("length mismatch"));
}
