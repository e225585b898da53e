use std::path::Path;
use std::process::{Command, Output};

use deepred_cli::config::KEY_DOCS;
use serde_json::Value;

fn deepred(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepred"))
        .args(args)
        .current_dir(dir)
        .env_remove("DEEPRED_SEED")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

/// The last stderr line, parsed as the error report.
fn error_line(out: &Output) -> Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

const SMALL: &[&str] = &["--synthetic", "planted", "--synthetic_events", "1500", "--d", "4", "--hidden", "4", "--k", "3"];

/// Runs `cmd` on a small planted-context log with `extra` keys.
fn small(dir: &Path, cmd: &str, extra: &[&str]) -> Output {
    let args: Vec<&str> = std::iter::once(cmd).chain(SMALL.iter().copied()).chain(extra.iter().copied()).collect();
    deepred(dir, &args)
}

#[test]
fn ingest_toy_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.csv"), "user_id,item_id,timestamp,state\nu1,i1,10,0\nu2,i2,20,0\nu1,i1,30,1\n").unwrap();
    let stdout = ok(&deepred(dir.path(), &["ingest", "--data", "toy.csv", "--cache", "toy.bin", "--output_dir", "out"]));
    assert!(stdout.contains("users 2\n"));
    assert!(stdout.contains("items 2\n"));
    assert!(stdout.contains("events 3\n"));
    assert!(stdout.contains("time_span 10 30 20\n"));
    assert!(stdout.contains("repeat_rate 0.3333"));
    let cache = std::fs::read(dir.path().join("toy.bin")).unwrap();
    assert_eq!(&cache[..8], b"DPRDLOG1");
    assert!(dir.path().join("out/ingest.toml").exists());
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "user_id,item_id,timestamp\na,b,1\na,b,soon\n").unwrap();
    let err = error_line(&deepred(dir.path(), &["ingest", "--data", "bad.csv"]));
    assert_eq!(err["error"], "parse");
    assert!(err["message"].as_str().unwrap().contains("line 3"), "{err}");
}

#[test]
fn unknown_key_is_one_line_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = deepred(dir.path(), &["train", "--learning_rte", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
    let err = error_line(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("learning_rte"));

    std::fs::write(dir.path().join("run.toml"), "epochz = 3\n").unwrap();
    assert_eq!(error_line(&deepred(dir.path(), &["train", "--config", "run.toml"]))["error"], "config");
}

#[test]
fn help_documents_every_key() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["train", "sweep", "static-eval"] {
        let help = ok(&deepred(dir.path(), &[cmd, "--help"]));
        for (key, _) in KEY_DOCS {
            let line = help.lines().find(|l| l.trim_start().starts_with(&format!("{key} "))).unwrap_or_else(|| panic!("{key}"));
            assert!(line.contains("[default: "), "{line}");
        }
    }
}

#[test]
fn seed_precedence() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.csv"), "u,i,t\na,b,1\n").unwrap();
    let seed_in = |path: &str| -> i64 {
        let text = std::fs::read_to_string(dir.path().join(path)).unwrap();
        text.parse::<toml::Table>().unwrap()["seed"].as_integer().unwrap()
    };
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_deepred"));
        cmd.args(["ingest", "--data", "t.csv"]).args(extra).current_dir(dir.path()).env_remove("DEEPRED_SEED");
        if let Some(v) = env {
            cmd.env("DEEPRED_SEED", v);
        }
        assert!(cmd.output().unwrap().status.success());
    };
    run(Some("17"), &[]);
    assert_eq!(seed_in("runs/ingest.toml"), 17);
    run(Some("17"), &["--seed", "5"]);
    assert_eq!(seed_in("runs/ingest.toml"), 5);
}

#[test]
fn train_evaluate_predict_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&small(d, "train", &["--epochs", "2", "--output_dir", "a", "--checkpoint_every", "2"]));

    let metrics = std::fs::read_to_string(d.join("a/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    for line in metrics.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["epoch", "train_loss", "val_mrr", "val_recall10", "wall_seconds"]);
    }
    let best = std::fs::read(d.join("a/best.ckpt")).unwrap();
    assert_eq!(&best[..8], b"DPRDMDL1");
    let last = std::fs::read(d.join("a/last.ckpt")).unwrap();
    assert!(last.windows(8).any(|w| w == b"DPRDOPT1"));
    assert!(d.join("a/epoch-2.ckpt").exists() && !d.join("a/epoch-1.ckpt").exists());

    // The resolved config reproduces the run bit for bit.
    ok(&deepred(d, &["train", "--config", "a/train.toml", "--output_dir", "b"]));
    assert_eq!(std::fs::read(d.join("b/best.ckpt")).unwrap(), best);

    let eval = small(d, "evaluate", &["--output_dir", "a", "--dump_ranks", "true"]);
    let printed: Value = serde_json::from_str(ok(&eval).trim()).unwrap();
    let result: Value = serde_json::from_str(&std::fs::read_to_string(d.join("a/results-test.json")).unwrap()).unwrap();
    assert_eq!(printed, result);
    let mut keys: Vec<&str> = result.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["mode", "mrr", "num_events", "recall_at_1", "recall_at_10", "split", "wall_seconds"]);
    assert_eq!(result["num_events"], 150);
    let mrr = result["mrr"].as_f64().unwrap();
    assert!(mrr > 0.0 && mrr <= 1.0);
    let ranks = std::fs::read_to_string(d.join("a/ranks-test.csv")).unwrap();
    assert_eq!(ranks.lines().next(), Some("event_index,user,item,time,rank"));
    assert_eq!(ranks.lines().count(), 151);

    let predict = small(d, "predict", &["--output_dir", "a", "--user", "7", "--top_k", "4"]);
    let lines: Vec<String> = ok(&predict).lines().map(str::to_string).collect();
    assert_eq!(lines[0], "rank,item,distance");
    assert_eq!(lines.len(), 5);
    let distances: Vec<f64> = lines[1..].iter().map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(distances.windows(2).all(|w| w[0] <= w[1]));

    let unknown = small(d, "predict", &["--output_dir", "a", "--user", "nobody"]);
    assert_eq!(error_line(&unknown)["error"], "config");
}

#[test]
fn sweep_writes_one_row_per_distinct_value() {
    let dir = tempfile::tempdir().unwrap();
    let out = small(dir.path(), "sweep", &["--epochs", "1", "--output_dir", "s", "--sweep_key", "k", "--sweep_values", "1,5,10,5"]);
    let stdout = ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicates"));
    let csv = std::fs::read_to_string(dir.path().join("s/sweep-k.csv")).unwrap();
    assert_eq!(csv, stdout);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for (row, value) in rows.iter().zip(["1", "5", "10"]) {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[0], value);
        let mrr: f64 = fields[1].parse().unwrap();
        assert!(mrr > 0.0 && mrr <= 1.0);
    }
    assert!(dir.path().join("s/sweep-k-10/train.toml").exists());
}

#[test]
fn sweep_rejects_other_keys() {
    let dir = tempfile::tempdir().unwrap();
    let err = error_line(&deepred(dir.path(), &["sweep", "--sweep_key", "gamma", "--sweep_values", "1"]));
    assert!(err["message"].as_str().unwrap().contains("k, d, train_fraction"), "{err}");
}

#[test]
fn static_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let common = ["--synthetic", "two_block", "--train_fraction", "0.6", "--val_fraction", "0.1", "--test_fraction", "0.3", "--d", "8", "--hidden", "8", "--output_dir", "st"];
    let mut train = vec!["static-train"];
    train.extend(common);
    train.extend(["--epochs", "2"]);
    ok(&deepred(dir.path(), &train));
    let metrics = std::fs::read_to_string(dir.path().join("st/metrics.jsonl")).unwrap();
    let first: Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    assert!(first["val_ap"].is_f64());

    let mut eval = vec!["static-eval"];
    eval.extend(common);
    let printed: Value = serde_json::from_str(ok(&deepred(dir.path(), &eval)).trim()).unwrap();
    assert_eq!(printed["mode"], "static");
    assert_eq!(printed["positives"], printed["negatives"]);
    let ap = printed["average_precision"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ap));
    let resolved = std::fs::read_to_string(dir.path().join("st/static-eval.toml")).unwrap();
    assert!(resolved.contains("mode = \"static\""));

    // A temporal checkpoint is refused.
    ok(&small(dir.path(), "train", &["--epochs", "1", "--output_dir", "t"]));
    let mut wrong = eval.clone();
    wrong.extend(["--checkpoint", "t/best.ckpt"]);
    assert_eq!(error_line(&deepred(dir.path(), &wrong))["error"], "config");
}
