//! Black-box tests of the `privaudit` binary: exit codes, error prefixes,
//! emitted files, and run-to-run determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn privaudit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_privaudit"))
}

fn write_config(dir: &Path, name: &str, body: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(body).unwrap()).unwrap();
    path
}

/// A small, fast audit: 80 synthetic records, a [2, 8, 2] target, and the
/// population-loss attack.
fn small_config(out_dir: &Path) -> Value {
    json!({
        "seed": 7,
        "dataset": {
            "source": "synthetic",
            "n_per_class": 40,
            "n_features": 2,
            "num_classes": 2,
            "class_separation": 2.0
        },
        "split": { "n_members": 20, "n_nonmembers": 20 },
        "target": {
            "hidden_layers": [8],
            "train": { "learning_rate": 0.3, "epochs": 30, "batch_size": 8 }
        },
        "attacks": { "population_loss": true },
        "output_dir": out_dir
    })
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// report.json with the timestamp line removed, for byte comparisons.
fn without_timestamp(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|line| !line.contains("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn help_exits_zero() {
    let output = privaudit().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
}

#[test]
fn unknown_flag_is_a_config_error() {
    let output = privaudit()
        .args(["audit", "--config", "x.json", "--frobnicate"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).starts_with("error:config:"), "{}", stderr(&output));
}

#[test]
fn missing_config_file_is_a_config_error() {
    let output = privaudit()
        .args(["validate", "--config", "/no/such/config.json"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert!(err.starts_with("error:config:"), "{err}");
    assert!(err.contains("/no/such/config.json"), "{err}");
}

#[test]
fn validate_accepts_a_good_config_and_prints_the_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "config.json", &small_config(&tmp.path().join("out")));
    let output = privaudit()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let out = stdout(&output);
    assert!(out.contains("config ok"), "{out}");
    let digest = out
        .lines()
        .find_map(|l| l.strip_prefix("digest "))
        .expect("digest line");
    assert_eq!(digest.len(), 64);
    assert!(digest.chars().all(|c| c.is_ascii_hexdigit()));
}

#[test]
fn validate_rejects_unknown_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = small_config(&tmp.path().join("out"));
    body["typo_field"] = json!(1);
    let config = write_config(tmp.path(), "config.json", &body);
    let output = privaudit()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).starts_with("error:config:"), "{}", stderr(&output));
}

#[test]
fn missing_dataset_csv_is_named_in_the_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = small_config(&tmp.path().join("out"));
    body["dataset"] = json!({
        "source": "csv",
        "path": "/no/such/data.csv",
        "label_column": "label"
    });
    let config = write_config(tmp.path(), "config.json", &body);
    let output = privaudit()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let err = stderr(&output);
    assert!(err.starts_with("error:config:"), "{err}");
    assert!(err.contains("/no/such/data.csv"), "{err}");
}

#[test]
fn config_without_attacks_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = small_config(&tmp.path().join("out"));
    body["attacks"] = json!({});
    let config = write_config(tmp.path(), "config.json", &body);
    let output = privaudit()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr(&output).contains("no attacks enabled"), "{}", stderr(&output));
}

#[test]
fn audit_writes_the_report_and_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let config = write_config(tmp.path(), "config.json", &small_config(&out_dir));

    let validate = privaudit()
        .args(["validate", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    let expected_digest = stdout(&validate)
        .lines()
        .find_map(|l| l.strip_prefix("digest ").map(str::to_string))
        .unwrap();

    let output = privaudit()
        .args(["audit", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let out = stdout(&output);
    assert!(out.contains("attack population_loss: auc"), "{out}");
    assert!(out.contains("wrote "), "{out}");

    for name in [
        "report.json",
        "roc_population_loss.csv",
        "risks_population_loss.csv",
        "histogram_population_loss.csv",
    ] {
        assert!(out_dir.join(name).is_file(), "{name} missing");
    }

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(
        report["meta"]["config_digest"].as_str().unwrap(),
        expected_digest
    );
    assert!(report["epsilon"].is_null(), "no DP training, no epsilon");
    assert_eq!(report["attacks"].as_array().unwrap().len(), 1);

    let risks = std::fs::read_to_string(out_dir.join("risks_population_loss.csv")).unwrap();
    assert_eq!(risks.lines().count(), 1 + 40, "header plus one row per audited record");
}

#[test]
fn audit_is_deterministic_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = small_config(&tmp.path().join("ignored"));
    // include a shadow attack so the determinism claim covers shadow
    // training and the attack classifier too
    body["attacks"] = json!({
        "population_loss": true,
        "shadow_blackbox": true,
        "shadow": {
            "n_shadows": 3,
            "shadow_train_fraction": 0.5,
            "shadow_hidden_layers": [8],
            "shadow_train": { "learning_rate": 0.3, "epochs": 30, "batch_size": 8 },
            "attack_train": { "learning_rate": 0.1, "epochs": 50, "batch_size": 16 }
        }
    });
    let config = write_config(tmp.path(), "config.json", &body);

    for dir in ["a", "b"] {
        let output = privaudit()
            .args(["audit", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(tmp.path().join(dir))
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    }

    assert_eq!(
        without_timestamp(&tmp.path().join("a/report.json")),
        without_timestamp(&tmp.path().join("b/report.json")),
        "report.json must match up to the timestamp"
    );
    for name in [
        "roc_population_loss.csv",
        "risks_population_loss.csv",
        "histogram_population_loss.csv",
        "roc_shadow_blackbox.csv",
        "risks_shadow_blackbox.csv",
        "histogram_shadow_blackbox.csv",
    ] {
        let a = std::fs::read(tmp.path().join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn seed_override_changes_the_digest_and_the_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "config.json", &small_config(&tmp.path().join("ignored")));

    let mut reports = Vec::new();
    for (dir, seed) in [("s1", "1"), ("s2", "2")] {
        let output = privaudit()
            .args(["audit", "--config"])
            .arg(&config)
            .args(["--seed", seed, "--out"])
            .arg(tmp.path().join(dir))
            .output()
            .unwrap();
        assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
        let report: Value = serde_json::from_str(
            &std::fs::read_to_string(tmp.path().join(dir).join("report.json")).unwrap(),
        )
        .unwrap();
        reports.push(report);
    }
    assert_ne!(
        reports[0]["meta"]["config_digest"],
        reports[1]["meta"]["config_digest"],
        "digest covers the overridden seed"
    );
    assert_ne!(
        reports[0]["attacks"][0]["records"],
        reports[1]["attacks"][0]["records"],
        "different seeds give different audits"
    );
}

#[test]
fn dp_audit_reports_epsilon() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let mut body = small_config(&out_dir);
    body["target"]["train"]["epochs"] = json!(10);
    body["target"]["train"]["dp"] =
        json!({ "clip_norm": 1.0, "noise_multiplier": 1.2, "delta": 1e-5 });
    let config = write_config(tmp.path(), "config.json", &body);

    let output = privaudit()
        .args(["audit", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("epsilon "), "{}", stdout(&output));

    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    let eps = &report["epsilon"];
    assert!(eps.is_object(), "epsilon block must be present: {eps}");
    assert_eq!(eps["sigma"].as_f64().unwrap(), 1.2);
    // 10 epochs of 20 records in batches of 8: 30 noisy steps
    assert_eq!(eps["steps"].as_u64().unwrap(), 30);
    assert_eq!(eps["method"].as_str().unwrap(), "zcdp-no-subsampling");
    assert!(eps["epsilon"].as_f64().unwrap() > 0.0);
}

#[test]
fn sweep_writes_the_tradeoff_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let mut body = small_config(&out_dir);
    body["target"]["train"]["epochs"] = json!(10);
    body["target"]["train"]["dp"] =
        json!({ "clip_norm": 1.0, "noise_multiplier": 0.0, "delta": 1e-5 });
    body["sweep_sigmas"] = json!([0.5, 1.0]);
    body["threads"] = json!(2);
    let config = write_config(tmp.path(), "config.json", &body);

    let output = privaudit()
        .args(["sweep", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "sigma,epsilon,test_accuracy,auc_population_loss,loss_gap"
    );
    assert_eq!(lines.count(), 2, "one row per sigma");
}

#[test]
fn sweep_without_sigmas_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = small_config(&tmp.path().join("out"));
    body["target"]["train"]["dp"] =
        json!({ "clip_norm": 1.0, "noise_multiplier": 0.0, "delta": 1e-5 });
    let config = write_config(tmp.path(), "config.json", &body);

    let output = privaudit()
        .args(["sweep", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("sweep_sigmas"),
        "{}",
        stderr(&output)
    );
}

#[test]
fn sweep_without_dp_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut body = small_config(&tmp.path().join("out"));
    body["sweep_sigmas"] = json!([0.5, 1.0]);
    let config = write_config(tmp.path(), "config.json", &body);

    let output = privaudit()
        .args(["sweep", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(
        stderr(&output).contains("clip_norm"),
        "{}",
        stderr(&output)
    );
}
