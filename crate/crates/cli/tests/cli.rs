use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cadrx_cli::{overlay, run_config};
use cadrx_core::{Prescription, RunConfig};

fn cadrx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadrx"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cadrx(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn synth_is_deterministic_and_writes_an_oracle() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--n", "300", "--seed", "4", "--out", "a.csv"]);
    ok(
        d.path(),
        &[
            "synth",
            "--n",
            "300",
            "--seed",
            "4",
            "--out",
            "b.csv",
            "--oracle",
            "b-oracle.json",
        ],
    );
    assert_eq!(
        fs::read(d.path().join("a.csv")).unwrap(),
        fs::read(d.path().join("b.csv")).unwrap()
    );
    assert!(d.path().join("a.oracle.json").exists());
    assert_eq!(
        fs::read(d.path().join("a.oracle.json")).unwrap(),
        fs::read(d.path().join("b-oracle.json")).unwrap()
    );
    ok(d.path(), &["synth", "--n", "300", "--seed", "5", "--out", "c.csv"]);
    assert_ne!(
        fs::read(d.path().join("a.csv")).unwrap(),
        fs::read(d.path().join("c.csv")).unwrap()
    );
}

#[test]
fn train_then_prescribe_covers_every_test_patient() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["synth", "--n", "800", "--seed", "2", "--out", "c.csv"]);
    let text = ok(
        p,
        &["train", "--data", "c.csv", "--out", "bank", "--min-arm-size", "20"],
    );
    assert!(text.contains("boosted_trees"));
    assert!(p.join("bank/manifest.json").exists() && p.join("bank/cohort.csv").exists());

    ok(
        p,
        &["--format", "json", "prescribe", "--bank", "bank", "--out", "rx.json"],
    );
    let rx: Vec<Prescription> = serde_json::from_slice(&fs::read(p.join("rx.json")).unwrap()).unwrap();
    let prepared = fs::read_to_string(p.join("bank/cohort.csv")).unwrap();
    let n_test = prepared.lines().filter(|l| l.ends_with(",test")).count();
    assert_eq!(rx.len(), n_test);
    assert!(rx
        .iter()
        .all(|r| (1..=5).contains(&r.dmla) && r.per_model_estimates.len() == 5));

    let csv = ok(p, &["--format", "csv", "prescribe", "--bank", "bank"]);
    assert_eq!(csv.lines().count(), n_test + 1);
    assert!(csv.starts_with("patient_id,recommendation,expected_tae_years,dmla,"));

    let report = ok(
        p,
        &[
            "evaluate",
            "--bank",
            "bank",
            "--prescriptions",
            "rx.json",
            "--oracle",
            "c.oracle.json",
            "--out",
            "r.json",
        ],
    );
    assert!(report.contains("ML4CAD") && report.contains("regret"));
    let csv = ok(
        p,
        &[
            "--format",
            "csv",
            "evaluate",
            "--bank",
            "bank",
            "--prescriptions",
            "rx.json",
        ],
    );
    assert!(csv.lines().next().unwrap().contains(','));
}

#[test]
fn validate_censoring_writes_pairs() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--n", "600", "--seed", "3", "--out", "c.csv"]);
    let text = ok(
        d.path(),
        &[
            "validate-censoring",
            "--data",
            "c.csv",
            "--k",
            "10",
            "--out",
            "pairs.csv",
        ],
    );
    assert!(text.starts_with("k = 10; R² = "));
    let pairs = fs::read_to_string(d.path().join("pairs.csv")).unwrap();
    assert_eq!(
        pairs.lines().next().unwrap(),
        "id,censor_time_days,true_tae_days,imputed_tae_days"
    );
}

#[test]
fn bad_rows_are_reported_with_line_numbers() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--n", "50", "--seed", "1", "--out", "c.csv"]);
    let body = fs::read_to_string(d.path().join("c.csv")).unwrap();
    let header = body.lines().next().unwrap();
    let age_col = header.split(',').position(|c| c == "age").unwrap();
    let mut lines: Vec<String> = body.lines().map(str::to_string).collect();
    let mut cells: Vec<&str> = lines[3].split(',').collect();
    cells[age_col] = "-7";
    lines[3] = cells.join(",");
    fs::write(d.path().join("bad.csv"), lines.join("\n") + "\n").unwrap();

    let out = cadrx(d.path(), &["impute", "--data", "bad.csv", "--out", "x.csv"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid rows") && err.contains("line 4"), "{err}");
}

#[test]
fn missing_files_give_actionable_errors() {
    let d = tempfile::tempdir().unwrap();
    let out = cadrx(d.path(), &["prescribe", "--bank", "nowhere"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error: ") && err.contains("nowhere"), "{err}");
}

#[test]
fn config_file_overrides_flags_and_rejects_unknown_keys() {
    let d = tempfile::tempdir().unwrap();
    let path = d.path().join("run.toml");
    fs::write(
        &path,
        "seed = 11\n[censoring]\nk = 7\n[service]\nbind = \"0.0.0.0:1\"\n",
    )
    .unwrap();
    let flags = RunConfig {
        seed: 3,
        min_arm_size: 40,
        ..RunConfig::default()
    };
    let c = run_config(flags, Some(&path)).unwrap();
    assert_eq!((c.seed, c.censoring.k, c.min_arm_size), (11, Some(7), 40));
    assert_eq!(c.censoring.folds, RunConfig::default().censoring.folds);

    fs::write(&path, "seed = 1\nsede = 2\n").unwrap();
    let err = format!("{:#}", run_config(RunConfig::default(), Some(&path)).unwrap_err());
    assert!(err.contains("sede"), "{err}");
    fs::write(&path, "feature_k = 0\n").unwrap();
    assert!(run_config(RunConfig::default(), Some(&path)).is_err());
}

#[test]
fn config_file_can_drive_a_whole_run() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(
        p.join("run.toml"),
        r#"seed = 5
min_arm_size = 20

[synth]
n = 700
seed = 5
logging_policy = { kind = "uniform" }

[paths]
data = "cohort.csv"
oracle = "truth.json"
bank = "bank"
prescriptions = "rx.json"
report = "report.json"
"#,
    )
    .unwrap();
    // The file wins over --n.
    ok(p, &["--config", "run.toml", "synth", "--n", "50"]);
    assert_eq!(fs::read_to_string(p.join("cohort.csv")).unwrap().lines().count(), 701);
    assert!(p.join("truth.json").exists());
    ok(p, &["--config", "run.toml", "train"]);
    ok(p, &["--config", "run.toml", "prescribe"]);
    ok(p, &["--config", "run.toml", "evaluate"]);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(p.join("report.json")).unwrap()).unwrap();
    assert!(report["regret"].is_array());

    let out = cadrx(p, &["train"]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        !out.status.success() && err.contains("--data") && err.contains("paths.data"),
        "{err}"
    );
}

#[test]
fn overlay_merges_tables_and_replaces_leaves() {
    let mut base = serde_json::json!({"a": 1, "t": {"x": 1, "y": [1, 2]}});
    overlay(&mut base, serde_json::json!({"t": {"y": [3]}, "b": true}));
    assert_eq!(base, serde_json::json!({"a": 1, "t": {"x": 1, "y": [3]}, "b": true}));
}
