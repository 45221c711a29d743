use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn carewatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carewatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> PathBuf {
    let out = carewatch(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    let line = stdout.lines().last().unwrap();
    PathBuf::from(line.strip_prefix("wrote ").expect("run directory line"))
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).expect("machine-readable error")
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn synth_writes_one_file_per_patient() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let dir = run_ok(&[
        "synth",
        "--patients",
        "5",
        "--days",
        "14",
        "--output-dir",
        out,
    ]);
    assert_eq!(
        files(&dir),
        [
            "catalog.csv",
            "manifest.json",
            "p01.csv",
            "p02.csv",
            "p03.csv",
            "p04.csv",
            "p05.csv",
            "profiles.csv"
        ]
    );
    let profiles = fs::read_to_string(dir.join("profiles.csv")).unwrap();
    assert_eq!(profiles.lines().count(), 6);
    let again = run_ok(&[
        "synth",
        "--patients",
        "5",
        "--days",
        "14",
        "--output-dir",
        out,
    ]);
    assert_ne!(dir, again);
    for f in ["p01.csv", "p05.csv", "profiles.csv", "catalog.csv"] {
        assert_eq!(
            fs::read(dir.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn run_report_is_reproducible_and_readable_back() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let args = [
        "run",
        "--n-reps",
        "1",
        "--base-seed",
        "42",
        "--patients",
        "1",
        "--train-span",
        "3h",
        "--val-span",
        "3h",
        "--output-dir",
        out,
    ];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_eq!(
        files(&a),
        [
            "manifest.json",
            "report.csv",
            "report.json",
            "summary.csv",
            "timings.csv"
        ]
    );
    for f in ["report.json", "report.csv", "summary.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["base_seed"], 42);
    assert_eq!(manifest["config"]["n_reps"], 1);
    assert_eq!(manifest["repetition_seeds"].as_array().unwrap().len(), 1);
    assert!(manifest["version"].is_string());
    let flat = fs::read_to_string(a.join("report.csv")).unwrap();
    assert!(flat.starts_with(
        "train_span,val_span,patient_train,patient_val,kind,device,rep,accuracy,tp,tn,fp,fn\n"
    ));

    let r = run_ok(&[
        "report",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "--output-dir",
        out,
    ]);
    let summary = fs::read_to_string(r.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn default_run_has_thirty_repetitions() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_ok(&[
        "run",
        "--patients",
        "1",
        "--epochs",
        "1",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["reports"][0]["repetitions"].as_array().unwrap().len(), 30);
    assert_eq!(v["reports"][0]["anomaly_kind"], "spike");
}

#[test]
fn sweep_covers_the_window_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_ok(&[
        "sweep",
        "--n-reps",
        "1",
        "--patients",
        "1",
        "--epochs",
        "2",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 9);
}

#[test]
fn crossval_writes_square_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_ok(&[
        "crossval",
        "--n-reps",
        "1",
        "--epochs",
        "2",
        "--train-span",
        "3h",
        "--val-span",
        "3h",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let matrix = fs::read_to_string(dir.join("matrix.csv")).unwrap();
    let rows: Vec<&str> = matrix.lines().collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0], "device,train_patient,p01,p02,p03,p04,p05");
    assert!(rows[1..].iter().all(|r| r.split(',').count() == 7));
    let all = fs::read_to_string(dir.join("all_train.csv")).unwrap();
    assert_eq!(all.lines().count(), 6);
}

#[test]
fn bench_reports_every_kind() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = run_ok(&[
        "bench",
        "--n-reps",
        "2",
        "--patients",
        "1",
        "--jobs",
        "4",
        "--output-dir",
        tmp.path().to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(dir.join("bench.csv")).unwrap();
    let kinds: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(kinds, ["on-off", "variance", "spike"]);
    assert!(csv.contains(",26\n") && csv.contains(",11\n") && csv.contains(",0.88\n"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["jobs"], 1);
}

#[test]
fn inject_labels_files_from_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().to_str().unwrap();
    let synth = run_ok(&[
        "synth",
        "--patients",
        "1",
        "--days",
        "1",
        "--output-dir",
        out,
    ]);
    let input = synth.join("p01.csv");
    let args = [
        "inject",
        "--input",
        input.to_str().unwrap(),
        "--kind",
        "on-off",
        "--device",
        "kitchen",
        "--count",
        "3",
        "--output-dir",
        out,
    ];
    let a = run_ok(&args);
    let b = run_ok(&args);
    assert_eq!(
        files(&a),
        [
            "injections.csv",
            "manifest.json",
            "p01.kitchen.labels.csv",
            "p01.kitchen.readings.csv"
        ]
    );
    let readings = fs::read_to_string(a.join("p01.kitchen.readings.csv")).unwrap();
    let original = fs::read_to_string(&input).unwrap();
    assert_eq!(readings.lines().count(), original.lines().count() + 120);
    let labeled = fs::read_to_string(a.join("p01.kitchen.labels.csv")).unwrap();
    assert!(labeled.starts_with("timestamp_ms,device_id,value,is_anomaly\n"));
    assert_eq!(
        labeled.lines().filter(|l| l.ends_with(",true")).count(),
        120
    );
    assert_eq!(
        fs::read(a.join("p01.kitchen.labels.csv")).unwrap(),
        fs::read(b.join("p01.kitchen.labels.csv")).unwrap()
    );
    let fixed = ["--seed", "7", "--burst-len", "4"];
    let c = run_ok(&[&args[..], &fixed].concat());
    let d = run_ok(&[&args[..], &fixed, &["--base-seed", "99"]].concat());
    let labels = fs::read_to_string(c.join("p01.kitchen.labels.csv")).unwrap();
    assert_eq!(labels.lines().filter(|l| l.ends_with(",true")).count(), 12);
    assert_eq!(
        labels,
        fs::read_to_string(d.join("p01.kitchen.labels.csv")).unwrap()
    );
    assert!(fs::read_to_string(c.join("injections.csv"))
        .unwrap()
        .contains(",7,12\n"));
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn errors_are_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("out");
    let out = out_dir.to_str().unwrap();

    let o = carewatch(&[
        "run",
        "--input",
        "/definitely/missing.csv",
        "--output-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(4));
    let e = error_json(&o);
    assert_eq!(e["error"]["kind"], "io");
    assert_eq!(e["error"]["path"], "/definitely/missing.csv");

    let o = carewatch(&["synth", "--train-span", "24x", "--output-dir", out]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"]["field"], "train_span");

    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[windows]\nval = [\"24x\"]\n").unwrap();
    let o = carewatch(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--output-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"]["field"], "windows.val[0]");

    let o = carewatch(&["run", "--n-reps", "0", "--output-dir", out]);
    assert_eq!(error_json(&o)["error"]["field"], "n_reps");

    let o = carewatch(&[
        "run",
        "--kind",
        "spike",
        "--device",
        "kitchen",
        "--output-dir",
        out,
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(error_json(&o)["error"]["field"], "devices");

    let o = carewatch(&["run", "--days", "1", "--patients", "1", "--output-dir", out]);
    assert_eq!(o.status.code(), Some(6));
    assert_eq!(error_json(&o)["error"]["kind"], "insufficient-data");

    // nothing was written by the failed runs
    assert!(!out_dir.exists() || fs::read_dir(&out_dir).unwrap().next().is_none());
}

#[test]
fn dump_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let o = carewatch(&[
        "sweep",
        "--kind",
        "variance",
        "--n-reps",
        "4",
        "--dump-config",
    ]);
    assert!(o.status.success());
    let path = tmp.path().join("c.toml");
    fs::write(&path, &o.stdout).unwrap();
    let again = carewatch(&["sweep", "--config", path.to_str().unwrap(), "--dump-config"]);
    assert_eq!(o.stdout, again.stdout);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("n_reps = 4"));
    assert!(text.contains("kind = \"variance\""));
}
