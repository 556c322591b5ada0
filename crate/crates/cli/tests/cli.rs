use std::path::Path;
use std::process::{Command, Output};

const TINY: &[&str] = &[
    "input_len=32",
    "horizon=8",
    "horizons=[8,16]",
    "patch_len=8",
    "stride=4",
    "d_model=8",
    "levels=2",
    "epochs=2",
    "lr=1e-3",
    "synthetic_length=400",
    "dataset=\"level_shift\"",
];

fn umixer(out: &Path, extra: &[&str], args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_umixer"));
    cmd.env_remove("UMIXER_OUT_DIR").env("RUST_LOG", "warn");
    cmd.args(args).arg("--out").arg(out);
    for s in TINY.iter().chain(extra) {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_input(path: &Path, rows: usize) {
    let mut text = String::from("date,a,b,c\n");
    for t in 0..rows {
        let x = t as f64;
        text.push_str(&format!("{t},{},{},{}\n", (x / 5.0).sin(), (x / 7.0).cos(), 0.01 * x));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn train_writes_checkpoints_history_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = umixer(dir.path(), &[], &["train"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "checkpoint_h8.bin",
        "checkpoint_h16.bin",
        "history_h8.jsonl",
        "history_h16.jsonl",
        "config.toml",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let history = std::fs::read_to_string(dir.path().join("history_h8.jsonl")).unwrap();
    assert_eq!(history.lines().count(), 2);
    let snapshot = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert!(snapshot.contains("d_model = 8"));
}

#[test]
fn unknown_keys_exit_2_and_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = umixer(dir.path(), &["patch_lenght=4", "levles=1"], &["train"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("patch_lenght") && err.contains("levles"), "{err}");
}

#[test]
fn config_file_is_overridden_by_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "epochs = 1\nlevels = 5\n").unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_umixer"))
        .args(["train", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(TINY.iter().flat_map(|s| ["--set", s]))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let snapshot = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(snapshot.contains("levels = 2") && snapshot.contains("epochs = 2"), "{snapshot}");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert!(umixer(d.path(), &["dropout=0.1"], &["train"]).status.success());
        let o = umixer(d.path(), &["dropout=0.1"], &["evaluate"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["checkpoint_h8.bin", "checkpoint_h16.bin", "metrics.json", "metrics.csv", "history_h8.jsonl"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        if f.starts_with("history") {
            // Per-epoch wall-clock time is the one field allowed to differ.
            let strip = |s: &[u8]| -> Vec<serde_json::Value> {
                String::from_utf8_lossy(s)
                    .lines()
                    .map(|l| {
                        let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
                        v.as_object_mut().unwrap().remove("wall_ms");
                        v
                    })
                    .collect()
            };
            assert_eq!(strip(&x), strip(&y));
        } else {
            assert_eq!(x, y, "{f} differs between runs");
        }
    }
    let table: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 2);
    assert!(table["avg"]["mse"].as_f64().unwrap().is_finite());
}

#[test]
fn evaluate_refuses_a_mismatched_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(umixer(dir.path(), &[], &["train"]).status.success());
    let o = umixer(dir.path(), &["levels=1"], &["evaluate"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("config fingerprint") && err.contains("checkpoint fingerprint"), "{err}");
}

#[test]
fn evaluate_reports_corrupt_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(umixer(dir.path(), &["horizons=[8]"], &["train"]).status.success());
    let p = dir.path().join("checkpoint_h8.bin");
    let mut bytes = std::fs::read(&p).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&p, bytes).unwrap();
    let o = umixer(dir.path(), &["horizons=[8]"], &["evaluate"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn forecast_shapes_errors_and_repeatability() {
    let dir = tempfile::tempdir().unwrap();
    assert!(umixer(dir.path(), &["horizons=[8]"], &["train"]).status.success());
    let input = dir.path().join("input.csv");
    write_input(&input, 50);

    let o = umixer(dir.path(), &["horizons=[8]"], &["forecast", "--input", input.to_str().unwrap(), "--truth", input.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("forecast.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 8);
    assert_eq!(lines[0], "date,a,b,c");
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
    let plot: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("plot.json")).unwrap()).unwrap();
    assert_eq!(plot["history"][0].as_array().unwrap().len(), 32);
    assert_eq!(plot["forecast"][2].as_array().unwrap().len(), 8);
    assert_eq!(plot["truth"][1].as_array().unwrap().len(), 8);

    let first = std::fs::read(dir.path().join("forecast.csv")).unwrap();
    assert!(umixer(dir.path(), &["horizons=[8]"], &["forecast", "--input", input.to_str().unwrap()]).status.success());
    assert_eq!(first, std::fs::read(dir.path().join("forecast.csv")).unwrap());

    let short = dir.path().join("short.csv");
    write_input(&short, 31);
    let o = umixer(dir.path(), &["horizons=[8]"], &["forecast", "--input", short.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("input_len = 32"), "{}", stderr(&o));
}

#[test]
fn sweep_emits_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = umixer(dir.path(), &["epochs=1", "d_model=4"], &["sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 5 * 4);
    let timing = std::fs::read_to_string(dir.path().join("sweep_timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 1 + 5 * 4);
}

#[test]
fn ablation_writes_all_variants() {
    let dir = tempfile::tempdir().unwrap();
    let o = umixer(dir.path(), &["epochs=1", "ablation_seeds=[1,2]"], &["ablate"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    for v in ["full", "wo_ue", "wo_sc"] {
        assert_eq!(csv.lines().filter(|l| l.starts_with(&format!("{v},"))).count(), 3);
    }
}

#[test]
fn gradcheck_and_selftest_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = umixer(dir.path(), &["dropout=0.0", "gradcheck_max_entries=16"], &["gradcheck"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(true));

    let o = umixer(dir.path(), &[], &["selftest"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 5);
}

#[test]
fn missing_dataset_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = umixer(dir.path(), &["dataset_kind=\"long_csv\"", "dataset=\"/nonexistent/x.csv\""], &["train"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
