use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.json")
}

fn prefir(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prefir"))
        .arg("--config")
        .arg(smoke_config())
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("PREFIR_OUT")
        .output()
        .expect("spawn prefir")
}

fn ok(out: &Path, args: &[&str]) {
    let o = prefir(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
}

fn err(out: &Path, args: &[&str]) -> String {
    let o = prefir(out, args);
    assert!(!o.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn evaluate_without_network_names_train_net() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-dataset"]);
    let msg = err(dir.path(), &["evaluate"]);
    assert!(msg.contains("train-net"), "{msg}");
}

#[test]
fn sweep_csv_has_exact_columns() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["compensate-sweep"]);
    let text = std::fs::read_to_string(dir.path().join("reports/sweep.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "epsilon,per,throughput_norm,evm,seed");
    assert_eq!(text.lines().count(), 1 + 6);
}

#[test]
fn changed_config_makes_upstream_artifacts_stale() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-dataset"]);
    let msg = err(dir.path(), &["--seed-override", "99", "train-net"]);
    assert!(msg.contains("stale") && msg.contains("gen-dataset"), "{msg}");
}

#[test]
fn modified_artifact_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-dataset"]);
    std::fs::write(dir.path().join("datasets/index.json"), "{}").unwrap();
    let msg = err(dir.path(), &["train-net"]);
    assert!(msg.contains("changed"), "{msg}");
}

#[test]
fn report_refuses_mixed_configs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--seed-override", "1", "compensate-sweep"]);
    ok(dir.path(), &["--seed-override", "2", "gen-dataset"]);
    let msg = err(dir.path(), &["--seed-override", "2", "report"]);
    assert!(msg.contains("different config") && msg.contains("reports/sweep.csv"), "{msg}");
}

#[test]
fn thread_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(a.path(), &["--jobs", "1", "compensate-sweep"]);
    ok(b.path(), &["--jobs", "3", "compensate-sweep"]);
    let read = |d: &Path| std::fs::read(d.join("reports/sweep.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_prefir"))
        .arg("--config")
        .arg(smoke_config())
        .arg("compensate-sweep")
        .env("PREFIR_OUT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn unknown_config_field_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"seed": 1, "devcies": 4}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_prefir"))
        .arg("--config")
        .arg(&cfg)
        .arg("show-config")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("devcies"));
}

#[test]
fn device_selector_extends_existing_taps() {
    let dir = tempfile::tempdir().unwrap();
    for c in ["gen-dataset", "train-net"] {
        ok(dir.path(), &[c]);
    }
    ok(dir.path(), &["optimize-ncg", "--device", "1"]);
    let taps = dir.path().join("taps/ncg");
    assert!(taps.join("dev1_rec0.json").exists());
    assert!(!taps.join("dev0_rec0.json").exists());
    ok(dir.path(), &["optimize-ncg", "--device", "0"]);
    assert!(taps.join("dev0_rec0.json").exists() && taps.join("dev1_rec0.json").exists());
    let msg = err(dir.path(), &["optimize-ncg", "--device", "9"]);
    assert!(msg.contains("out of range"), "{msg}");
}
