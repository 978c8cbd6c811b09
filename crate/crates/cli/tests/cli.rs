use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rgpssm-cli-{}-{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn rgpssm() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rgpssm"))
}

#[test]
fn run_writes_report_and_trace() {
    let dir = scratch("run");
    let config = dir.join("gpr.cfg");
    fs::write(&config, "task = gprcheck\nseed = 3\ntrain_steps = 12\n").unwrap();
    let out = dir.join("out");
    let status = rgpssm()
        .arg("run")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    let stdout = String::from_utf8_lossy(&status.stdout);
    assert!(stdout.contains("exact GP regression"), "{stdout}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["train_steps"], 12);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 13);
}

#[test]
fn bad_config_fails_with_message() {
    let dir = scratch("bad");
    let config = dir.join("bad.cfg");
    fs::write(&config, "task = gprcheck\nbogus_key = 1\n").unwrap();
    let status = rgpssm()
        .arg("run")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("bogus_key"));
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = scratch("missing");
    let status = rgpssm()
        .args([
            "sysid",
            "--data",
            "/nonexistent/dryer.dat",
            "--dataset-name",
            "dryer",
            "--out",
        ])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(String::from_utf8_lossy(&status.stderr).contains("/nonexistent/dryer.dat"));
}
