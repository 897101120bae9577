use std::process::Command;

fn tinker() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tinker"))
}

#[test]
fn validate_scripts_reports_all_valid() {
    let out = tinker().arg("validate-scripts").output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert!(stdout.contains("all scripts valid"));
}

#[test]
fn simulate_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    let report = dir.path().join("report");
    let out = tinker()
        .args(["simulate", "--persona", "cooperative", "--count", "2", "--out"])
        .arg(&logs)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}");
    assert_eq!(stdout.matches("audit ok").count(), 4, "{stdout}");

    let out = tinker().arg("analyze").arg(&logs).arg("--out").arg(&report).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!String::from_utf8_lossy(&out.stdout).is_empty());
    assert!(std::fs::read_dir(&report).unwrap().count() > 0);
}

#[test]
fn unknown_persona_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = tinker()
        .args(["simulate", "--persona", "no-such-persona", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
}
