use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lab"))
        .args(args)
        .env_remove("LAB_PORT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("run lab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn final_hash(out: &str) -> String {
    out.lines()
        .find_map(|l| l.strip_prefix("final hash "))
        .expect("final hash line")
        .to_string()
}

const SCRIPT: &str = r#"[
  {"t": 0.0, "pos": [0.0, 0.0, 0.0]},
  {"t": 0.5, "pos": [0.03, 0.0, 0.0]},
  {"t": 1.0, "pos": [-0.02, 0.01, 0.0], "button": false},
  {"t": 2.0, "pos": [0.0, 0.0, 0.0]}
]"#;

#[test]
fn gain_table() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(
        dir.path(),
        "scores.csv",
        "student,group,test2,test3\na1,A,50,59.1\nb1,B,80,78\nb2,B,100,100\n",
    );
    let out = lab(&["gain", "--csv", &csv]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let a = text.lines().find(|l| l.starts_with("A ")).unwrap();
    assert!(a.contains("0.1820"), "{a}");
    let b = text.lines().find(|l| l.starts_with("B ")).unwrap();
    assert!(b.contains("-0.1000") && b.contains("per-student"), "{b}");

    let out = lab(&["gain", "--csv", &csv, "--agg", "group-mean"]);
    assert!(stdout(&out).contains("group-mean"));
}

#[test]
fn gain_rejects_bad_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "bad.csv", "student,group,test2,test3\na1,A,50,105\n");
    let out = lab(&["gain", "--csv", &csv]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let empty = write(dir.path(), "empty.csv", "");
    assert!(!lab(&["gain", "--csv", &empty]).status.success());
}

#[test]
fn scripted_run_records_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "push.json", SCRIPT);
    let log = dir.path().join("run.lablog");
    let log = log.to_str().unwrap();
    let device = format!("script:{script}");

    let out = lab(&["run", "--scenario", "friction", "--device", &device, "--ticks", "1500", "--record", log]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = stdout(&out);
    assert!(first.contains("ticks 1500"));
    assert!(first.contains("recorded 1500 ticks"));

    let again = lab(&["run", "--scenario", "friction", "--device", &device, "--ticks", "1500"]);
    assert_eq!(final_hash(&first), final_hash(&stdout(&again)));

    let verify = lab(&["replay", "--in", log, "--verify"]);
    assert!(verify.status.success());
    assert!(stdout(&verify).contains("match true"));

    let replayed = lab(&["replay", "--in", log]);
    assert_eq!(final_hash(&stdout(&replayed)), final_hash(&first));

    let from_log = lab(&["run", "--scenario", "friction", "--device", &format!("replay:{log}")]);
    assert_eq!(final_hash(&stdout(&from_log)), final_hash(&first));
}

#[test]
fn script_end_stops_early() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "push.json", SCRIPT);
    let out = lab(&["run", "--scenario", "coriolis", "--device", &format!("script:{script}"), "--ticks", "5000"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("stop end of input"), "{text}");
    assert!(text.contains("ticks 2001"), "{text}");
}

#[test]
fn tampered_log_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let script = write(dir.path(), "push.json", SCRIPT);
    let log = dir.path().join("run.lablog");
    let out = lab(&[
        "run",
        "--device",
        &format!("script:{script}"),
        "--ticks",
        "800",
        "--record",
        log.to_str().unwrap(),
        "--set",
        "friction.theta_deg=0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[401]).unwrap();
    rec["samples"][0]["pos"][0] = serde_json::json!(0.05);
    lines[401] = rec.to_string();
    std::fs::write(&log, lines.join("\n") + "\n").unwrap();

    let verify = lab(&["replay", "--in", log.to_str().unwrap(), "--verify"]);
    assert!(!verify.status.success());
    assert!(stdout(&verify).contains("first divergent tick 400"), "{}", stdout(&verify));
}

#[test]
fn config_errors_are_all_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "lab.toml",
        "[friction]\nmu_s = 0.5\nmu_k = 0.7\n[coupling]\nk = -1\n[bogus]\nkey = 1\n",
    );
    let out = lab(&["run", "--config", &cfg, "--device", "script:nowhere.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("friction.mu_k") || err.contains("friction.mu_s"), "{err}");
    assert!(err.contains("coupling.k"), "{err}");
    assert!(err.contains("bogus.key"), "{err}");
}

#[test]
fn unknown_device_kind_is_an_error() {
    let out = lab(&["run", "--device", "joystick"]);
    assert!(!out.status.success());
}
