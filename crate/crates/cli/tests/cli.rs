use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn alber(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alber"))
        .args(args)
        .env_remove("ALBER_THREADS")
        .env("RUST_BACKTRACE", "0")
        .output()
        .expect("spawn alber")
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// The weak-background config shrunk to a few steps on a coarse grid.
fn small_run(dir: &Path, final_time: f64) -> PathBuf {
    let text = fs::read_to_string(configs().join("weak_background.json")).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["N"] = 40.into();
    value["tau"] = 0.01.into();
    value["T"] = final_time.into();
    value["snapshot_stride"] = 2.into();
    value["diag_stride"] = 1.into();
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn evolve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_run(dir.path(), 0.05);
    let out_dir = dir.path().join("out");
    let out = alber(&["evolve", config.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    for name in ["diagnostics.csv", "diagonal.bin", "snapshots.bin", "summary.json"] {
        assert!(out_dir.join(name).exists(), "{name} missing");
    }
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["status"], "ok");
    assert_eq!(summary["steps"], 5);
    let iaf = summary["amplification"]["iaf"].as_f64().unwrap();
    assert!((1.0..1.1).contains(&iaf), "{iaf}");
    let csv = fs::read_to_string(out_dir.join("diagnostics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn zero_final_time_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_run(dir.path(), 0.0);
    let out_dir = dir.path().join("out");
    let out = alber(&["evolve", config.to_str().unwrap(), "--output-dir", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["steps"], 0);
    assert_eq!(summary["amplification"]["iaf"], 1.0);
}

#[test]
fn invalid_config_reports_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_run(dir.path(), 0.05);
    let mut value: serde_json::Value = serde_json::from_str(&fs::read_to_string(&config).unwrap()).unwrap();
    value["tau"] = (-1.0).into();
    fs::write(&config, value.to_string()).unwrap();
    let out = alber(&["evolve", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("field `tau`"), "{}", stderr(&out));

    value.as_object_mut().unwrap().remove("q");
    value["tau"] = 0.01.into();
    fs::write(&config, value.to_string()).unwrap();
    let out = alber(&["evolve", config.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("`q`"), "{}", stderr(&out));
}

#[test]
fn bad_thread_override_fails() {
    let out = Command::new(env!("CARGO_BIN_EXE_alber"))
        .args(["stability", configs().join("stability.json").to_str().unwrap()])
        .env("ALBER_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(stderr(&out).contains("ALBER_THREADS"));
}

#[test]
fn stability_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = alber(&[
        "stability",
        configs().join("stability.json").to_str().unwrap(),
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out);
    assert!(line.starts_with("unstable_harmonics={1,2,3,4}, bandwidth="), "{line}");
    assert!(line.contains("critical_C="));
    let windings = fs::read_to_string(dir.path().join("windings.csv")).unwrap();
    assert_eq!(windings.lines().next().unwrap(), "n,X,winding");
    let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
    assert_eq!(curves.lines().next().unwrap(), "n,X,t,ReS,ImS");
}

#[test]
fn montecarlo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("montecarlo.json")).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value["n_realizations"] = 2.into();
    value["base"]["N"] = 32.into();
    value["base"]["tau"] = 0.05.into();
    value["base"]["T"] = 0.2.into();
    value["base"]["diag_stride"] = 4.into();
    let config = dir.path().join("mc.json");
    fs::write(&config, value.to_string()).unwrap();
    let run = |threads: &str| {
        let out = alber(&["montecarlo", config.to_str().unwrap(), "--threads", threads]);
        assert!(out.status.success(), "{}", stderr(&out));
        stdout(&out)
    };
    let first = run("1");
    assert_eq!(first, run("1"));
    let lines: Vec<&str> = first.lines().collect();
    assert!(lines[0].starts_with("# sampling=stratified"));
    assert!(lines[1].starts_with("index,seed,C,"));
    assert_eq!(lines.len(), 4);
    assert!(lines[2].starts_with("0,") && lines[3].starts_with("1,"));
    assert!(lines[2..].iter().all(|l| l.ends_with(",ok")));
}

#[test]
fn soliton_validate_short_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = alber(&[
        "soliton-validate",
        "--tau",
        "0.01",
        "--h",
        "0.3",
        "--final-time",
        "0.05",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("which,dI0,dI1,dI2,dI3"));
    let errors = fs::read_to_string(dir.path().join("soliton_errors.csv")).unwrap();
    assert_eq!(errors.lines().next().unwrap(), "t,E_u,E_phi,constraint_err");
    assert_eq!(errors.lines().count(), 7);
}

#[test]
fn eoc_space_short_ladder() {
    let out = alber(&["eoc", "--mode", "space", "--init", "advanced", "--final-time", "0.001"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "h,tau,E_u,eoc_u,E_phi,eoc_phi,dI0+dI1,dI2,dI3");
    assert_eq!(lines.len(), 5);
}

#[test]
fn unknown_mode_is_rejected() {
    let out = alber(&["eoc", "--mode", "diagonal"]);
    assert!(!out.status.success());
}
