use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dunkl-entropy"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dunkl-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str], config: &Path) -> Output {
    bin().args(args).arg("--config").arg(config).output().unwrap()
}

#[test]
fn passing_fixture_prints_versioned_json() {
    let out = run(&["cubature"], &fixture("c01_cubature.toml"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["schema_version"], 1);
    assert_eq!(doc["command"], "cubature");
    assert_eq!(doc["status"], "ok");
    assert!(doc["checks"].as_array().unwrap().iter().all(|c| c["passed"] == true));
}

#[test]
fn failed_assertion_exits_with_two() {
    let out = run(&["rate"], &fixture("c10_rate.toml"));
    assert_eq!(out.status.code(), Some(2));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["status"], "assertion_failed");
    assert!(String::from_utf8_lossy(&out.stderr).contains("assertion failed"));
}

#[test]
fn invalid_configs_exit_with_one_and_name_the_problem() {
    let dir = scratch("invalid");
    let cases = [
        ("unknown.toml", "command = \"cubature\"\nd = 2\nbogus = 1\n", "bogus"),
        ("kappa.toml", "command = \"cubature\"\nd = 2\nkappa = [-0.5, 1.0]\n[cubature]\ndegree = 4\n", "multiplicities"),
        ("mismatch.toml", "command = \"mz\"\nd = 2\n[cubature]\ndegree = 4\n", "cubature"),
        ("rate.toml", "command = \"rate\"\nd = 2\n[sobolev]\nr = 0.1\np = 1\nq = 2\n", "r"),
    ];
    for (name, text, needle) in cases {
        let path = dir.join(name);
        std::fs::write(&path, text).unwrap();
        let cmd = text.lines().next().unwrap().split('"').nth(1).unwrap();
        let sub = if name == "mismatch.toml" { "cubature" } else { cmd };
        let out = run(&[sub], &path);
        let err = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(1), "{name}: {err}");
        assert!(err.contains("invalid configuration") && err.contains(needle), "{name}: {err}");
        assert!(out.stdout.is_empty());
    }
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn missing_config_exits_with_one() {
    let out = bin().arg("nodes").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_needs_an_output_directory() {
    let out = run(&["nodes", "--csv"], &fixture("c12_roots.toml"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn out_dir_receives_json_csv_and_metadata() {
    let dir = scratch("files");
    let out = run(&["ball-entropy", "--csv", "--out", dir.to_str().unwrap()], &fixture("c08_reduction.toml"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    for f in ["ball-entropy.json", "ball-entropy.csv", "ball-entropy.meta.json"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.join("ball-entropy.csv")).unwrap();
    assert!(csv.lines().count() > 1);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn seed_override_is_recorded() {
    let out = run(&["nodes", "--seed", "99"], &fixture("c12_roots.toml"));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["seed"], 99);
}
