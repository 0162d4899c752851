use std::path::Path;
use std::process::{Command, Output};

fn fkboson(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fkboson"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("FKBOSON_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn vanhove_passes_and_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkboson(&["vanhove"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("results.json")).unwrap()).unwrap();
    assert_eq!(doc["status"], "pass");
    assert_eq!(doc["command"], "vanhove");
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[grid]\nstepz = 4\n");
    let o = fkboson(&["fiber-mc", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stepz"));
    assert!(!dir.path().join("out/results.json").exists());
}

#[test]
fn invalid_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkboson(&["fiber-mc", "--paths", "1"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mc.n_paths"));
}

#[test]
fn usage_errors_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = fkboson(&["fiber-mc", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unchecked_bias_is_a_statistical_failure() {
    // ν = 2 has no exact bias, so the coarse Euler–Maruyama bias is exposed
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "[physics]\nnu = 2\nxi = [0.0, 0.0]\n[kernel]\nx = [0.0, 0.0]\ny = [0.0, 0.0]\n[estimator]\nscheme = \"euler-maruyama\"\n[grid]\nsteps = 2\n[mc]\nn_paths = 20000\n[semigroup]\nn_paths = 100\n",
    );
    let o = fkboson(&["fiber-mc", "--config", &cfg], &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/results.json")).unwrap()).unwrap();
    assert_eq!(doc["status"], "statistical-failure");
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["fiber-mc", "--scheme", "euler-maruyama", "--paths", "3000", "--steps", "32", "--seed", "5"];
    let a = dir.path().join("w1");
    let b = dir.path().join("w4");
    let mut one = args.to_vec();
    one.extend(["--workers", "1"]);
    let mut four = args.to_vec();
    four.extend(["--workers", "4"]);
    assert_eq!(fkboson(&one, &a).status.code(), Some(0));
    assert_eq!(fkboson(&four, &b).status.code(), Some(0));
    assert_eq!(std::fs::read(a.join("results.json")).unwrap(), std::fs::read(b.join("results.json")).unwrap());
    assert_eq!(std::fs::read(a.join("tables/fiber_estimate.csv")).unwrap(), std::fs::read(b.join("tables/fiber_estimate.csv")).unwrap());
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_fkboson")).arg("vanhove").env("FKBOSON_OUT", &target).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("results.json").exists());
}
