//! Acceptance criteria 1–10. Each test prints one PASS/FAIL line with the
//! measured quantity and its tolerance on stderr.

use std::io::Write;
use std::time::Instant;

use fkboson::checks::{self, CheckOutcome, FiberParams, MomentParams};
use fkboson::exec::RayonExecutor;

/// Writes straight to stderr so the line shows up without `--nocapture`.
fn emit(line: &str) {
    let _ = writeln!(std::io::stderr(), "{line}");
}

fn report(outcome: &CheckOutcome, started: Instant) {
    emit(&format!("{} [{:.1} s]", outcome.line(), started.elapsed().as_secs_f64()));
    assert!(outcome.passed, "{}", outcome.line());
}

fn exec() -> RayonExecutor {
    RayonExecutor::new(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).unwrap()
}

#[test]
fn criterion_01_fock_algebra() {
    let t = Instant::now();
    report(&checks::fock_algebra(200, 1), t);
}

#[test]
fn criterion_02_van_hove() {
    let t = Instant::now();
    report(&checks::van_hove(&checks::default_van_hove_cases(), 14), t);
}

#[test]
fn criterion_03_bridge_moments() {
    let t = Instant::now();
    report(&checks::bridge_moments(&MomentParams::default(), &exec()), t);
}

#[test]
fn criteria_04_06_fiber_and_norm_bound() {
    let t = Instant::now();
    let (c4, c6) = checks::fiber_feynman_kac(&FiberParams::default(), &FiberParams { n_paths: 20_000, steps: 128, seed: 12 }, &exec());
    emit(&format!("{} [{:.1} s]", c4.line(), t.elapsed().as_secs_f64()));
    emit(&c6.line());
    assert!(c4.passed && c6.passed);
}

#[test]
fn criterion_05_closed_form_truncation() {
    let t = Instant::now();
    report(&checks::closed_form_truncation(&[4, 6, 8, 10], 256, &exec()), t);
}

#[test]
fn criterion_07_time_reversal() {
    let t = Instant::now();
    let spin = checks::spin_model(fkboson_core::potential::Potential::Polynomial(vec![0.1, 0.0, 0.3]), 0.5, 0.7, 3);
    report(&checks::time_reversal(&checks::scalar_reversal_model(), &spin, 200, &[32, 64, 128], 3, &exec()), t);
}

#[test]
fn criterion_08_series_vs_sde() {
    let t = Instant::now();
    let spin = checks::spin_model(fkboson_core::potential::Potential::Zero, 0.5, 0.5, 8);
    report(&checks::series_vs_sde(Some(&checks::nelson_model()), Some(&spin), 6, &[16, 32, 64], 64, 9), t);
}

#[test]
fn criterion_09_kernel_symmetry_and_semigroup() {
    let t = Instant::now();
    report(&checks::kernel_and_semigroup(&[32, 64, 128], 200, 10_000, 21, &exec()), t);
}

fn results_bytes(cfg: &fkboson::config::RunConfig, command: fkboson::commands::Command, workers: usize) -> Vec<u8> {
    let exec = RayonExecutor::new(workers).unwrap();
    let out = fkboson::commands::run(command, cfg, &exec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    out.write(cfg, dir.path()).unwrap();
    std::fs::read(dir.path().join("results.json")).unwrap()
}

#[test]
fn criterion_10_determinism() {
    use fkboson::commands::Command;
    let t = Instant::now();
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/spin_toy.toml");
    let mut cfg = fkboson::config::RunConfig::load(&path).unwrap();
    cfg.mc.n_paths = 2_000;
    cfg.grid.steps = 32;
    cfg.semigroup.n_paths = 1_000;
    let mut worst = String::new();
    let mut identical = true;
    for command in [Command::FiberMc, Command::ReversalCheck] {
        let runs: Vec<Vec<u8>> = [1, 4, 1, 4].into_iter().map(|w| results_bytes(&cfg, command, w)).collect();
        if runs.windows(2).any(|w| w[0] != w[1]) {
            identical = false;
            worst = command.name().to_string();
        }
    }
    let line = format!(
        "criterion 10: {} determinism: results.json byte-identical across reruns and workers {{1, 4}} for fiber-mc and reversal-check{}",
        if identical { "PASS" } else { "FAIL" },
        if identical { String::new() } else { format!(" (differs: {worst})") }
    );
    emit(&format!("{line} [{:.1} s]", t.elapsed().as_secs_f64()));
    assert!(identical, "{line}");
}
