//! Command dispatch and artifact writing.
//!
//! A run produces a [`RunOutput`]; [`RunOutput::write`] lays it out as
//! `results.json`, `tables/*.csv` and `plotdata/*.csv`. Nothing that depends
//! on the worker count or wall clock goes into `results.json`.

use std::fmt;
use std::path::Path;

use fkboson_core::basic_processes::Flavor;
use fkboson_core::feynman_kac::{
    convergence_sweep, estimate_fiber_matrix_element, estimate_kernel, exact_scheme_bias, semigroup_property_check, FiberMode, FiberSpec, KernelSpec, PathExecutor,
};
use fkboson_core::fock::{TruncatedFock, DEFAULT_DIM_CAP};
use fkboson_core::linalg::max_abs;
use fkboson_core::modespace::{is_nelson, CouplingFamily};
use fkboson_core::spin_sde::Scheme;
use serde_json::{json, Value};

use crate::checks::{self, CheckOutcome, FiberParams, MomentParams, StudyModel, NORM_BOUND_C, ROUNDING_SLACK};
use crate::config::{ConfigError, RunConfig};
use crate::io::{matrix_table, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    FiberMc,
    KernelMc,
    BridgeMoments,
    SeriesVsSde,
    ReversalCheck,
    Vanhove,
    Sweep,
    Selftest,
}

impl Command {
    pub const ALL: [Command; 8] = [
        Command::FiberMc,
        Command::KernelMc,
        Command::BridgeMoments,
        Command::SeriesVsSde,
        Command::ReversalCheck,
        Command::Vanhove,
        Command::Sweep,
        Command::Selftest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::FiberMc => "fiber-mc",
            Command::KernelMc => "kernel-mc",
            Command::BridgeMoments => "bridge-moments",
            Command::SeriesVsSde => "series-vs-sde",
            Command::ReversalCheck => "reversal-check",
            Command::Vanhove => "vanhove",
            Command::Sweep => "sweep",
            Command::Selftest => "selftest",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 4,
            RunError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "config error: {e}"),
            RunError::Numerical(e) => write!(f, "numerical failure: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<fkboson_core::Error> for RunError {
    fn from(e: fkboson_core::Error) -> Self {
        match e {
            fkboson_core::Error::Config(m) => RunError::Config(ConfigError { field: "model".into(), message: m }),
            other => RunError::Numerical(other.to_string()),
        }
    }
}

/// Everything a command produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub command: Command,
    pub checks: Vec<CheckOutcome>,
    pub results: Value,
    pub tables: Vec<Table>,
    pub plotdata: Vec<Table>,
}

impl RunOutput {
    /// 0 when every check passed, 3 if a deterministic check failed, else 2.
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().any(|c| !c.passed && !c.statistical) {
            3
        } else if self.checks.iter().any(|c| !c.passed) {
            2
        } else {
            0
        }
    }

    fn status(&self) -> &'static str {
        match self.exit_code() {
            0 => "pass",
            2 => "statistical-failure",
            _ => "numerical-failure",
        }
    }

    /// The `results.json` document.
    pub fn document(&self, cfg: &RunConfig) -> Value {
        let checks: Vec<Value> = self
            .checks
            .iter()
            .map(|c| json!({ "id": c.id, "title": c.title, "passed": c.passed, "statistical": c.statistical, "detail": c.detail, "data": c.data }))
            .collect();
        json!({
            "command": self.command.name(),
            "config": cfg.echo(),
            "config_hash": cfg.content_hash(),
            "status": self.status(),
            "checks": checks,
            "results": self.results,
        })
    }

    pub fn write(&self, cfg: &RunConfig, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.json"), serde_json::to_string_pretty(&self.document(cfg))? + "\n")?;
        let all_tables = self.tables.iter().chain(self.checks.iter().flat_map(|c| &c.tables));
        for t in all_tables {
            t.write(&dir.join("tables"))?;
        }
        for t in &self.plotdata {
            t.write(&dir.join("plotdata"))?;
        }
        Ok(())
    }
}

/// `results.json` for a run that stopped on a numerical failure.
pub fn failure_document(command: Command, cfg: &RunConfig, err: &RunError) -> Value {
    json!({
        "command": command.name(),
        "config": cfg.echo(),
        "config_hash": cfg.content_hash(),
        "status": "numerical-failure",
        "error": err.to_string(),
        "checks": [],
        "results": Value::Null,
    })
}

fn output(command: Command, checks: Vec<CheckOutcome>, results: Value, tables: Vec<Table>, plotdata: Vec<Table>) -> RunOutput {
    RunOutput { command, checks, results, tables, plotdata }
}

/// Validates `cfg` for `command` and runs it.
pub fn run<E: PathExecutor>(command: Command, cfg: &RunConfig, exec: &E) -> Result<RunOutput, RunError> {
    cfg.validate(command.name())?;
    match command {
        Command::FiberMc => fiber_mc(cfg, exec),
        Command::KernelMc => kernel_mc(cfg, exec),
        Command::BridgeMoments => Ok(bridge_moments(cfg, exec)),
        Command::SeriesVsSde => series_vs_sde(cfg),
        Command::ReversalCheck => reversal(cfg, exec),
        Command::Vanhove => Ok(vanhove(cfg)),
        Command::Sweep => sweep(cfg, exec),
        Command::Selftest => Ok(selftest(cfg, exec)),
    }
}

fn scheme(cfg: &RunConfig) -> Scheme {
    match cfg.estimator.scheme.as_str() {
        "euler-maruyama" => Scheme::EulerMaruyama,
        _ => Scheme::Splitting,
    }
}

fn fiber_mode(cfg: &RunConfig) -> FiberMode {
    if cfg.estimator.mode == "closed-form" {
        let flavor = if cfg.estimator.flavor == "ito" { Flavor::ItoLeft } else { Flavor::Midpoint };
        FiberMode::ClosedForm { flavor, series_order: cfg.series.n_max }
    } else {
        FiberMode::SdeOnTruncated { scheme: scheme(cfg) }
    }
}

fn fock_for(coupling: &CouplingFamily, n: usize) -> Result<TruncatedFock, RunError> {
    TruncatedFock::with_cap(coupling.modes(), n, coupling.spin_dim(), DEFAULT_DIM_CAP)
        .map_err(|e| RunError::Config(ConfigError { field: "fock.max_bosons".into(), message: e.to_string() }))
}

fn fiber_spec(cfg: &RunConfig) -> Result<FiberSpec, RunError> {
    let model = cfg.model()?;
    let (g, h) = cfg.vectors(model.coupling.modes().mode_count())?;
    Ok(FiberSpec {
        coupling: model.coupling,
        xi: cfg.physics.xi.clone(),
        potential: model.potential,
        g,
        h,
        grid: cfg.grid()?,
        n_paths: cfg.mc.n_paths,
        seed: cfg.mc.seed,
        antithetic: cfg.mc.antithetic,
    })
}

fn study_model(cfg: &RunConfig) -> Result<StudyModel, RunError> {
    let s = fiber_spec(cfg)?;
    Ok(StudyModel { coupling: s.coupling, xi: s.xi, potential: s.potential, g: s.g, h: s.h, horizon: cfg.grid.horizon, max_bosons: cfg.fock.max_bosons })
}

fn fiber_mc<E: PathExecutor>(cfg: &RunConfig, exec: &E) -> Result<RunOutput, RunError> {
    let spec = fiber_spec(cfg)?;
    let fock = fock_for(&spec.coupling, cfg.fock.max_bosons)?;
    let mode = fiber_mode(cfg);
    let r = estimate_fiber_matrix_element(&spec, mode, &fock, exec)?;
    let oracle = r.oracle.clone().expect("fiber estimates carry the truncated oracle");
    let mut tables = vec![matrix_table("fiber_estimate", &r.estimate, &r.std_error, Some(&oracle))];
    let mut checks = vec![];
    let mut results = json!({
        "mode": format!("{mode:?}"),
        "n_samples": r.n_samples,
        "steps": r.steps,
        "horizon": r.horizon,
        "abs_error": r.abs_error(),
        "max_se": r.max_se(),
        "z_max": r.z_max,
    });
    if let FiberMode::SdeOnTruncated { scheme } = mode {
        // the exact weak bias is available for one-dimensional drivers
        let bias = if spec.xi.len() == 1 && spec.grid.is_uniform() { exact_scheme_bias(&spec, scheme, &fock).ok() } else { None };
        let envelope = bias.unwrap_or(0.0);
        let o = &oracle;
        let within = r.estimate.iter().zip(r.std_error.iter()).zip(o.iter()).all(|((e, s), o)| {
            let d = e - o;
            d.re.abs() <= 3.0 * s.re + envelope + ROUNDING_SLACK && d.im.abs() <= 3.0 * s.im + envelope + ROUNDING_SLACK
        });
        results["exact_bias"] = json!(bias);
        checks.push(CheckOutcome {
            id: "fiber".into(),
            title: "estimate vs truncated oracle".into(),
            passed: within,
            statistical: true,
            detail: format!("|MC−oracle| {:.3e}, 3SE+bias+slack {:.3e}", r.abs_error().unwrap_or(f64::NAN), 3.0 * r.max_se() + envelope + ROUNDING_SLACK),
            data: json!({ "abs_error": r.abs_error(), "max_se": r.max_se(), "bias": bias }),
            tables: vec![],
        });
        if let Some(ex) = r.norm_bound_excess {
            let dt = (0..spec.grid.steps()).map(|j| spec.grid.step(j)).fold(0.0, f64::max);
            let bound = NORM_BOUND_C * dt * spec.grid.horizon();
            results["norm_bound_excess"] = json!(ex);
            checks.push(CheckOutcome {
                id: "norm".into(),
                title: "pathwise norm bound".into(),
                passed: ex <= bound,
                statistical: false,
                detail: format!("max excess {ex:.3e} vs c·Δ·t = {bound:.3e}"),
                data: json!({ "max_excess": ex, "bound": bound }),
                tables: vec![],
            });
        }
    }
    if let FiberMode::SdeOnTruncated { scheme } = mode {
        let sg = &cfg.semigroup;
        let mut sspec = spec.clone();
        sspec.n_paths = sg.n_paths;
        sspec.seed = spec.seed ^ 0x5e;
        let rep = semigroup_property_check(&sspec, sg.s, sg.t, spec.grid.steps(), scheme, &fock, exec)?;
        sspec.grid = fkboson_core::drivers::TimeGrid::uniform(sg.s + sg.t, spec.grid.steps())?;
        let bias = if sspec.xi.len() == 1 { exact_scheme_bias(&sspec, scheme, &fock).ok() } else { None };
        let envelope = bias.unwrap_or(0.0) + ROUNDING_SLACK;
        let est = &rep.estimate;
        let within = est.estimate.iter().zip(est.std_error.iter()).zip(rep.composed_oracle.iter()).all(|((e, s), o)| {
            let d = e - o;
            d.re.abs() <= checks::SEMIGROUP_Z_TOL * s.re + envelope && d.im.abs() <= checks::SEMIGROUP_Z_TOL * s.im + envelope
        });
        tables.push(matrix_table("semigroup_estimate", &est.estimate, &est.std_error, Some(&rep.composed_oracle)));
        results["semigroup_z_max"] = json!(rep.z_max);
        checks.push(CheckOutcome {
            id: "semigroup".into(),
            title: "semigroup property".into(),
            passed: within,
            statistical: true,
            detail: format!(
                "estimate at s + t = {} vs e^(−sĤ)e^(−tĤ): max z {:.2}, |d| ≤ {}·SE + bias {:.2e} + slack",
                sg.s + sg.t,
                rep.z_max,
                checks::SEMIGROUP_Z_TOL,
                bias.unwrap_or(0.0)
            ),
            data: json!({ "s": sg.s, "t": sg.t, "z_max": rep.z_max, "bias": bias }),
            tables: vec![],
        });
    }
    let mut info = Table::new("fiber_summary", &["n_paths", "steps", "horizon", "abs_error", "max_se", "z_max"]);
    info.push([
        r.n_samples.to_string(),
        r.steps.to_string(),
        r.horizon.to_string(),
        r.abs_error().unwrap_or(f64::NAN).to_string(),
        r.max_se().to_string(),
        r.z_max.unwrap_or(f64::NAN).to_string(),
    ]);
    tables.push(info);
    Ok(output(Command::FiberMc, checks, results, tables, vec![]))
}

fn kernel_mc<E: PathExecutor>(cfg: &RunConfig, exec: &E) -> Result<RunOutput, RunError> {
    let m = study_model(cfg)?;
    let fock = fock_for(&m.coupling, cfg.fock.max_bosons)?;
    let spec = KernelSpec {
        coupling: m.coupling.clone(),
        potential: m.potential.clone(),
        x: cfg.kernel.x.clone(),
        y: cfg.kernel.y.clone(),
        grid: cfg.grid()?,
        n_paths: cfg.mc.n_paths,
        seed: cfg.mc.seed,
        scheme: scheme(cfg),
    };
    let r = estimate_kernel(&spec, &fock, exec)?;
    let mut tables = vec![matrix_table("kernel_estimate", &r.estimate, &r.std_error, None)];
    let rows = checks::kernel_symmetry_study(&m, &cfg.kernel.x, &cfg.kernel.y, &cfg.kernel.steps, cfg.kernel.n_paths, cfg.mc.seed ^ 0x6b, exec)?;
    let mut t = Table::new("kernel_symmetry", &["steps", "dt", "residual", "path_residual"]);
    let mut plot = Table::new("kernel_symmetry_vs_dt", &["dt", "residual"]);
    for (k, res, pr) in &rows {
        let dt = m.horizon / *k as f64;
        t.push([k.to_string(), dt.to_string(), res.to_string(), pr.to_string()]);
        plot.push([dt.to_string(), res.to_string()]);
    }
    tables.push(t);
    let residuals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let exact = residuals.iter().all(|r| *r <= checks::RESIDUAL_FLOOR);
    let decreasing = exact || residuals.windows(2).all(|w| w[1] < w[0]);
    let check = CheckOutcome {
        id: "kernel-symmetry".into(),
        title: "kernel symmetry under refinement".into(),
        passed: decreasing,
        statistical: true,
        detail: format!("residuals {}", residuals.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")),
        data: json!({ "rows": rows }),
        tables: vec![],
    };
    let results = json!({ "dim": r.estimate.nrows(), "max_se": r.max_se(), "estimate_max_abs": max_abs(&r.estimate), "n_samples": r.n_samples });
    Ok(output(Command::KernelMc, vec![check], results, tables, vec![plot]))
}

fn moment_params(cfg: &RunConfig) -> MomentParams {
    let m = &cfg.moments;
    MomentParams {
        powers: m.powers.clone(),
        nus: m.nus.clone(),
        t_fracs: m.t_fracs.clone(),
        horizon: m.horizon,
        distance: m.distance,
        n_paths: m.n_paths,
        steps: m.steps,
        seed: cfg.mc.seed,
    }
}

fn bridge_moments<E: PathExecutor>(cfg: &RunConfig, exec: &E) -> RunOutput {
    let c = checks::bridge_moments(&moment_params(cfg), exec);
    output(Command::BridgeMoments, vec![c], Value::Null, vec![], vec![])
}

fn series_vs_sde(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    let m = study_model(cfg)?;
    let nelson = is_nelson(&m.coupling);
    let c = checks::series_vs_sde(
        nelson.then_some(&m),
        (!nelson).then_some(&m),
        cfg.series.n_max,
        &cfg.series.steps,
        cfg.series.n_paths,
        cfg.mc.seed,
    );
    let plot = c.tables.iter().find(|t| t.name == "series_vs_sde").map(|t| {
        let mut p = Table::new("series_sde_diff_vs_dt", &["dt", "mean_abs_diff"]);
        for r in &t.rows {
            p.push([r[1].clone(), r[2].clone()]);
        }
        p
    });
    Ok(output(Command::SeriesVsSde, vec![c], Value::Null, vec![], plot.into_iter().collect()))
}

fn reversal<E: PathExecutor>(cfg: &RunConfig, exec: &E) -> Result<RunOutput, RunError> {
    let m = study_model(cfg)?;
    let c = checks::time_reversal(&m, &m, cfg.reversal.n_paths, &cfg.reversal.steps, cfg.mc.seed, exec);
    let plot = c.tables.iter().find(|t| t.name == "reversal_spin").map(|t| {
        let mut p = Table::new("reversal_residual_vs_dt", &["dt", "mean_residual"]);
        for r in &t.rows {
            p.push([r[1].clone(), r[2].clone()]);
        }
        p
    });
    Ok(output(Command::ReversalCheck, vec![c], Value::Null, vec![], plot.into_iter().collect()))
}

fn vanhove(cfg: &RunConfig) -> RunOutput {
    let v = &cfg.vanhove;
    let f = v.f.iter().map(|c| fkboson_core::linalg::C64::new(c[0], c[1])).collect();
    let c = checks::van_hove(&[(v.mu.clone(), v.omega.clone(), f)], v.max_bosons);
    output(Command::Vanhove, vec![c], Value::Null, vec![], vec![])
}

fn sweep<E: PathExecutor>(cfg: &RunConfig, exec: &E) -> Result<RunOutput, RunError> {
    let spec = fiber_spec(cfg)?;
    let s = &cfg.sweep;
    let rows = convergence_sweep(&spec, fiber_mode(cfg), &s.steps, &s.truncations, &s.paths, exec)?;
    let mut t = Table::new("sweep", &["steps", "dt", "max_bosons", "n_paths", "abs_error", "max_se", "z_max", "exact_bias"]);
    let opt = |v: Option<f64>| v.map(|b| b.to_string()).unwrap_or_default();
    for r in &rows {
        t.push([
            r.steps.to_string(),
            (spec.grid.horizon() / r.steps as f64).to_string(),
            r.max_bosons.to_string(),
            r.n_paths.to_string(),
            r.abs_error.to_string(),
            r.max_se.to_string(),
            r.z_max.to_string(),
            opt(r.exact_bias),
        ]);
    }
    let (nmax, pmax, kmax) = (s.truncations.iter().max(), s.paths.iter().max(), s.steps.iter().max());
    let mut bias = Table::new("bias_vs_dt", &["dt", "abs_error", "exact_bias"]);
    let mut se = Table::new("se_vs_paths", &["n_paths", "max_se"]);
    let mut gap = Table::new("gap_vs_truncation", &["max_bosons", "abs_error"]);
    for r in &rows {
        if Some(&r.max_bosons) == nmax && Some(&r.n_paths) == pmax {
            bias.push([(spec.grid.horizon() / r.steps as f64).to_string(), r.abs_error.to_string(), opt(r.exact_bias)]);
        }
        if Some(&r.max_bosons) == nmax && Some(&r.steps) == kmax {
            se.push([r.n_paths.to_string(), r.max_se.to_string()]);
        }
        if Some(&r.steps) == kmax && Some(&r.n_paths) == pmax {
            gap.push([r.max_bosons.to_string(), r.abs_error.to_string()]);
        }
    }
    let results = json!({ "rows": t.rows });
    Ok(output(Command::Sweep, vec![], results, vec![t], vec![bias, se, gap]))
}

/// The full property suite (criteria 1–9) with seeds derived from the
/// master seed.
pub fn selftest<E: PathExecutor>(cfg: &RunConfig, exec: &E) -> RunOutput {
    let seed = cfg.mc.seed;
    let sub = |k: u64| seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k);
    let (c4, c6) = checks::fiber_feynman_kac(
        &FiberParams { n_paths: 20_000, steps: 128, seed: sub(4) },
        &FiberParams { n_paths: 20_000, steps: 128, seed: sub(6) },
        exec,
    );
    let moments = MomentParams { seed: sub(3), ..MomentParams::default() };
    let spin7 = checks::spin_model(fkboson_core::potential::Potential::Polynomial(vec![0.1, 0.0, 0.3]), 0.5, 0.7, 3);
    let spin8 = checks::spin_model(fkboson_core::potential::Potential::Zero, 0.5, 0.5, 8);
    let list = vec![
        checks::fock_algebra(200, sub(1)),
        checks::van_hove(&checks::default_van_hove_cases(), 14),
        checks::bridge_moments(&moments, exec),
        c4,
        checks::closed_form_truncation(&[4, 6, 8, 10], 256, exec),
        c6,
        checks::time_reversal(&checks::scalar_reversal_model(), &spin7, 200, &[32, 64, 128], sub(7), exec),
        checks::series_vs_sde(Some(&checks::nelson_model()), Some(&spin8), 6, &[16, 32, 64], 64, sub(8)),
        checks::kernel_and_semigroup(&[32, 64, 128], 200, 10_000, sub(9), exec),
    ];
    output(Command::Selftest, list, Value::Null, vec![], vec![])
}

#[cfg(test)]
mod tests {
    use super::*;
    use fkboson_core::feynman_kac::Sequential;

    #[test]
    fn command_names_roundtrip() {
        for c in Command::ALL {
            assert_eq!(Command::parse(c.name()), Some(c));
        }
        assert_eq!(Command::parse("nope"), None);
    }

    #[test]
    fn vanhove_default_passes() {
        let cfg = RunConfig::default();
        let out = run(Command::Vanhove, &cfg, &Sequential).unwrap();
        assert_eq!(out.exit_code(), 0, "{}", out.checks[0].line());
    }

    #[test]
    fn invalid_config_maps_to_exit_four() {
        let mut cfg = RunConfig::default();
        cfg.grid.horizon = -1.0;
        let e = run(Command::FiberMc, &cfg, &Sequential).unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert!(e.to_string().contains("grid.horizon"));
    }

    #[test]
    fn small_fiber_run_writes_artifacts() {
        let mut cfg = RunConfig::default();
        cfg.mc.n_paths = 200;
        cfg.grid.steps = 16;
        cfg.fock.max_bosons = 4;
        let out = run(Command::FiberMc, &cfg, &Sequential).unwrap();
        let dir = tempfile::tempdir().unwrap();
        out.write(&cfg, dir.path()).unwrap();
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("results.json")).unwrap()).unwrap();
        assert_eq!(doc["command"], "fiber-mc");
        assert_eq!(doc["config_hash"], cfg.content_hash());
        assert!(dir.path().join("tables/fiber_estimate.csv").exists());
    }
}
