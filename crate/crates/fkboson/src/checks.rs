//! Property and oracle checks behind `selftest` and the acceptance suite.
//!
//! Each check returns a [`CheckOutcome`] with the measured quantity, the
//! tolerance it was compared against and plot-ready tables.

use fkboson_core::basic_processes::{integrate, nelson_trace, Flavor};
use fkboson_core::drivers::{bm_from_normals, bridge_from_normals, DriverPath, TimeGrid};
use fkboson_core::feynman_kac::{
    coherent_columns, estimate_bridge_moment, estimate_fiber_matrix_element, exact_scheme_bias, kernel_symmetry_check, path_normals,
    semigroup_property_check, FiberMode, FiberSpec, KernelSpec, PathExecutor,
};
use fkboson_core::fock::TruncatedFock;
use fkboson_core::hamiltonians::{truncated_van_hove_energy, van_hove_energy};
use fkboson_core::linalg::{max_abs, CMatrix, CVector, C64, I};
use fkboson_core::modespace::{nelson_preset, pauli, CouplingFamily, ModeSpace, OneBosonVector};
use fkboson_core::potential::Potential;
use fkboson_core::rng::PathRng;
use fkboson_core::scalar_kernel::reversal_check;
use fkboson_core::spin_sde::{pathwise_adjoint_check, Scheme, SpinPropagator};
use fkboson_core::spin_series::{nelson_resummed, series_matrix_element};
use serde_json::json;

use crate::io::Table;

/// Result of one check.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: String,
    pub title: String,
    pub passed: bool,
    /// Statistical checks fail with exit code 2, deterministic ones with 3.
    pub statistical: bool,
    pub detail: String,
    pub data: serde_json::Value,
    pub tables: Vec<Table>,
}

impl CheckOutcome {
    pub fn line(&self) -> String {
        let kind = if self.id.chars().all(|c| c.is_ascii_digit()) { "criterion" } else { "check" };
        format!("{kind} {}: {} {}: {}", self.id, if self.passed { "PASS" } else { "FAIL" }, self.title, self.detail)
    }
}

fn cx(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn one(v: f64) -> OneBosonVector {
    OneBosonVector::from_vec(vec![cx(v)])
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// One-mode Nelson toy: ω = µ = 1, m = 0, F = `f`.
pub fn nelson_toy(f: f64) -> CouplingFamily {
    let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).expect("valid modes");
    nelson_preset(&modes, one(f), false).expect("valid preset").1
}

/// Two modes swapped by the conjugation (ω = 1, m = ±`momentum`), constant
/// G = `g`, F = `f`, σ = Pauli-z.
pub fn spin_toy(g: f64, f: f64, momentum: f64) -> CouplingFamily {
    let modes = if momentum == 0.0 {
        ModeSpace::without_momentum(vec![1.0, 1.0], vec![1.0, 1.0], 1)
    } else {
        ModeSpace::new(vec![1.0, 1.0], vec![1.0, 1.0], vec![momentum, -momentum], 1, vec![1, 0], vec![cx(1.0); 2])
    }
    .expect("valid modes");
    let gv = OneBosonVector::from_vec(vec![cx(g), cx(g)]);
    let fv = OneBosonVector::from_vec(vec![cx(f), cx(f)]);
    CouplingFamily::new(&modes, vec![0.0; 2], vec![gv], vec![fv], vec![pauli()[2].clone()]).expect("valid coupling")
}

/// Scalar toy with plane-wave couplings (m = ±0.5, complex G, nonzero F).
fn scalar_toy() -> CouplingFamily {
    let mom = vec![0.5, -0.5];
    let modes = ModeSpace::new(vec![1.0, 1.0], vec![1.1, 1.1], mom.clone(), 1, vec![1, 0], vec![cx(1.0); 2]).expect("modes");
    let z = C64::new(0.35, 0.15);
    let g = OneBosonVector::from_vec(vec![z, z.conj()]);
    let f = OneBosonVector::from_vec(vec![cx(0.2), cx(0.2)]);
    CouplingFamily::new(&modes, mom, vec![g], vec![f], vec![CMatrix::identity(1, 1)]).expect("coupling")
}

fn rand_vec(rng: &mut PathRng, m: usize, scale: f64) -> OneBosonVector {
    OneBosonVector::from_iterator(m, (0..m).map(|_| C64::new(scale * (2.0 * rng.uniform() - 1.0), scale * (2.0 * rng.uniform() - 1.0))))
}

fn project(fock: &TruncatedFock, j: usize, v: &CVector) -> CVector {
    let keep = fock.dim_below_top(j);
    CVector::from_fn(v.len(), |i, _| if i < keep { v[i] } else { cx(0.0) })
}

fn vmax(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn project_cols(fock: &TruncatedFock, j: usize, a: &CMatrix) -> CMatrix {
    let keep = fock.dim_below_top(j);
    CMatrix::from_fn(a.nrows(), a.ncols(), |r, c| if c < keep { a[(r, c)] } else { cx(0.0) })
}

/// `Σ_{ℓ>n} xˡ/√(ℓ!)`.
fn taylor_tail(x: f64, n: usize) -> f64 {
    let mut term = 1.0;
    for l in 1..=n {
        term *= x / (l as f64).sqrt();
    }
    let mut sum = 0.0;
    for l in (n + 1)..200 {
        term *= x / (l as f64).sqrt();
        sum += term;
    }
    sum
}

/// Criterion 1: CCR, adjointness, exponential-vector actions, the Taylor
/// bound and the dΓ commutators on random instances.
pub fn fock_algebra(instances: usize, seed: u64) -> CheckOutcome {
    const TOL: f64 = 1e-12;
    let modes = ModeSpace::new(vec![0.7, 0.7], vec![1.0, 1.0], vec![0.5, -0.5], 1, vec![1, 0], vec![cx(1.0); 2]).expect("modes");
    let n_max = 5;
    let fock = TruncatedFock::new(&modes, n_max).expect("fock");
    let names = ["adjointness", "ccr", "exp-vec annihilation", "exp-vec contraction", "taylor bound", "taylor exact", "[a, dΓ]", "[φ, dΓ]", "[φ, φ]"];
    let mut worst = [0.0f64; 9];
    let mut rng = PathRng::new(seed, 0);
    let mut taylor_ok = true;
    for _ in 0..instances {
        let f = rand_vec(&mut rng, 2, 1.0);
        let g = rand_vec(&mut rng, 2, 1.0);
        let h = rand_vec(&mut rng, 2, 0.5);
        let kappa: Vec<f64> = (0..2).map(|_| 2.0 * rng.uniform()).collect();
        let j: Vec<C64> = (0..2).map(|_| C64::new(2.0 * rng.uniform() - 1.0, 0.0)).collect();
        let ad_f = fock.creation(&f).unwrap();
        let a_f = fock.annihilation(&f).unwrap();
        worst[0] = worst[0].max(max_abs(&(ad_f.adjoint() - &a_f)));
        let ad_g = fock.creation(&g).unwrap();
        let n = fock.dim();
        let ccr = &a_f * &ad_g - &ad_g * &a_f - CMatrix::identity(n, n) * modes.inner(&f, &g);
        worst[1] = worst[1].max(max_abs(&project_cols(&fock, 1, &ccr)));
        let (zh, _) = fock.exp_vector(&h).unwrap();
        let lhs = &a_f * &zh - &zh * (I * modes.inner(&f, &h));
        worst[2] = worst[2].max(vmax(&project(&fock, 1, &lhs)));
        let jh = OneBosonVector::from_iterator(2, h.iter().zip(&j).map(|(a, b)| a * b));
        let gam = fock.gamma_contraction(&j).unwrap();
        worst[3] = worst[3].max(vmax(&(&gam * &zh - fock.exp_vector(&jh).unwrap().0)));
        // Σ_{ℓ≤n} (iˡ/ℓ!) a†(f)ˡ ζ(h) against ζ(h+f)
        let small_f = &f * cx(0.3);
        let (target, _) = fock.exp_vector(&(&h + &small_f)).unwrap();
        let ad_small = fock.creation(&small_f).unwrap();
        let nf = modes.norm(&small_f);
        let eh2 = modes.norm_sq(&h).exp();
        let mut term = zh.clone();
        let mut partial = zh.clone();
        for l in 1..=n_max {
            term = (&ad_small * &term) * (I / cx(l as f64));
            partial += &term;
            let bound = eh2 * taylor_tail(2f64.sqrt() * nf, l);
            let e = (&target - &partial).norm();
            if l < n_max {
                taylor_ok &= e <= bound * (1.0 + 1e-12) + TOL;
                worst[4] = worst[4].max(e / bound.max(f64::MIN_POSITIVE));
            } else {
                worst[5] = worst[5].max(e);
            }
        }
        let kc: Vec<C64> = kappa.iter().map(|&k| cx(k)).collect();
        let dg = fock.d_gamma(&kc).unwrap();
        let tf = OneBosonVector::from_iterator(2, f.iter().zip(&kappa).map(|(a, k)| a * k));
        let c1 = &a_f * &dg - &dg * &a_f - fock.annihilation(&tf).unwrap();
        worst[6] = worst[6].max(max_abs(&project_cols(&fock, 1, &c1)));
        let phi_f = fock.field(&f).unwrap();
        let c2 = &phi_f * &dg - &dg * &phi_f - fock.field(&(&tf * I)).unwrap() * I;
        worst[7] = worst[7].max(max_abs(&project_cols(&fock, 1, &c2)));
        let phi_g = fock.field(&g).unwrap();
        let c3 = &phi_f * &phi_g - &phi_g * &phi_f - CMatrix::identity(n, n) * C64::new(0.0, 2.0 * modes.inner(&f, &g).im);
        worst[8] = worst[8].max(max_abs(&project_cols(&fock, 2, &c3)));
    }
    let exact_ok = worst.iter().enumerate().filter(|(i, _)| *i != 4).all(|(_, w)| *w <= TOL);
    let passed = exact_ok && taylor_ok && worst[0] == 0.0;
    let mut t = Table::new("fock_algebra", &["identity", "worst", "tolerance"]);
    for (name, w) in names.iter().zip(worst) {
        t.push([name.to_string(), w.to_string(), if *name == "taylor bound" { "1 (ratio to bound)".into() } else { TOL.to_string() }]);
    }
    CheckOutcome {
        id: "1".into(),
        title: "Fock algebra".into(),
        passed,
        statistical: false,
        detail: format!(
            "{instances} instances; worst identity residual {:.2e} (tol {TOL:.0e}), worst Taylor error/bound {:.3}",
            worst.iter().enumerate().filter(|(i, _)| *i != 4).map(|(_, w)| *w).fold(0.0, f64::max),
            worst[4]
        ),
        data: json!({ "instances": instances, "names": names, "worst": worst }),
        tables: vec![t],
    }
}

/// Criterion 2: ground energy of `dΓ(ω) + φ(f)` against `−‖ω^{−1/2} f‖²`.
pub fn van_hove(cases: &[(Vec<f64>, Vec<f64>, Vec<C64>)], max_bosons: usize) -> CheckOutcome {
    const TOL: f64 = 1e-8;
    let mut t = Table::new("vanhove", &["case", "modes", "max_bosons", "truncated", "exact", "abs_error"]);
    let mut worst = 0.0f64;
    let mut passed = true;
    let mut rows = vec![];
    for (i, (mu, omega, f)) in cases.iter().enumerate() {
        let res = ModeSpace::without_momentum(mu.clone(), omega.clone(), 1).and_then(|modes| {
            let fv = OneBosonVector::from_vec(f.clone());
            Ok((truncated_van_hove_energy(&modes, &fv, max_bosons)?, van_hove_energy(&modes, &fv)))
        });
        match res {
            Ok((e, exact)) => {
                let d = (e - exact).abs();
                worst = worst.max(d);
                passed &= d <= TOL;
                t.push([i.to_string(), omega.len().to_string(), max_bosons.to_string(), e.to_string(), exact.to_string(), d.to_string()]);
                rows.push(json!({ "modes": omega.len(), "truncated": e, "exact": exact, "abs_error": d }));
            }
            Err(e) => {
                passed = false;
                rows.push(json!({ "error": e.to_string() }));
            }
        }
    }
    CheckOutcome {
        id: "2".into(),
        title: "van Hove energy".into(),
        passed,
        statistical: false,
        detail: format!("N = {max_bosons}, worst |E_N − E| = {worst:.2e} (tol {TOL:.0e})"),
        data: json!({ "cases": rows }),
        tables: vec![t],
    }
}

pub fn default_van_hove_cases() -> Vec<(Vec<f64>, Vec<f64>, Vec<C64>)> {
    vec![(vec![1.0], vec![2.0], vec![cx(1.0)]), (vec![1.0, 0.5], vec![2.0, 1.0], vec![cx(1.0), cx(0.6)])]
}

#[derive(Debug, Clone)]
pub struct MomentParams {
    pub powers: Vec<u32>,
    pub nus: Vec<usize>,
    pub t_fracs: Vec<f64>,
    pub horizon: f64,
    pub distance: f64,
    pub n_paths: u64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for MomentParams {
    fn default() -> Self {
        Self { powers: vec![1, 2], nus: vec![1, 3], t_fracs: vec![0.25, 0.5, 0.9], horizon: 1.0, distance: 1.0, n_paths: 100_000, steps: 20, seed: 7 }
    }
}

/// Criterion 3: bridge drift moments within 5 SE of the closed form.
pub fn bridge_moments<E: PathExecutor>(p: &MomentParams, exec: &E) -> CheckOutcome {
    const Z_TOL: f64 = 5.0;
    let mut t = Table::new("bridge_moments", &["p", "nu", "t_frac", "empirical", "se", "exact", "z"]);
    let mut worst = 0.0f64;
    let mut failure = None;
    for &nu in &p.nus {
        // the grid must contain every requested fraction as a node
        let grid = match TimeGrid::uniform(p.horizon, p.steps) {
            Ok(g) => g,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let x0 = vec![0.0; nu];
        let mut y = vec![0.0; nu];
        y[0] = p.distance;
        for &pw in &p.powers {
            for &tf in &p.t_fracs {
                match estimate_bridge_moment(pw, &x0, &y, &grid, tf, p.n_paths, p.seed ^ (nu as u64) << 32, exec) {
                    Ok(m) => {
                        worst = worst.max(m.z);
                        t.push([pw.to_string(), nu.to_string(), tf.to_string(), m.empirical.to_string(), m.std_error.to_string(), m.exact.to_string(), m.z.to_string()]);
                    }
                    Err(e) => failure = Some(e.to_string()),
                }
            }
        }
    }
    let passed = failure.is_none() && worst <= Z_TOL;
    CheckOutcome {
        id: "3".into(),
        title: "bridge moments".into(),
        passed,
        statistical: true,
        detail: match &failure {
            Some(e) => format!("error: {e}"),
            None => format!("{} paths per case, max z = {worst:.2} (tol {Z_TOL})", p.n_paths),
        },
        data: json!({ "max_z": worst, "n_paths": p.n_paths }),
        tables: vec![t],
    }
}

/// Frozen regression constant for the discrete norm bound
/// `ln‖Y_t η‖/‖η‖ ≤ Σ Δ(Λ² − V) + c·Δ·t`.
pub const NORM_BOUND_C: f64 = 1.0;

/// Componentwise allowance for rounding in `|MC − oracle| ≤ 3·SE + bias`.
pub const ROUNDING_SLACK: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct FiberParams {
    pub n_paths: u64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for FiberParams {
    fn default() -> Self {
        Self { n_paths: 20_000, steps: 128, seed: 11 }
    }
}

/// Fiber spec of the one-mode Nelson toy at t = 0.5.
pub fn nelson_fiber_spec(n_paths: u64, steps: usize, seed: u64) -> FiberSpec {
    FiberSpec {
        coupling: nelson_toy(0.3),
        xi: vec![0.0],
        potential: Potential::Zero,
        g: one(0.4),
        h: one(0.3),
        grid: TimeGrid::uniform(0.5, steps).expect("grid"),
        n_paths,
        seed,
        antithetic: false,
    }
}

/// Fiber spec of the L = 2 spin toy at t = 0.5, ξ = 0.2.
pub fn spin_fiber_spec(n_paths: u64, steps: usize, seed: u64) -> FiberSpec {
    FiberSpec {
        coupling: spin_toy(0.3, 0.3, 0.5),
        xi: vec![0.2],
        potential: Potential::Zero,
        g: OneBosonVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(0.2, -0.1)]),
        h: OneBosonVector::from_vec(vec![C64::new(0.2, 0.0), C64::new(0.1, 0.2)]),
        grid: TimeGrid::uniform(0.5, steps).expect("grid"),
        n_paths,
        seed,
        antithetic: false,
    }
}

struct FiberRun {
    label: &'static str,
    scheme: Scheme,
    abs_error: f64,
    max_se: f64,
    bias: f64,
    bias_ratio: f64,
    within: bool,
    norm_excess: Option<f64>,
    dt: f64,
    horizon: f64,
}

fn fiber_run<E: PathExecutor>(label: &'static str, spec: &FiberSpec, scheme: Scheme, fock: &TruncatedFock, exec: &E) -> fkboson_core::Result<FiberRun> {
    let r = estimate_fiber_matrix_element(spec, FiberMode::SdeOnTruncated { scheme }, fock, exec)?;
    let bias = exact_scheme_bias(spec, scheme, fock)?;
    let mut doubled = spec.clone();
    doubled.grid = TimeGrid::uniform(spec.grid.horizon(), 2 * spec.grid.steps())?;
    let bias2 = exact_scheme_bias(&doubled, scheme, fock)?;
    let o = r.oracle.as_ref().expect("oracle");
    let mut within = true;
    for ((e, s), o) in r.estimate.iter().zip(r.std_error.iter()).zip(o.iter()) {
        let d = e - o;
        within &= d.re.abs() <= 3.0 * s.re + bias + ROUNDING_SLACK && d.im.abs() <= 3.0 * s.im + bias + ROUNDING_SLACK;
    }
    Ok(FiberRun {
        label,
        scheme,
        abs_error: r.abs_error().unwrap_or(f64::NAN),
        max_se: r.max_se(),
        bias,
        bias_ratio: bias / bias2,
        within,
        norm_excess: r.norm_bound_excess,
        dt: spec.grid.step(0),
        horizon: spec.grid.horizon(),
    })
}

/// Criteria 4 and 6: SDE estimates on the truncated space against the
/// matrix-exponential oracle, weak order from the exact scheme bias, and the
/// pathwise norm bound on every splitting path.
pub fn fiber_feynman_kac<E: PathExecutor>(nelson: &FiberParams, spin: &FiberParams, exec: &E) -> (CheckOutcome, CheckOutcome) {
    let nelson_fock = TruncatedFock::new(nelson_toy(0.3).modes(), 8).expect("fock");
    let spin_fock = TruncatedFock::with_cap(spin_toy(0.3, 0.3, 0.5).modes(), 4, 2, fkboson_core::fock::DEFAULT_DIM_CAP).expect("fock");
    let ns = nelson_fiber_spec(nelson.n_paths, nelson.steps, nelson.seed);
    let ss = spin_fiber_spec(spin.n_paths, spin.steps, spin.seed);
    let runs = [
        fiber_run("nelson", &ns, Scheme::Splitting, &nelson_fock, exec),
        fiber_run("nelson", &ns, Scheme::EulerMaruyama, &nelson_fock, exec),
        fiber_run("spin", &ss, Scheme::Splitting, &spin_fock, exec),
    ];
    let mut t = Table::new("fiber_fk", &["model", "scheme", "steps", "n_paths", "abs_error", "max_se", "exact_bias", "bias_ratio_k_to_2k", "within_envelope"]);
    let mut nt = Table::new("norm_bound", &["model", "max_excess", "dt", "horizon", "fitted_c", "frozen_c"]);
    let mut passed4 = true;
    let mut passed6 = true;
    let mut err = None;
    let mut details = vec![];
    let mut fitted_c = 0.0f64;
    let mut ratios = vec![];
    for r in &runs {
        match r {
            Ok(r) => {
                // the splitting bias is zero up to rounding for the Nelson toy,
                // where the weak order is read off the Euler–Maruyama scheme
                let bias_relevant = r.bias > 1e-12;
                let ratio_ok = !bias_relevant || (1.8..=2.2).contains(&r.bias_ratio);
                if bias_relevant {
                    ratios.push(format!("{}/{:?} {:.3}", r.label, r.scheme, r.bias_ratio));
                }
                passed4 &= r.within && ratio_ok;
                let steps = (r.horizon / r.dt).round() as usize;
                let n_paths = if r.label == "nelson" { nelson.n_paths } else { spin.n_paths };
                t.push([
                    r.label.to_string(),
                    format!("{:?}", r.scheme),
                    steps.to_string(),
                    n_paths.to_string(),
                    r.abs_error.to_string(),
                    r.max_se.to_string(),
                    r.bias.to_string(),
                    r.bias_ratio.to_string(),
                    r.within.to_string(),
                ]);
                details.push(format!("{}/{:?}: |MC−oracle| {:.2e}, 3SE+bias+slack {:.2e}", r.label, r.scheme, r.abs_error, 3.0 * r.max_se + r.bias + ROUNDING_SLACK));
                if let (Scheme::Splitting, Some(ex)) = (r.scheme, r.norm_excess) {
                    let c = ex.max(0.0) / (r.dt * r.horizon);
                    fitted_c = fitted_c.max(c);
                    passed6 &= ex <= NORM_BOUND_C * r.dt * r.horizon;
                    nt.push([r.label.to_string(), ex.to_string(), r.dt.to_string(), r.horizon.to_string(), c.to_string(), NORM_BOUND_C.to_string()]);
                }
            }
            Err(e) => {
                err = Some(e.to_string());
                passed4 = false;
                passed6 = false;
            }
        }
    }
    let c4 = CheckOutcome {
        id: "4".into(),
        title: "fiber Feynman–Kac".into(),
        passed: passed4,
        statistical: true,
        detail: match &err {
            Some(e) => format!("error: {e}"),
            None => format!("{}; bias ratios (K→2K) {}", details.join("; "), ratios.join(", ")),
        },
        data: json!({ "runs": t.rows }),
        tables: vec![t],
    };
    let c6 = CheckOutcome {
        id: "6".into(),
        title: "norm bound".into(),
        passed: passed6,
        statistical: false,
        detail: match &err {
            Some(e) => format!("error: {e}"),
            None => format!("fitted c = {fitted_c:.3e}, frozen bound c ≤ {NORM_BOUND_C}, zero violations required"),
        },
        data: json!({ "fitted_c": fitted_c, "frozen_c": NORM_BOUND_C }),
        tables: vec![nt],
    };
    (c4, c6)
}

/// Criterion 5: closed-form (truncation-free) matrix elements against the
/// truncated oracle for increasing N.
pub fn closed_form_truncation<E: PathExecutor>(truncations: &[usize], steps: usize, exec: &E) -> CheckOutcome {
    let mut spec = nelson_fiber_spec(16, steps, 5);
    spec.g = one(1.5);
    spec.h = one(1.2);
    let mode = FiberMode::ClosedForm { flavor: Flavor::Midpoint, series_order: 0 };
    let mut t = Table::new("closed_form_truncation", &["max_bosons", "gap", "max_se"]);
    let mut gaps = vec![];
    let mut err = None;
    for &n in truncations {
        let res = TruncatedFock::new(spec.coupling.modes(), n).and_then(|fock| estimate_fiber_matrix_element(&spec, mode, &fock, exec));
        match res {
            Ok(r) => {
                let gap = r.abs_error().unwrap_or(f64::NAN);
                t.push([n.to_string(), gap.to_string(), r.max_se().to_string()]);
                gaps.push(gap);
            }
            Err(e) => err = Some(e.to_string()),
        }
    }
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);
    CheckOutcome {
        id: "5".into(),
        title: "closed form vs truncation".into(),
        passed: err.is_none() && monotone,
        statistical: false,
        detail: match err {
            Some(e) => format!("error: {e}"),
            None => format!("N = {truncations:?}: gaps {}", gaps.iter().map(|g| format!("{g:.2e}")).collect::<Vec<_>>().join(", ")),
        },
        data: json!({ "truncations": truncations, "gaps": gaps }),
        tables: vec![t],
    }
}

fn bridge_path(x0: &[f64], y: &[f64], grid: &TimeGrid, seed: u64, index: u64) -> fkboson_core::Result<DriverPath> {
    let z = path_normals(seed, index, grid.steps() * x0.len(), false);
    bridge_from_normals(x0, y, grid, &z)
}

/// Model data shared by the pathwise studies.
#[derive(Debug, Clone)]
pub struct StudyModel {
    pub coupling: CouplingFamily,
    pub xi: Vec<f64>,
    pub potential: Potential,
    pub g: OneBosonVector,
    pub h: OneBosonVector,
    pub horizon: f64,
    pub max_bosons: usize,
}

impl StudyModel {
    fn fock(&self) -> fkboson_core::Result<TruncatedFock> {
        TruncatedFock::with_cap(self.coupling.modes(), self.max_bosons, self.coupling.spin_dim(), fkboson_core::fock::DEFAULT_DIM_CAP)
    }

    fn nu(&self) -> usize {
        self.coupling.modes().space_dim()
    }
}

/// Scalar toy used by criterion 7 (plane waves, polynomial V).
pub fn scalar_reversal_model() -> StudyModel {
    StudyModel {
        coupling: scalar_toy(),
        xi: vec![0.4],
        potential: Potential::Polynomial(vec![0.1, 0.0, 0.3]),
        g: OneBosonVector::from_vec(vec![C64::new(0.2, 0.1), C64::new(-0.1, 0.3)]),
        h: OneBosonVector::from_vec(vec![C64::new(0.1, -0.2), C64::new(0.25, 0.0)]),
        horizon: 0.7,
        max_bosons: 3,
    }
}

/// The L = 2 spin toy with ξ = 0.2.
pub fn spin_model(potential: Potential, momentum: f64, horizon: f64, max_bosons: usize) -> StudyModel {
    StudyModel {
        coupling: spin_toy(0.3, 0.3, momentum),
        xi: vec![0.2],
        potential,
        g: OneBosonVector::from_vec(vec![C64::new(0.3, 0.1), C64::new(0.2, -0.1)]),
        h: OneBosonVector::from_vec(vec![C64::new(0.2, 0.0), C64::new(0.1, 0.2)]),
        horizon,
        max_bosons,
    }
}

/// Largest `|⟨ζ(g),W[X̄]ζ(h)⟩ − conj⟨ζ(h),W[X]ζ(g)⟩|` of the midpoint scalar
/// integrand over bridges from `x0` to `y`.
pub fn scalar_reversal<E: PathExecutor>(m: &StudyModel, x0: &[f64], y: &[f64], steps: usize, n_paths: u64, seed: u64, exec: &E) -> fkboson_core::Result<f64> {
    let grid = TimeGrid::uniform(m.horizon, steps)?;
    let vals = exec.map_indexed(n_paths, |i| {
        let p = bridge_path(x0, y, &grid, seed, i)?;
        reversal_check(&p, &m.coupling, &m.xi, &m.potential, &m.g, &m.h, Flavor::Midpoint)
    });
    let vals: Vec<f64> = vals.into_iter().collect::<fkboson_core::Result<_>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// Mean splitting residual `‖𝕎[X̄] − 𝕎[X]*‖` on nested coarsenings of the
/// same bridges; returns `(Δ, mean residual)` per grid.
pub fn spin_reversal_decay<E: PathExecutor>(
    m: &StudyModel,
    x0: &[f64],
    y: &[f64],
    steps: &[usize],
    n_paths: u64,
    seed: u64,
    exec: &E,
) -> fkboson_core::Result<(Vec<f64>, Vec<f64>)> {
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    let fine = *sorted.last().ok_or_else(|| fkboson_core::Error::InvalidInput("no grids".into()))?;
    if sorted.iter().any(|k| fine % k != 0) {
        return Err(fkboson_core::Error::InvalidInput("grids must divide the finest grid".into()));
    }
    let grid = TimeGrid::uniform(m.horizon, fine)?;
    let fock = m.fock()?;
    let mut prop = SpinPropagator::new(&m.coupling, &m.xi, &m.potential, &fock)?;
    for &k in &sorted {
        let g = TimeGrid::uniform(m.horizon, k)?;
        prop.prepare(&g)?;
        prop.prepare(&g.reversed())?;
    }
    let mut dts = vec![];
    let mut means = vec![];
    for &k in &sorted {
        let vals = exec.map_indexed(n_paths, |i| {
            let p = bridge_path(x0, y, &grid, seed, i)?.coarsened(fine / k)?;
            pathwise_adjoint_check(&prop, &p, Scheme::Splitting)
        });
        let vals: Vec<f64> = vals.into_iter().collect::<fkboson_core::Result<_>>()?;
        dts.push(m.horizon / k as f64);
        means.push(vals.iter().sum::<f64>() / vals.len() as f64);
    }
    Ok((dts, means))
}

/// Accepted range for a fitted first-order slope.
pub const FIRST_ORDER: std::ops::RangeInclusive<f64> = 0.8..=1.25;

/// Residuals below this are exact up to rounding and carry no slope.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// First-order decay, or residuals that vanish already on the coarsest grid.
pub fn first_order_or_exact(residuals: &[f64], slope: f64) -> bool {
    residuals.iter().all(|r| *r <= RESIDUAL_FLOOR) || FIRST_ORDER.contains(&slope)
}

/// Criterion 7: exact discrete reversal of the scalar midpoint integrand and
/// order-Δ decay of the spin splitting residual on nested grids.
pub fn time_reversal<E: PathExecutor>(scalar: &StudyModel, spin: &StudyModel, n_paths: u64, steps: &[usize], seed: u64, exec: &E) -> CheckOutcome {
    const SCALAR_TOL: f64 = 1e-9;
    let fine = steps.iter().cloned().max().unwrap_or(128);
    let nu = scalar.nu();
    let (x0, mut y) = (vec![0.1; nu], vec![0.0; nu]);
    y[0] = -0.4;
    let res = scalar_reversal(scalar, &x0, &y, fine, n_paths, seed, exec).and_then(|s| {
        let nu = spin.nu();
        let (sx, mut sy) = (vec![0.1; nu], vec![0.0; nu]);
        sy[0] = -0.4;
        Ok((s, spin_reversal_decay(spin, &sx, &sy, steps, 20, seed.wrapping_add(1), exec)?))
    });
    let mut st = Table::new("reversal_scalar", &["n_paths", "steps", "max_residual", "tolerance"]);
    let mut t = Table::new("reversal_spin", &["steps", "dt", "mean_residual"]);
    match res {
        Ok((scalar_max, (dts, means))) => {
            st.push([n_paths.to_string(), fine.to_string(), scalar_max.to_string(), SCALAR_TOL.to_string()]);
            for (dt, r) in dts.iter().zip(&means) {
                t.push([((spin.horizon / dt).round() as usize).to_string(), dt.to_string(), r.to_string()]);
            }
            let slope = loglog_slope(&dts, &means);
            CheckOutcome {
                id: "7".into(),
                title: "time reversal".into(),
                passed: scalar_max <= SCALAR_TOL && first_order_or_exact(&means, slope),
                statistical: false,
                detail: format!("scalar midpoint max residual {scalar_max:.2e} (tol {SCALAR_TOL:.0e}); spin splitting residual slope in Δ {slope:.3} (accept 0.8–1.25)"),
                data: json!({ "scalar_max": scalar_max, "spin_dt": dts, "spin_mean_residual": means, "slope": slope }),
                tables: vec![st, t],
            }
        }
        Err(e) => failed("7", "time reversal", false, e),
    }
}

fn failed(id: &str, title: &str, statistical: bool, e: impl std::fmt::Display) -> CheckOutcome {
    CheckOutcome {
        id: id.into(),
        title: title.into(),
        passed: false,
        statistical,
        detail: format!("error: {e}"),
        data: json!({ "error": e.to_string() }),
        tables: vec![],
    }
}

/// Largest relative deviation of the order-`n_max` series from the resummed
/// Nelson exponential, and the largest tail ratio, over Brownian paths.
pub fn nelson_series_study(m: &StudyModel, steps: usize, n_max: usize, n_paths: u64, seed: u64) -> fkboson_core::Result<(f64, f64)> {
    let grid = TimeGrid::uniform(m.horizon, steps)?;
    let nu = m.nu();
    let (mut worst, mut tail) = (0.0f64, 0.0f64);
    for i in 0..n_paths {
        let p = bm_from_normals(&vec![0.0; nu], &grid, &path_normals(seed, i, steps * nu, false))?;
        let tr = integrate(&p, &m.coupling, &m.xi, &m.potential, Flavor::Midpoint)?;
        let nt = nelson_trace(&p, &m.coupling, &m.xi, &m.potential, Flavor::Midpoint)?;
        let v = series_matrix_element(&m.coupling, &tr, &m.g, &m.h, steps, n_max)?;
        let r = nelson_resummed(&nt, &m.g, &m.h, steps)?;
        worst = worst.max((v.value()[(0, 0)] - r).norm() / r.norm());
        tail = tail.max(v.tail_ratio());
    }
    Ok((worst, tail))
}

/// Mean `max|series − SDE|` of `⟨ζ(g)⊗e_i, 𝕎 ζ(h)⊗e_j⟩` on nested grids of
/// the same Brownian paths, with the mean tail ratio; rows `(K, diff, tail)`.
pub fn spin_series_study(m: &StudyModel, steps: &[usize], n_max: usize, n_paths: u64, seed: u64) -> fkboson_core::Result<Vec<(usize, f64, f64)>> {
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    let fine = *sorted.last().ok_or_else(|| fkboson_core::Error::InvalidInput("no grids".into()))?;
    if sorted.iter().any(|k| fine % k != 0) {
        return Err(fkboson_core::Error::InvalidInput("grids must divide the finest grid".into()));
    }
    let nu = m.nu();
    let l = m.coupling.spin_dim();
    let grid = TimeGrid::uniform(m.horizon, fine)?;
    let fock = m.fock()?;
    let mut prop = SpinPropagator::new(&m.coupling, &m.xi, &m.potential, &fock)?;
    let left = coherent_columns(&fock, &m.g, l)?;
    let right = coherent_columns(&fock, &m.h, l)?;
    let mut rows = vec![];
    for &k in &sorted {
        prop.prepare(&TimeGrid::uniform(m.horizon, k)?)?;
        let (mut acc, mut tails) = (0.0, 0.0);
        for i in 0..n_paths {
            let p = bm_from_normals(&vec![0.0; nu], &grid, &path_normals(seed, i, fine * nu, false))?.coarsened(fine / k)?;
            let tr = integrate(&p, &m.coupling, &m.xi, &m.potential, Flavor::ItoLeft)?;
            let v = series_matrix_element(&m.coupling, &tr, &m.g, &m.h, k, n_max)?;
            let sde = left.adjoint() * prop.integrate(&p, &right, Scheme::Splitting)?.y;
            acc += max_abs(&(v.value() - sde));
            tails += v.tail_ratio();
        }
        rows.push((k, acc / n_paths as f64, tails / n_paths as f64));
    }
    Ok(rows)
}

/// Tolerances of criterion 8.
pub const NELSON_SERIES_TOL: f64 = 1e-6;
pub const SERIES_TAIL_TOL: f64 = 1e-3;
/// Pathwise agreement of two consistent schemes is of strong order ½.
pub const STRONG_SLOPE_MIN: f64 = 0.4;

/// Criterion 8: Nelson series against its resummed exponential, and the
/// L = 2 series against the SDE on the same paths for refined grids.
pub fn series_vs_sde(nelson: Option<&StudyModel>, spin: Option<&StudyModel>, n_max: usize, steps: &[usize], n_paths: u64, seed: u64) -> CheckOutcome {
    let fine = steps.iter().cloned().max().unwrap_or(64);
    let mut passed = true;
    let mut parts = vec![];
    let mut data = serde_json::Map::new();
    let mut tables = vec![];
    if let Some(m) = nelson {
        match nelson_series_study(m, fine, n_max, n_paths, seed) {
            Ok((e, tail)) => {
                passed &= e <= NELSON_SERIES_TOL && tail <= SERIES_TAIL_TOL;
                parts.push(format!("Nelson N_max={n_max}: rel. error {e:.2e} (tol {NELSON_SERIES_TOL:.0e}), tail ratio {tail:.2e} (tol {SERIES_TAIL_TOL:.0e})"));
                data.insert("nelson_rel_error".into(), json!(e));
                data.insert("nelson_tail_ratio".into(), json!(tail));
            }
            Err(e) => return failed("8", "series vs SDE", false, e),
        }
    }
    if let Some(m) = spin {
        match spin_series_study(m, steps, n_max, n_paths, seed.wrapping_add(1)) {
            Ok(rows) => {
                let mut t = Table::new("series_vs_sde", &["steps", "dt", "mean_abs_diff", "mean_tail_ratio"]);
                for (k, d, tl) in &rows {
                    t.push([k.to_string(), (m.horizon / *k as f64).to_string(), d.to_string(), tl.to_string()]);
                }
                let dts: Vec<f64> = rows.iter().map(|r| m.horizon / r.0 as f64).collect();
                let diffs: Vec<f64> = rows.iter().map(|r| r.1).collect();
                let slope = if rows.len() >= 2 { loglog_slope(&dts, &diffs) } else { f64::NAN };
                let tail = rows.iter().map(|r| r.2).fold(0.0, f64::max);
                passed &= slope >= STRONG_SLOPE_MIN && tail <= SERIES_TAIL_TOL;
                parts.push(format!(
                    "L={} series−SDE diffs {} (slope in Δ {slope:.2}, accept ≥ {STRONG_SLOPE_MIN}), tail ratio {tail:.2e}",
                    m.coupling.spin_dim(),
                    diffs.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")
                ));
                data.insert("spin_rows".into(), json!(rows));
                data.insert("spin_slope".into(), json!(slope));
                tables.push(t);
            }
            Err(e) => return failed("8", "series vs SDE", false, e),
        }
    }
    CheckOutcome { id: "8".into(), title: "series vs SDE".into(), passed, statistical: false, detail: parts.join("; "), data: serde_json::Value::Object(data), tables }
}

/// Symmetry residual `max|T(x,y) − T(y,x)†|` with paired reversed bridges
/// for each grid; rows `(K, residual, path residual)`.
pub fn kernel_symmetry_study<E: PathExecutor>(
    m: &StudyModel,
    x: &[f64],
    y: &[f64],
    steps: &[usize],
    n_paths: u64,
    seed: u64,
    exec: &E,
) -> fkboson_core::Result<Vec<(usize, f64, f64)>> {
    let fock = m.fock()?;
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    let mut rows = vec![];
    for &k in &sorted {
        let spec = KernelSpec {
            coupling: m.coupling.clone(),
            potential: m.potential.clone(),
            x: x.to_vec(),
            y: y.to_vec(),
            grid: TimeGrid::uniform(m.horizon, k)?,
            n_paths,
            seed,
            scheme: Scheme::Splitting,
        };
        let rep = kernel_symmetry_check(&spec, &fock, exec)?;
        rows.push((k, rep.residual, rep.path_residual));
    }
    Ok(rows)
}

pub const SEMIGROUP_Z_TOL: f64 = 4.0;

/// Criterion 9: kernel symmetry under refinement with paired reversed
/// bridges, and the statistical semigroup property at (s, t) = (¼, ¼).
pub fn kernel_and_semigroup<E: PathExecutor>(steps: &[usize], kernel_paths: u64, semigroup_paths: u64, seed: u64, exec: &E) -> CheckOutcome {
    let km = spin_model(Potential::Polynomial(vec![0.0, 0.0, 0.5]), 0.0, 0.5, 3);
    let rows = match kernel_symmetry_study(&km, &[0.3], &[-0.2], steps, kernel_paths, seed, exec) {
        Ok(r) => r,
        Err(e) => return failed("9", "kernel symmetry and semigroup", true, e),
    };
    let mut t = Table::new("kernel_symmetry", &["steps", "dt", "residual", "path_residual"]);
    for (k, r, pr) in &rows {
        t.push([k.to_string(), (km.horizon / *k as f64).to_string(), r.to_string(), pr.to_string()]);
    }
    let dts: Vec<f64> = rows.iter().map(|r| km.horizon / r.0 as f64).collect();
    let residuals: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let slope = if rows.len() >= 2 { loglog_slope(&dts, &residuals) } else { f64::NAN };
    let decreasing = residuals.iter().all(|r| *r <= RESIDUAL_FLOOR) || residuals.windows(2).all(|w| w[1] < w[0]);

    let mut st = Table::new("semigroup", &["model", "s", "t", "n_paths", "max_z"]);
    let mut zs = vec![];
    for (label, spec, n) in [
        ("nelson", nelson_fiber_spec(semigroup_paths, 64, seed ^ 0x5e), 8),
        ("spin", spin_fiber_spec(semigroup_paths, 64, seed ^ 0x5f), 4),
    ] {
        let r = TruncatedFock::with_cap(spec.coupling.modes(), n, spec.coupling.spin_dim(), fkboson_core::fock::DEFAULT_DIM_CAP)
            .and_then(|fock| semigroup_property_check(&spec, 0.25, 0.25, 64, Scheme::Splitting, &fock, exec));
        match r {
            Ok(rep) => {
                st.push([label.to_string(), "0.25".into(), "0.25".into(), semigroup_paths.to_string(), rep.z_max.to_string()]);
                zs.push(rep.z_max);
            }
            Err(e) => return failed("9", "kernel symmetry and semigroup", true, e),
        }
    }
    let zmax = zs.iter().cloned().fold(0.0, f64::max);
    CheckOutcome {
        id: "9".into(),
        title: "kernel symmetry and semigroup".into(),
        passed: first_order_or_exact(&residuals, slope) && decreasing && zmax <= SEMIGROUP_Z_TOL,
        statistical: true,
        detail: format!(
            "symmetry residuals {} (slope in Δ {slope:.3}, accept 0.8–1.25); semigroup max z {zmax:.2} (tol {SEMIGROUP_Z_TOL})",
            residuals.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>().join(", ")
        ),
        data: json!({ "rows": rows, "slope": slope, "semigroup_z": zs }),
        tables: vec![t, st],
    }
}

/// Nelson toy as a study model (t = 0.5, N = 8).
pub fn nelson_model() -> StudyModel {
    let s = nelson_fiber_spec(2, 2, 0);
    StudyModel { coupling: s.coupling, xi: s.xi, potential: s.potential, g: OneBosonVector::from_vec(vec![C64::new(0.3, 0.1)]), h: OneBosonVector::from_vec(vec![C64::new(0.2, -0.2)]), horizon: 0.5, max_bosons: 8 }
}
