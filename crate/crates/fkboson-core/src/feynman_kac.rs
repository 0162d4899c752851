//! Monte Carlo estimators for the Feynman–Kac identities, with standard
//! errors, oracle comparison and the pathwise integrability guard.
//!
//! Each path is generated from its own `(seed, index)` stream; executors only
//! decide where paths run, and results are reduced in index order so every
//! estimate is bit-identical for any worker count.

use alloc::vec;
use alloc::vec::Vec;

use crate::basic_processes::{integrate, nelson_trace, Flavor};
use crate::drivers::{bm_from_normals, bridge_drift_moment, sample_bridge_tagged, DriverPath, TimeGrid};
use crate::error::{config, invalid, Error, Result};
use crate::fock::TruncatedFock;
use crate::hamiltonians::OracleSemigroup;
use crate::linalg::{c, max_abs, CMatrix, C64};
use crate::modespace::{is_nelson, CouplingFamily, OneBosonVector};
use crate::potential::Potential;
use crate::rng::PathRng;
use crate::scalar_kernel::ScalarKernelSample;
use crate::spin_sde::{Scheme, SpinPropagator};
use crate::spin_series::series_matrix_element;

/// Runs `f(0..n)` and returns the results in index order.
pub trait PathExecutor: Sync {
    fn map_indexed<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl PathExecutor for Sequential {
    fn map_indexed<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

fn collect_ordered<T>(items: Vec<Result<T>>) -> Result<Vec<T>> {
    items.into_iter().collect()
}

/// Sample mean and per-component standard errors of matrix-valued samples.
/// The standard error matrix stores `SE(Re)` in the real part and `SE(Im)`
/// in the imaginary part of each entry.
pub fn matrix_mean_se(samples: &[CMatrix]) -> (CMatrix, CMatrix) {
    let n = samples.len();
    let (r, cc) = samples[0].shape();
    let mut mean = CMatrix::zeros(r, cc);
    for s in samples {
        mean += s;
    }
    mean /= c(n as f64);
    let mut se = CMatrix::zeros(r, cc);
    if n > 1 {
        for i in 0..r {
            for j in 0..cc {
                let (mut vr, mut vi) = (0.0, 0.0);
                for s in samples {
                    let d = s[(i, j)] - mean[(i, j)];
                    vr += d.re * d.re;
                    vi += d.im * d.im;
                }
                let denom = (n - 1) as f64 * n as f64;
                se[(i, j)] = C64::new(libm::sqrt(vr / denom), libm::sqrt(vi / denom));
            }
        }
    }
    (mean, se)
}

fn component_z(diff: f64, se: f64, scale: f64) -> f64 {
    if diff.abs() <= 1e-12 * (1.0 + scale) {
        0.0
    } else if se > 0.0 {
        diff.abs() / se
    } else {
        f64::INFINITY
    }
}

/// Largest per-component z-score `|estimate − oracle| / SE`. Agreement to
/// `1e−12·(1 + |oracle|)` scores 0 whatever the standard error (which is
/// pure rounding noise for deterministic integrands); a mismatch with zero
/// standard error scores ∞.
pub fn max_z(estimate: &CMatrix, se: &CMatrix, oracle: &CMatrix) -> f64 {
    let mut z: f64 = 0.0;
    for ((e, s), o) in estimate.iter().zip(se.iter()).zip(oracle.iter()) {
        let d = e - o;
        z = z.max(component_z(d.re, s.re, o.norm())).max(component_z(d.im, s.im, o.norm()));
    }
    z
}

#[derive(Debug, Clone)]
pub struct EstimatorResult {
    pub estimate: CMatrix,
    pub std_error: CMatrix,
    pub n_samples: u64,
    pub steps: usize,
    pub horizon: f64,
    pub seed: u64,
    pub oracle: Option<CMatrix>,
    pub z_max: Option<f64>,
    /// Largest `ln(‖Y η‖/‖η‖) − Σ Δ(Λ² − V)` over paths and columns (SDE runs).
    pub norm_bound_excess: Option<f64>,
}

impl EstimatorResult {
    fn new(samples: &[CMatrix], grid: &TimeGrid, seed: u64, oracle: Option<CMatrix>) -> Self {
        let (estimate, std_error) = matrix_mean_se(samples);
        let z_max = oracle.as_ref().map(|o| max_z(&estimate, &std_error, o));
        Self {
            estimate,
            std_error,
            n_samples: samples.len() as u64,
            steps: grid.steps(),
            horizon: grid.horizon(),
            seed,
            oracle,
            z_max,
            norm_bound_excess: None,
        }
    }

    /// `max |estimate − oracle|`.
    pub fn abs_error(&self) -> Option<f64> {
        self.oracle.as_ref().map(|o| max_abs(&(&self.estimate - o)))
    }

    /// Largest standard error over all real and imaginary components.
    pub fn max_se(&self) -> f64 {
        self.std_error.iter().map(|z| z.re.max(z.im)).fold(0.0, f64::max)
    }
}

/// Standard normals for path `index`; with `antithetic`, odd paths reuse the
/// stream of the preceding even path with flipped signs.
pub fn path_normals(seed: u64, index: u64, count: usize, antithetic: bool) -> Vec<f64> {
    let (stream, flip) = if antithetic { (index & !1, index & 1 == 1) } else { (index, false) };
    let mut rng = PathRng::new(seed, stream);
    let mut z = vec![0.0; count];
    rng.fill_normal(&mut z);
    if flip {
        z.iter_mut().for_each(|v| *v = -*v);
    }
    z
}

fn bm_path(x0: &[f64], grid: &TimeGrid, seed: u64, index: u64, antithetic: bool) -> DriverPath {
    let z = path_normals(seed, index, grid.steps() * x0.len(), antithetic);
    bm_from_normals(x0, grid, &z).expect("consistent lengths")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FiberMode {
    /// Truncation-free matrix elements: scalar closed form when F = 0, the
    /// resummed exponential for Nelson couplings, otherwise the series up to
    /// `series_order`.
    ClosedForm { flavor: Flavor, series_order: usize },
    /// Integrate the SDE on the same truncated space as the oracle.
    SdeOnTruncated { scheme: Scheme },
}

/// Inputs of a fiber estimate `⟨ζ(g)⊗e_i, e^{−tĤ(ξ)} ζ(h)⊗e_j⟩`.
#[derive(Debug, Clone)]
pub struct FiberSpec {
    pub coupling: CouplingFamily,
    pub xi: Vec<f64>,
    pub potential: Potential,
    pub g: OneBosonVector,
    pub h: OneBosonVector,
    pub grid: TimeGrid,
    pub n_paths: u64,
    pub seed: u64,
    pub antithetic: bool,
}

impl FiberSpec {
    fn check(&self) -> Result<()> {
        if !self.coupling.is_position_independent() {
            return Err(config("fiber estimates need position-independent couplings"));
        }
        if !self.potential.is_constant() {
            return Err(config("fiber estimates need a constant potential"));
        }
        if self.n_paths < 2 {
            return Err(invalid("at least two paths are needed for a standard error"));
        }
        crate::error::check_len(self.coupling.modes().space_dim(), self.xi.len())
    }
}

/// `η` columns `ζ_N(h) ⊗ e_j`, stacked spin-major.
pub fn coherent_columns(fock: &TruncatedFock, h: &OneBosonVector, spin_dim: usize) -> Result<CMatrix> {
    let (z, _) = fock.exp_vector(h)?;
    let d = fock.dim();
    let mut eta = CMatrix::zeros(d * spin_dim, spin_dim);
    for j in 0..spin_dim {
        eta.view_mut((j * d, j), (d, 1)).copy_from(&z);
    }
    Ok(eta)
}

/// `⟨ζ_N(g)⊗e_i, A ζ_N(h)⊗e_j⟩`.
pub fn sandwich(fock: &TruncatedFock, g: &OneBosonVector, a: &CMatrix, h: &OneBosonVector, spin_dim: usize) -> Result<CMatrix> {
    let left = coherent_columns(fock, g, spin_dim)?;
    let right = coherent_columns(fock, h, spin_dim)?;
    Ok(left.adjoint() * a * right)
}

/// Exact truncated value `⟨ζ_N(g)⊗e_i, e^{−tĤ} ζ_N(h)⊗e_j⟩`.
pub fn fiber_oracle(spec: &FiberSpec, fock: &TruncatedFock) -> Result<CMatrix> {
    let prop = SpinPropagator::new(&spec.coupling, &spec.xi, &spec.potential, fock)?;
    let x0 = vec![0.0; spec.coupling.modes().space_dim()];
    let sg = OracleSemigroup::new(prop.generators(&x0)?.h_full);
    sandwich(fock, &spec.g, &sg.at(spec.grid.horizon())?, &spec.h, spec.coupling.spin_dim())
}

/// Guard `|sample| ≤ e^{bound}` with a small relative slack.
fn guard(path: u64, value: f64, log_bound: f64) -> Result<()> {
    let bound = libm::exp(log_bound);
    if !(value <= bound * (1.0 + 1e-8) + 1e-300) {
        return Err(Error::Integrability { path, value, bound });
    }
    Ok(())
}

pub fn estimate_fiber_matrix_element<E: PathExecutor>(
    spec: &FiberSpec,
    mode: FiberMode,
    fock: &TruncatedFock,
    exec: &E,
) -> Result<EstimatorResult> {
    spec.check()?;
    let oracle = fiber_oracle(spec, fock)?;
    let nu = spec.coupling.modes().space_dim();
    let x0 = vec![0.0; nu];
    let l = spec.coupling.spin_dim();
    let modes = spec.coupling.modes();
    let t = spec.grid.horizon();
    let v0 = spec.potential.eval(&x0);
    let lam = crate::spin_sde::lambda_bound(&spec.coupling, &x0);
    match mode {
        FiberMode::ClosedForm { flavor, series_order } => {
            let f_zero = spec.coupling.f(&x0).iter().all(|f| f.iter().all(|z| z.norm() == 0.0));
            let nelson = is_nelson(&spec.coupling);
            let coh = 0.5 * (modes.norm_sq(&spec.g) + modes.norm_sq(&spec.h));
            let results = exec.map_indexed(spec.n_paths, |i| -> Result<CMatrix> {
                let path = bm_path(&x0, &spec.grid, spec.seed, i, spec.antithetic);
                let k = path.steps();
                if nelson {
                    let tr = nelson_trace(&path, &spec.coupling, &spec.xi, &spec.potential, flavor)?;
                    let v = ScalarKernelSample::from_trace(&tr, k).matrix_element(&spec.g, &spec.h);
                    guard(i, v.norm(), t * (lam * lam - v0) + coh)?;
                    return Ok(CMatrix::from_element(1, 1, v));
                }
                let tr = integrate(&path, &spec.coupling, &spec.xi, &spec.potential, flavor)?;
                if f_zero {
                    let v = ScalarKernelSample::from_trace(&tr, k).matrix_element(&spec.g, &spec.h);
                    guard(i, v.norm(), -tr.potential_integral(k) + coh)?;
                    return Ok(CMatrix::identity(l, l) * v);
                }
                Ok(series_matrix_element(&spec.coupling, &tr, &spec.g, &spec.h, k, series_order)?.value().clone())
            });
            let samples = collect_ordered(results)?;
            Ok(EstimatorResult::new(&samples, &spec.grid, spec.seed, Some(oracle)))
        }
        FiberMode::SdeOnTruncated { scheme } => {
            let mut prop = SpinPropagator::new(&spec.coupling, &spec.xi, &spec.potential, fock)?;
            prop.prepare(&spec.grid)?;
            let eta = coherent_columns(fock, &spec.h, l)?;
            let left = coherent_columns(fock, &spec.g, l)?;
            let col_norms: Vec<f64> = (0..l).map(|j| eta.column(j).norm()).collect();
            let results = exec.map_indexed(spec.n_paths, |i| -> Result<(CMatrix, f64)> {
                let path = bm_path(&x0, &spec.grid, spec.seed, i, spec.antithetic);
                let res = prop.integrate(&path, &eta, scheme)?;
                let mut excess = f64::NEG_INFINITY;
                for j in 0..l {
                    let ratio = res.y.column(j).norm() / col_norms[j];
                    excess = excess.max(libm::log(ratio) - res.log_bound);
                }
                if scheme == Scheme::Splitting {
                    guard(i, libm::exp(excess), 0.0)?;
                }
                Ok((left.adjoint() * &res.y, excess))
            });
            let pairs = collect_ordered(results)?;
            let excess = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let samples: Vec<CMatrix> = pairs.into_iter().map(|p| p.0).collect();
            let mut out = EstimatorResult::new(&samples, &spec.grid, spec.seed, Some(oracle));
            out.norm_bound_excess = Some(excess);
            Ok(out)
        }
    }
}

/// Gaussian heat kernel `p_t(x,y) = (2πt)^{−ν/2} e^{−|x−y|²/(2t)}`.
pub fn heat_kernel(t: f64, x: &[f64], y: &[f64]) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    libm::pow(2.0 * core::f64::consts::PI * t, -(x.len() as f64) / 2.0) * libm::exp(-d2 / (2.0 * t))
}

/// Inputs of a kernel estimate `T_t(x,y) = p_t(x,y) E[𝕎_t[b^{t;y,x}]]`.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub coupling: CouplingFamily,
    pub potential: Potential,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub grid: TimeGrid,
    pub n_paths: u64,
    pub seed: u64,
    pub scheme: Scheme,
}

impl KernelSpec {
    fn propagator(&self, fock: &TruncatedFock) -> Result<SpinPropagator> {
        let modes = self.coupling.modes();
        if modes.has_momentum() {
            return Err(config("kernel estimates require m = 0"));
        }
        if self.n_paths < 2 {
            return Err(invalid("at least two paths are needed for a standard error"));
        }
        let nu = modes.space_dim();
        crate::error::check_len(nu, self.x.len())?;
        crate::error::check_len(nu, self.y.len())?;
        let mut p = SpinPropagator::new(&self.coupling, &vec![0.0; nu], &self.potential, fock)?;
        p.prepare(&self.grid)?;
        p.prepare(&self.grid.reversed())?;
        Ok(p)
    }

    fn bridge(&self, i: u64) -> Result<DriverPath> {
        sample_bridge_tagged(&self.y, &self.x, &self.grid, self.seed, i)
    }
}

/// Operator-valued kernel estimate on `ℂ^L ⊗ ℱ_N`.
pub fn estimate_kernel<E: PathExecutor>(spec: &KernelSpec, fock: &TruncatedFock, exec: &E) -> Result<EstimatorResult> {
    let prop = spec.propagator(fock)?;
    let n = prop.block_dim();
    let id = CMatrix::identity(n, n);
    let pt = heat_kernel(spec.grid.horizon(), &spec.x, &spec.y);
    let results = exec.map_indexed(spec.n_paths, |i| -> Result<CMatrix> {
        let path = spec.bridge(i)?;
        let res = prop.integrate(&path, &id, spec.scheme)?;
        Ok(res.y * c(pt))
    });
    let samples = collect_ordered(results)?;
    Ok(EstimatorResult::new(&samples, &spec.grid, spec.seed, None))
}

#[derive(Debug, Clone)]
pub struct KernelSymmetryReport {
    /// `max |T(x,y) − T(y,x)†|` of the paired means.
    pub residual: f64,
    /// Largest entrywise z-score of the paired difference.
    pub z_max: f64,
    /// Largest per-path `‖𝕎[b̄] − 𝕎[b]*‖` (max-entry, scaled by `p_t`).
    pub path_residual: f64,
    pub steps: usize,
}

/// Symmetry `T(x,y) = T(y,x)*` with the (y,x) kernel sampled on the
/// reversals of the (x,y) bridges.
pub fn kernel_symmetry_check<E: PathExecutor>(spec: &KernelSpec, fock: &TruncatedFock, exec: &E) -> Result<KernelSymmetryReport> {
    let prop = spec.propagator(fock)?;
    let n = prop.block_dim();
    let id = CMatrix::identity(n, n);
    let pt = heat_kernel(spec.grid.horizon(), &spec.x, &spec.y);
    let results = exec.map_indexed(spec.n_paths, |i| -> Result<CMatrix> {
        let path = spec.bridge(i)?;
        let fwd = prop.integrate(&path, &id, spec.scheme)?;
        let rev = prop.integrate(&path.reversed(), &id, spec.scheme)?;
        Ok((fwd.y - rev.y.adjoint()) * c(pt))
    });
    let diffs = collect_ordered(results)?;
    let path_residual = diffs.iter().map(max_abs).fold(0.0, f64::max);
    let (mean, se) = matrix_mean_se(&diffs);
    let zero = CMatrix::zeros(n, n);
    Ok(KernelSymmetryReport { residual: max_abs(&mean), z_max: max_z(&mean, &se, &zero), path_residual, steps: spec.grid.steps() })
}

#[derive(Debug, Clone)]
pub struct SemigroupReport {
    pub estimate: EstimatorResult,
    /// `⟨ζ(g), e^{−sĤ} e^{−tĤ} ζ(h)⟩` on the truncated space.
    pub composed_oracle: CMatrix,
    pub z_max: f64,
}

/// Compares the SDE estimate at horizon `s + t` with the composed truncated
/// oracle `e^{−sĤ} e^{−tĤ}`.
pub fn semigroup_property_check<E: PathExecutor>(
    spec: &FiberSpec,
    s: f64,
    t: f64,
    steps: usize,
    scheme: Scheme,
    fock: &TruncatedFock,
    exec: &E,
) -> Result<SemigroupReport> {
    let mut sp = spec.clone();
    sp.grid = TimeGrid::uniform(s + t, steps)?;
    let prop = SpinPropagator::new(&spec.coupling, &spec.xi, &spec.potential, fock)?;
    let x0 = vec![0.0; spec.coupling.modes().space_dim()];
    let sg = OracleSemigroup::new(prop.generators(&x0)?.h_full);
    let composed = sg.at(s)? * sg.at(t)?;
    let composed_oracle = sandwich(fock, &spec.g, &composed, &spec.h, spec.coupling.spin_dim())?;
    let estimate = estimate_fiber_matrix_element(&sp, FiberMode::SdeOnTruncated { scheme }, fock, exec)?;
    let z_max = max_z(&estimate.estimate, &estimate.std_error, &composed_oracle);
    Ok(SemigroupReport { estimate, composed_oracle, z_max })
}

/// Exact weak bias `‖E[scheme] − oracle‖` of the SDE scheme (ν = 1).
pub fn exact_scheme_bias(spec: &FiberSpec, scheme: Scheme, fock: &TruncatedFock) -> Result<f64> {
    let mut prop = SpinPropagator::new(&spec.coupling, &spec.xi, &spec.potential, fock)?;
    prop.prepare(&spec.grid)?;
    let mean = prop.scheme_mean(&spec.grid, scheme)?;
    let l = spec.coupling.spin_dim();
    let a = sandwich(fock, &spec.g, &mean, &spec.h, l)?;
    Ok(max_abs(&(a - fiber_oracle(spec, fock)?)))
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub steps: usize,
    pub max_bosons: usize,
    pub n_paths: u64,
    pub abs_error: f64,
    pub max_se: f64,
    pub z_max: f64,
    /// Exact scheme bias when available (ν = 1 SDE runs).
    pub exact_bias: Option<f64>,
}

/// Runs the fiber estimator over all combinations of steps, truncations and
/// path counts.
pub fn convergence_sweep<E: PathExecutor>(
    base: &FiberSpec,
    mode: FiberMode,
    steps: &[usize],
    truncations: &[usize],
    path_counts: &[u64],
    exec: &E,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &k in steps {
        for &nmax in truncations {
            let fock = TruncatedFock::with_cap(base.coupling.modes(), nmax, base.coupling.spin_dim(), crate::fock::DEFAULT_DIM_CAP)?;
            for &np in path_counts {
                let mut spec = base.clone();
                spec.grid = TimeGrid::uniform(base.grid.horizon(), k)?;
                spec.n_paths = np;
                let r = estimate_fiber_matrix_element(&spec, mode, &fock, exec)?;
                let exact_bias = match mode {
                    FiberMode::SdeOnTruncated { scheme } if spec.xi.len() == 1 => exact_scheme_bias(&spec, scheme, &fock).ok(),
                    _ => None,
                };
                rows.push(SweepRow {
                    steps: k,
                    max_bosons: nmax,
                    n_paths: np,
                    abs_error: r.abs_error().unwrap_or(f64::NAN),
                    max_se: r.max_se(),
                    z_max: r.z_max.unwrap_or(f64::NAN),
                    exact_bias,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy)]
pub struct MomentCheck {
    pub p: u32,
    pub nu: usize,
    pub t_frac: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub exact: f64,
    pub z: f64,
}

/// Empirical `E|Y_t|^{2p}` of bridge drifts from `x0` to `y`, at the grid node
/// `t = t_frac · T` (the grid must contain that node).
pub fn estimate_bridge_moment<E: PathExecutor>(
    p: u32,
    x0: &[f64],
    y: &[f64],
    grid: &TimeGrid,
    t_frac: f64,
    n_paths: u64,
    seed: u64,
    exec: &E,
) -> Result<MomentCheck> {
    let t_target = t_frac * grid.horizon();
    let node = grid
        .nodes()
        .iter()
        .position(|&t| (t - t_target).abs() <= 1e-12 * grid.horizon())
        .ok_or_else(|| invalid("moment time is not a grid node"))?;
    let vals = exec.map_indexed(n_paths, |i| -> Result<f64> {
        let path = sample_bridge_tagged(x0, y, grid, seed, i)?;
        let r2: f64 = path.drift(node).iter().map(|v| v * v).sum();
        Ok(libm::pow(r2, p as f64))
    });
    let vals = collect_ordered(vals)?;
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = libm::sqrt(var / n);
    let dist = libm::sqrt(x0.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
    let exact = bridge_drift_moment(p, t_target, grid.horizon(), dist, x0.len() as u32)?;
    Ok(MomentCheck { p, nu: x0.len(), t_frac, empirical: mean, std_error: se, exact, z: (mean - exact).abs() / se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modespace::{nelson_preset, ModeSpace};

    fn nelson_spec(n_paths: u64, steps: usize) -> FiberSpec {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let (_, cf) = nelson_preset(&modes, OneBosonVector::from_vec(vec![c(0.3)]), false).unwrap();
        FiberSpec {
            coupling: cf,
            xi: vec![0.0],
            potential: Potential::Zero,
            g: OneBosonVector::from_vec(vec![c(0.4)]),
            h: OneBosonVector::from_vec(vec![c(0.3)]),
            grid: TimeGrid::uniform(0.5, steps).unwrap(),
            n_paths,
            seed: 11,
            antithetic: false,
        }
    }

    #[test]
    fn free_field_is_deterministic() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let z = OneBosonVector::zeros(1);
        let cf = CouplingFamily::new(&modes, vec![0.0], vec![z.clone()], vec![z], vec![CMatrix::identity(1, 1)]).unwrap();
        let mut spec = nelson_spec(8, 16);
        spec.coupling = cf;
        let fock = TruncatedFock::new(&modes, 8).unwrap();
        let r = estimate_fiber_matrix_element(&spec, FiberMode::SdeOnTruncated { scheme: Scheme::Splitting }, &fock, &Sequential).unwrap();
        assert_eq!(r.z_max, Some(0.0));
        assert_eq!(r.max_se(), 0.0);
    }

    #[test]
    fn nelson_sde_matches_oracle() {
        let spec = nelson_spec(64, 32);
        let modes = spec.coupling.modes().clone();
        let fock = TruncatedFock::new(&modes, 8).unwrap();
        let r = estimate_fiber_matrix_element(&spec, FiberMode::SdeOnTruncated { scheme: Scheme::Splitting }, &fock, &Sequential).unwrap();
        // deterministic splitting: exp(−tR) is exact
        assert!(r.abs_error().unwrap() < 1e-12);
        assert!(r.norm_bound_excess.unwrap() <= 1e-12);
        let b64 = exact_scheme_bias(&nelson_spec(2, 64), Scheme::EulerMaruyama, &fock).unwrap();
        let b128 = exact_scheme_bias(&nelson_spec(2, 128), Scheme::EulerMaruyama, &fock).unwrap();
        assert!((1.8..=2.2).contains(&(b64 / b128)));
        let cf = estimate_fiber_matrix_element(&spec, FiberMode::ClosedForm { flavor: Flavor::Midpoint, series_order: 0 }, &fock, &Sequential).unwrap();
        assert!(cf.abs_error().unwrap() < 1e-3);
    }

    #[test]
    fn bridge_moment_small_run() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let m = estimate_bridge_moment(1, &[0.0], &[1.0], &grid, 0.5, 4000, 3, &Sequential).unwrap();
        assert!((m.exact - 2.0).abs() < 1e-14);
        assert!(m.z < 5.0);
    }

    #[test]
    fn kernel_free_field_and_symmetry() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let (_, cf) = nelson_preset(&modes, OneBosonVector::from_vec(vec![c(0.2)]), false).unwrap();
        let fock = TruncatedFock::new(&modes, 4).unwrap();
        let spec = KernelSpec {
            coupling: cf,
            potential: Potential::Zero,
            x: vec![0.3],
            y: vec![-0.2],
            grid: TimeGrid::uniform(0.5, 16).unwrap(),
            n_paths: 8,
            seed: 1,
            scheme: Scheme::Splitting,
        };
        let r = estimate_kernel(&spec, &fock, &Sequential).unwrap();
        // path-independent integrand up to rounding in the unitary factor
        assert!(r.max_se() < 1e-14);
        let rep = kernel_symmetry_check(&spec, &fock, &Sequential).unwrap();
        assert!(rep.residual < 1e-12);
    }
}
