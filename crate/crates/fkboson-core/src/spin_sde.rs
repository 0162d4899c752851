//! Matrix-valued integrand on `ℂ^L ⊗ ℱ_N`: generators, the SDE
//! `dY = −Ĥ(ξ,X) Y ds − i v(ξ,X) Y dX` integrated by Lie splitting or
//! Euler–Maruyama, and the pathwise norm bound.
//!
//! Block vectors are stacked spin-major: rows `b·d .. (b+1)·d` hold spin
//! component `b` over the `d`-dimensional truncated Fock space.

use alloc::borrow::Cow;
use alloc::vec::Vec;

use crate::drivers::{DriverPath, TimeGrid};
use crate::error::{check_len, invalid, Error, Result};
use crate::fock::TruncatedFock;
use crate::linalg::{add_kron, apply_block_diag, c, expm, is_finite_matrix, kron_identity, max_abs, operator_norm, CMatrix, HermitianSpectrum, C64, I};
use crate::modespace::CouplingFamily;
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Splitting,
    EulerMaruyama,
}

/// Generators at one position.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub x: Vec<f64>,
    /// `v_ℓ(ξ,x) = ξ_ℓ − dΓ(m_ℓ) − φ(G_{ℓ,x})`.
    pub v: Vec<CMatrix>,
    /// `½Σv_ℓ² − (i/2)φ(q_x) + dΓ(ω) + V(x)`.
    pub h_sc: CMatrix,
    /// `id ⊗ Ĥ_sc − Σ_j σ_j ⊗ φ(F_{j,x})`.
    pub h_full: CMatrix,
    /// `Ĥ − ½Σ id ⊗ v_ℓ²`.
    pub r: CMatrix,
    pub spin_dim: usize,
    pub fock_dim: usize,
}

impl GeneratorSet {
    pub fn build(coupling: &CouplingFamily, xi: &[f64], potential: &Potential, x: &[f64], fock: &TruncatedFock) -> Result<Self> {
        let parts = Parts::build(coupling, xi, x, fock)?;
        let v_x = potential.eval(x);
        Ok(parts.into_set(x, v_x))
    }

    /// `max |Ĥ − (½Σ id⊗v² + R)|`.
    pub fn reconstruction_defect(&self) -> f64 {
        let mut sum = self.r.clone();
        for v in &self.v {
            sum += kron_identity(self.spin_dim, &(v * v)) * c(0.5);
        }
        max_abs(&(&self.h_full - sum))
    }
}

/// Position-dependent pieces before the potential is added.
#[derive(Debug, Clone)]
struct Parts {
    v: Vec<CMatrix>,
    half_v2: CMatrix,
    /// `−(i/2)φ(q) + dΓ(ω)`.
    scalar0: CMatrix,
    /// `id ⊗ scalar0 − Σσ_j⊗φ(F_j)` (no potential).
    r0: CMatrix,
    spin_dim: usize,
    fock_dim: usize,
}

impl Parts {
    fn build(coupling: &CouplingFamily, xi: &[f64], x: &[f64], fock: &TruncatedFock) -> Result<Self> {
        let modes = coupling.modes();
        let nu = modes.space_dim();
        check_len(nu, xi.len())?;
        check_len(nu, x.len())?;
        check_len(modes.mode_count(), fock.mode_count())?;
        let d = fock.dim();
        let l = coupling.spin_dim();
        let snap = coupling.snapshot(x);
        let mut v = Vec::with_capacity(nu);
        let mut half_v2 = CMatrix::zeros(d, d);
        for ell in 0..nu {
            let mut vl = CMatrix::identity(d, d) * c(xi[ell]);
            vl -= fock.d_gamma_real(&modes.momentum_component(ell))?;
            vl -= fock.field(&snap.g[ell])?;
            half_v2 += &vl * &vl * c(0.5);
            v.push(vl);
        }
        let mut scalar = fock.d_gamma_real(modes.omega())?;
        scalar -= fock.field(&snap.q)? * (I * 0.5);
        let mut r0 = kron_identity(l, &scalar);
        for (sigma, f) in coupling.spin_matrices().iter().zip(&snap.f) {
            let phi = fock.field(f)?;
            add_kron(&mut r0, sigma, &phi, c(-1.0));
        }
        Ok(Self { v, half_v2, scalar0: scalar, r0, spin_dim: l, fock_dim: d })
    }

    fn into_set(self, x: &[f64], v_x: f64) -> GeneratorSet {
        let l = self.spin_dim;
        let d = self.fock_dim;
        let mut r = self.r0;
        for i in 0..l * d {
            r[(i, i)] += c(v_x);
        }
        let h_full = &r + kron_identity(l, &self.half_v2);
        let mut h_sc = &self.half_v2 + &self.scalar0;
        for i in 0..d {
            h_sc[(i, i)] += c(v_x);
        }
        GeneratorSet { x: x.to_vec(), v: self.v, h_sc, h_full, r, spin_dim: l, fock_dim: d }
    }
}

/// `Λ(x)`: operator norm of the L×L matrix with entries `‖ω^{−1/2}(σ·F_x)_{ij}‖`.
pub fn lambda_bound(coupling: &CouplingFamily, x: &[f64]) -> f64 {
    let modes = coupling.modes();
    let l = coupling.spin_dim();
    let f = coupling.f(x);
    let mut b = CMatrix::zeros(l, l);
    for i in 0..l {
        for j in 0..l {
            let mut acc = 0.0;
            for k in 0..modes.mode_count() {
                let mut z = c(0.0);
                for (sigma, fa) in coupling.spin_matrices().iter().zip(&f) {
                    z += sigma[(i, j)] * fa[k];
                }
                acc += modes.mu()[k] * z.norm_sqr() / modes.omega()[k];
            }
            b[(i, j)] = c(libm::sqrt(acc));
        }
    }
    operator_norm(&b)
}

/// Result of integrating the SDE along one path.
#[derive(Debug, Clone)]
pub struct SpinKernelResult {
    pub y: CMatrix,
    /// `Σ_j Δ_j (Λ(X_j)² − V(X_j))`, the discrete exponent of the norm bound.
    pub log_bound: f64,
    pub scheme: Scheme,
}

/// Integrator state shared by all paths of a run.
#[derive(Debug, Clone)]
pub struct SpinPropagator {
    coupling: CouplingFamily,
    xi: Vec<f64>,
    potential: Potential,
    fock: TruncatedFock,
    fixed: Option<FixedParts>,
}

#[derive(Debug, Clone)]
struct FixedParts {
    parts: Parts,
    h0: CMatrix,
    v_spectrum: Option<HermitianSpectrum>,
    lambda: f64,
    split_cache: Vec<(f64, CMatrix)>,
}

const STEP_MATCH: f64 = 1e-12;

impl SpinPropagator {
    pub fn new(coupling: &CouplingFamily, xi: &[f64], potential: &Potential, fock: &TruncatedFock) -> Result<Self> {
        let l = coupling.spin_dim();
        if fock.dim() * l > crate::fock::DEFAULT_DIM_CAP {
            return Err(Error::DimensionCap { dim: fock.dim() * l, cap: crate::fock::DEFAULT_DIM_CAP });
        }
        let fixed = if coupling.is_position_independent() {
            let x0 = alloc::vec![0.0; coupling.modes().space_dim()];
            let parts = Parts::build(coupling, xi, &x0, fock)?;
            let h0 = &parts.r0 + kron_identity(parts.spin_dim, &parts.half_v2);
            let v_spectrum = (parts.v.len() == 1).then(|| HermitianSpectrum::new(&parts.v[0]));
            Some(FixedParts { parts, h0, v_spectrum, lambda: lambda_bound(coupling, &x0), split_cache: Vec::new() })
        } else {
            None
        };
        Ok(Self { coupling: coupling.clone(), xi: xi.to_vec(), potential: potential.clone(), fock: fock.clone(), fixed })
    }

    pub fn coupling(&self) -> &CouplingFamily {
        &self.coupling
    }

    pub fn fock(&self) -> &TruncatedFock {
        &self.fock
    }

    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn block_dim(&self) -> usize {
        self.fock.dim() * self.coupling.spin_dim()
    }

    /// Precomputes `e^{−Δ R}` for every distinct step length of `grid`
    /// (position-independent couplings only; a no-op otherwise).
    pub fn prepare(&mut self, grid: &TimeGrid) -> Result<()> {
        let Some(fixed) = self.fixed.as_mut() else { return Ok(()) };
        for j in 0..grid.steps() {
            let dt = grid.step(j);
            if fixed.split_cache.iter().any(|(s, _)| (s - dt).abs() <= STEP_MATCH * dt) {
                continue;
            }
            let e = expm(&(&fixed.parts.r0 * c(-dt)))?;
            fixed.split_cache.push((dt, e));
        }
        Ok(())
    }

    pub fn generators(&self, x: &[f64]) -> Result<GeneratorSet> {
        GeneratorSet::build(&self.coupling, &self.xi, &self.potential, x, &self.fock)
    }

    fn lambda(&self, x: &[f64]) -> f64 {
        match &self.fixed {
            Some(f) => f.lambda,
            None => lambda_bound(&self.coupling, x),
        }
    }

    /// `e^{−Δ R(x)}` without the potential factor.
    fn split_drift(&self, x: &[f64], dt: f64) -> Result<Cow<'_, CMatrix>> {
        if let Some(f) = &self.fixed {
            if let Some((_, e)) = f.split_cache.iter().find(|(s, _)| (s - dt).abs() <= STEP_MATCH * dt) {
                return Ok(Cow::Borrowed(e));
            }
            return expm(&(&f.parts.r0 * c(-dt))).map(Cow::Owned);
        }
        let parts = Parts::build(&self.coupling, &self.xi, x, &self.fock)?;
        expm(&(&parts.r0 * c(-dt))).map(Cow::Owned)
    }

    /// `Y ↦ (id ⊗ e^{−iΣ v_ℓ ΔX_ℓ}) Y`.
    fn apply_unitary(&self, x: &[f64], dx: &[f64], y: &CMatrix) -> Result<CMatrix> {
        if let Some(FixedParts { v_spectrum: Some(sp), .. }) = &self.fixed {
            return Ok(apply_spectral_blocks(sp, |lam| (-I * lam * dx[0]).exp(), y));
        }
        let v = match &self.fixed {
            Some(f) => f.parts.v.clone(),
            None => Parts::build(&self.coupling, &self.xi, x, &self.fock)?.v,
        };
        let d = self.fock.dim();
        let mut a = CMatrix::zeros(d, d);
        for (vl, &dl) in v.iter().zip(dx) {
            a += vl * c(dl);
        }
        let sp = HermitianSpectrum::new(&a);
        Ok(apply_spectral_blocks(&sp, |lam| (-I * lam).exp(), y))
    }

    /// `Ĥ − V` and the `v_ℓ` at `x`.
    fn h_and_v(&self, x: &[f64]) -> Result<(Cow<'_, CMatrix>, Cow<'_, [CMatrix]>)> {
        Ok(match &self.fixed {
            Some(f) => (Cow::Borrowed(&f.h0), Cow::Borrowed(&f.parts.v[..])),
            None => {
                let p = Parts::build(&self.coupling, &self.xi, x, &self.fock)?;
                let h = &p.r0 + kron_identity(p.spin_dim, &p.half_v2);
                (Cow::Owned(h), Cow::Owned(p.v))
            }
        })
    }

    /// Integrates the columns of `eta0` along `path`.
    pub fn integrate(&self, path: &DriverPath, eta0: &CMatrix, scheme: Scheme) -> Result<SpinKernelResult> {
        check_len(self.block_dim(), eta0.nrows())?;
        check_len(self.coupling.modes().space_dim(), path.space_dim())?;
        let mut y = eta0.clone();
        let mut log_bound = 0.0;
        for j in 0..path.steps() {
            let x = path.position(j);
            let dt = path.grid().step(j);
            let dx = path.displacement(j);
            let vx = self.potential.eval(x);
            let lam = self.lambda(x);
            log_bound += dt * (lam * lam - vx);
            y = match scheme {
                Scheme::Splitting => {
                    let e = self.split_drift(x, dt)?;
                    let y1 = (e.as_ref() * &y) * c(libm::exp(-dt * vx));
                    self.apply_unitary(x, &dx, &y1)?
                }
                Scheme::EulerMaruyama => {
                    let (h, v) = self.h_and_v(x)?;
                    let mut next = &y * c(1.0 - dt * vx) - (h.as_ref() * &y) * c(dt);
                    for (vl, &dl) in v.iter().zip(&dx) {
                        next -= apply_block_diag(vl, &y) * (I * dl);
                    }
                    next
                }
            };
            if !is_finite_matrix(&y) {
                return Err(Error::Overflow { node: j + 1, context: "spin SDE integration" });
            }
        }
        Ok(SpinKernelResult { y, log_bound, scheme })
    }

    /// Exact expectation of the discrete scheme over Brownian increments,
    /// available for ν = 1, position-independent couplings and constant V:
    /// splitting gives `Π (id⊗e^{−½v²Δ}) e^{−ΔR}`, Euler–Maruyama `Π (1 − ΔĤ)`.
    pub fn scheme_mean(&self, grid: &TimeGrid, scheme: Scheme) -> Result<CMatrix> {
        let Some(f) = &self.fixed else {
            return Err(invalid("scheme mean needs position-independent couplings"));
        };
        if f.parts.v.len() != 1 || !self.potential.is_constant() {
            return Err(invalid("scheme mean needs ν = 1 and a constant potential"));
        }
        let n = self.block_dim();
        let vx = self.potential.eval(&[0.0]);
        let sp = f.v_spectrum.as_ref().expect("ν = 1 spectrum");
        let mut acc = CMatrix::identity(n, n);
        for j in 0..grid.steps() {
            let dt = grid.step(j);
            let step = match scheme {
                Scheme::Splitting => {
                    let e = self.split_drift(&[0.0], dt)?.into_owned() * c(libm::exp(-dt * vx));
                    apply_spectral_blocks(sp, |lam| c(libm::exp(-0.5 * lam * lam * dt)), &e)
                }
                Scheme::EulerMaruyama => {
                    let mut h = f.h0.clone();
                    for i in 0..n {
                        h[(i, i)] += c(vx);
                    }
                    CMatrix::identity(n, n) - h * c(dt)
                }
            };
            acc = step * acc;
        }
        Ok(acc)
    }
}

/// `(id ⊗ U diag(f(λ)) U†) Y` without forming the full function matrix.
fn apply_spectral_blocks(sp: &HermitianSpectrum, f: impl Fn(f64) -> C64, y: &CMatrix) -> CMatrix {
    let d = sp.eigenvectors.nrows();
    let l = y.nrows() / d;
    let fl: Vec<C64> = sp.eigenvalues.iter().map(|&lam| f(lam)).collect();
    let uad = sp.eigenvectors.adjoint();
    let mut out = CMatrix::zeros(y.nrows(), y.ncols());
    for b in 0..l {
        let mut t = &uad * y.rows(b * d, d);
        for (i, fi) in fl.iter().enumerate() {
            for z in t.row_mut(i).iter_mut() {
                *z *= fi;
            }
        }
        out.rows_mut(b * d, d).copy_from(&(&sp.eigenvectors * t));
    }
    out
}

/// Integrates with `η = id` along `path` and its reversal and returns
/// `‖𝕎_t[X̄] − 𝕎_t[X]*‖` (max-entry norm).
pub fn pathwise_adjoint_check(prop: &SpinPropagator, path: &DriverPath, scheme: Scheme) -> Result<f64> {
    let n = prop.block_dim();
    let id = CMatrix::identity(n, n);
    let fwd = prop.integrate(path, &id, scheme)?;
    let rev = prop.integrate(&path.reversed(), &id, scheme)?;
    Ok(max_abs(&(rev.y - fwd.y.adjoint())))
}

/// Operator norm of each column block response, `‖Y η‖/‖η‖` for a single column.
pub fn column_norm_ratio(result: &SpinKernelResult, eta0: &CMatrix) -> f64 {
    result.y.norm() / eta0.norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{sample_bm_tagged, sample_bridge_tagged, TimeGrid};
    use crate::linalg::hermitian_defect;
    use crate::modespace::{nelson_preset, pauli, ModeSpace, OneBosonVector};
    use alloc::vec;

    fn spin_toy(g: f64) -> CouplingFamily {
        let mom = vec![0.5, -0.5];
        let modes = ModeSpace::new(vec![1.0, 1.0], vec![1.0, 1.0], mom, 1, vec![1, 0], vec![c(1.0); 2]).unwrap();
        let gv = OneBosonVector::from_vec(vec![c(g), c(g)]);
        let f = OneBosonVector::from_vec(vec![c(0.3), c(0.3)]);
        CouplingFamily::new(&modes, vec![0.0; 2], vec![gv], vec![f], vec![pauli()[2].clone()]).unwrap()
    }

    #[test]
    fn generator_identities() {
        let cf = spin_toy(0.2);
        let fock = TruncatedFock::new(cf.modes(), 4).unwrap();
        let gs = GeneratorSet::build(&cf, &[0.3], &Potential::Constant(0.1), &[0.0], &fock).unwrap();
        assert!(gs.reconstruction_defect() < 1e-12);
        // q = 0 for x-independent couplings, so Ĥ is hermitian
        assert!(hermitian_defect(&gs.h_full) < 1e-12);
        assert!(hermitian_defect(&gs.v[0]) < 1e-14);
    }

    #[test]
    fn nelson_generator_form() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let (_, cf) = nelson_preset(&modes, OneBosonVector::from_vec(vec![c(0.3)]), false).unwrap();
        let fock = TruncatedFock::new(&modes, 6).unwrap();
        let gs = GeneratorSet::build(&cf, &[0.0], &Potential::Zero, &[0.0], &fock).unwrap();
        let expect = fock.d_gamma_real(&[1.0]).unwrap() + fock.field(&OneBosonVector::from_vec(vec![c(0.3)])).unwrap();
        assert!(max_abs(&(&gs.h_full - expect)) < 1e-14);
        assert!((lambda_bound(&cf, &[0.0]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn free_splitting_is_exact() {
        let mom = vec![0.5, -0.5];
        let modes = ModeSpace::new(vec![1.0, 1.0], vec![1.0, 1.0], mom, 1, vec![1, 0], vec![c(1.0); 2]).unwrap();
        let z = OneBosonVector::zeros(2);
        let cf = CouplingFamily::new(&modes, vec![0.0; 2], vec![z.clone()], vec![z], vec![CMatrix::identity(1, 1)]).unwrap();
        let fock = TruncatedFock::new(&modes, 4).unwrap();
        let mut prop = SpinPropagator::new(&cf, &[0.4], &Potential::Zero, &fock).unwrap();
        let grid = TimeGrid::uniform(0.5, 16).unwrap();
        prop.prepare(&grid).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 1, 1);
        let n = prop.block_dim();
        let res = prop.integrate(&p, &CMatrix::identity(n, n), Scheme::Splitting).unwrap();
        let dx = p.difference(0, 16)[0];
        for i in 0..n {
            let occ = &fock.basis()[i];
            let dm = 0.5 * (occ[0] as f64 - occ[1] as f64);
            let om = (occ[0] + occ[1]) as f64;
            let expect = C64::new(-0.5 * om, -(0.4 - dm) * dx).exp();
            assert!((res.y[(i, i)] - expect).norm() < 1e-12);
        }
        assert!(pathwise_adjoint_check(&prop, &sample_bridge_tagged(&[0.0], &[0.2], &grid, 2, 2).unwrap(), Scheme::Splitting).unwrap() < 1e-12);
    }

    #[test]
    fn splitting_norm_bound_holds() {
        let cf = spin_toy(0.3);
        let fock = TruncatedFock::new(cf.modes(), 4).unwrap();
        let grid = TimeGrid::uniform(0.5, 32).unwrap();
        let mut prop = SpinPropagator::new(&cf, &[0.2], &Potential::Constant(0.1), &fock).unwrap();
        prop.prepare(&grid).unwrap();
        let n = prop.block_dim();
        let id = CMatrix::identity(n, n);
        for s in 0..5 {
            let p = sample_bm_tagged(&[0.0], &grid, 3, s);
            let res = prop.integrate(&p, &id, Scheme::Splitting).unwrap();
            let ln = libm::log(operator_norm(&res.y));
            assert!(ln <= res.log_bound + 1e-10, "{ln} > {}", res.log_bound);
        }
    }

    #[test]
    fn schemes_converge_and_weak_order() {
        let cf = spin_toy(0.3);
        let fock = TruncatedFock::new(cf.modes(), 3).unwrap();
        let prop = SpinPropagator::new(&cf, &[0.2], &Potential::Zero, &fock).unwrap();
        let h = prop.generators(&[0.0]).unwrap().h_full;
        let exact = HermitianSpectrum::new(&h).apply_fn(|l| c(libm::exp(-0.5 * l)));
        let bias = |k: usize, s: Scheme| {
            let g = TimeGrid::uniform(0.5, k).unwrap();
            max_abs(&(prop.scheme_mean(&g, s).unwrap() - &exact))
        };
        for s in [Scheme::Splitting, Scheme::EulerMaruyama] {
            let r = bias(64, s) / bias(128, s);
            assert!((1.8..=2.2).contains(&r), "{s:?} ratio {r}");
        }
        // splitting and EM coalesce pathwise under refinement
        let diff = |k: usize| {
            let g = TimeGrid::uniform(0.5, k).unwrap();
            let p = sample_bm_tagged(&[0.0], &g, 8, 0);
            let n = prop.block_dim();
            let id = CMatrix::identity(n, n);
            let a = prop.integrate(&p, &id, Scheme::Splitting).unwrap().y;
            let b = prop.integrate(&p, &id, Scheme::EulerMaruyama).unwrap().y;
            max_abs(&(a - b))
        };
        assert!(diff(512) < diff(32));
    }
}
