//! Discretized one-boson space: weighted modes, the conjugation C, and the
//! position-dependent coupling vectors G, F together with model presets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, config, invalid, Result};
use crate::linalg::{c, CMatrix, CVector, C64, I};

/// Element of the one-boson space: one complex amplitude per mode.
pub type OneBosonVector = CVector;

const SYM_TOL: f64 = 1e-12;

/// Finite set of boson modes with measure weights, dispersion, momenta and a
/// conjugation `(Cf)_k = θ_k conj(f_{π(k)})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpace {
    mu: Vec<f64>,
    omega: Vec<f64>,
    momentum: Vec<f64>,
    nu: usize,
    conj_perm: Vec<usize>,
    conj_phase: Vec<C64>,
}

impl ModeSpace {
    /// `momentum` is row-major `M × ν`.
    pub fn new(
        mu: Vec<f64>,
        omega: Vec<f64>,
        momentum: Vec<f64>,
        nu: usize,
        conj_perm: Vec<usize>,
        conj_phase: Vec<C64>,
    ) -> Result<Self> {
        let m = mu.len();
        if m == 0 {
            return Err(config("mode space needs at least one mode"));
        }
        if nu == 0 {
            return Err(config("space dimension ν must be positive"));
        }
        check_len(m, omega.len())?;
        check_len(m * nu, momentum.len())?;
        check_len(m, conj_perm.len())?;
        check_len(m, conj_phase.len())?;
        for k in 0..m {
            if !(mu[k] > 0.0 && mu[k].is_finite()) {
                return Err(config(format!("mu[{k}] = {} is not a positive weight", mu[k])));
            }
            if !(omega[k] > 0.0 && omega[k].is_finite()) {
                return Err(config(format!("omega[{k}] = {} is not positive", omega[k])));
            }
            let p = conj_perm[k];
            if p >= m || conj_perm[p] != k {
                return Err(config(format!("conjugation permutation is not an involution at mode {k}")));
            }
            if omega[p] != omega[k] || mu[p] != mu[k] {
                return Err(config(format!("omega or mu not invariant under the conjugation at mode {k}")));
            }
            for l in 0..nu {
                if momentum[p * nu + l] != -momentum[k * nu + l] {
                    return Err(config(format!("momentum of mode {p} is not the negative of mode {k}")));
                }
            }
            if (conj_phase[k].norm() - 1.0).abs() > SYM_TOL || (conj_phase[k] - conj_phase[p]).norm() > SYM_TOL {
                return Err(config(format!("conjugation phase at mode {k} must be unimodular and π-invariant")));
            }
        }
        Ok(Self { mu, omega, momentum, nu, conj_perm, conj_phase })
    }

    /// Modes with trivial conjugation (π = id, phase 1); requires m ≡ 0.
    pub fn without_momentum(mu: Vec<f64>, omega: Vec<f64>, nu: usize) -> Result<Self> {
        let m = mu.len();
        Self::new(mu, omega, vec![0.0; m * nu], nu, (0..m).collect(), vec![c(1.0); m])
    }

    pub fn mode_count(&self) -> usize {
        self.mu.len()
    }

    pub fn space_dim(&self) -> usize {
        self.nu
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Momentum vector m(k) of mode `k`.
    pub fn momentum(&self, k: usize) -> &[f64] {
        &self.momentum[k * self.nu..(k + 1) * self.nu]
    }

    /// Component ℓ of the momentum as a per-mode array.
    pub fn momentum_component(&self, l: usize) -> Vec<f64> {
        (0..self.mode_count()).map(|k| self.momentum[k * self.nu + l]).collect()
    }

    pub fn has_momentum(&self) -> bool {
        self.momentum.iter().any(|&x| x != 0.0)
    }

    pub fn conj_perm(&self) -> &[usize] {
        &self.conj_perm
    }

    pub fn conj_phase(&self) -> &[C64] {
        &self.conj_phase
    }

    /// `Σ_k µ_k conj(f_k) g_k`.
    pub fn inner_product(&self, f: &OneBosonVector, g: &OneBosonVector) -> Result<C64> {
        check_len(self.mode_count(), f.len())?;
        check_len(self.mode_count(), g.len())?;
        Ok(self.inner(f, g))
    }

    /// Unchecked inner product.
    pub fn inner(&self, f: &OneBosonVector, g: &OneBosonVector) -> C64 {
        debug_assert_eq!(f.len(), self.mu.len());
        let mut s = C64::new(0.0, 0.0);
        for k in 0..self.mu.len() {
            s += f[k].conj() * g[k] * self.mu[k];
        }
        s
    }

    pub fn norm_sq(&self, f: &OneBosonVector) -> f64 {
        (0..self.mu.len()).map(|k| self.mu[k] * f[k].norm_sqr()).sum()
    }

    pub fn norm(&self, f: &OneBosonVector) -> f64 {
        libm::sqrt(self.norm_sq(f))
    }

    /// `sqrt(Σ_k µ_k κ_k |f_k|²)`.
    pub fn weighted_norm(&self, f: &OneBosonVector, kappa: impl Fn(usize) -> f64) -> Result<f64> {
        check_len(self.mode_count(), f.len())?;
        let mut s = 0.0;
        for k in 0..self.mu.len() {
            let w = kappa(k);
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid(format!("weight at mode {k} must be finite and nonnegative")));
            }
            s += self.mu[k] * w * f[k].norm_sqr();
        }
        Ok(libm::sqrt(s))
    }

    /// `‖ω^{-1/2} f‖`.
    pub fn infrared_norm(&self, f: &OneBosonVector) -> f64 {
        libm::sqrt((0..self.mu.len()).map(|k| self.mu[k] * f[k].norm_sqr() / self.omega[k]).sum())
    }

    pub fn apply_conjugation(&self, f: &OneBosonVector) -> OneBosonVector {
        OneBosonVector::from_fn(f.len(), |k, _| self.conj_phase[k] * f[self.conj_perm[k]].conj())
    }

    /// Largest deviation `|Cf − f|`, scaled by `1 + max|f|`.
    pub fn conjugation_defect(&self, f: &OneBosonVector) -> f64 {
        let cf = self.apply_conjugation(f);
        let scale = 1.0 + f.iter().map(|z| z.norm()).fold(0.0, f64::max);
        (0..f.len()).map(|k| (cf[k] - f[k]).norm()).fold(0.0, f64::max) / scale
    }

    /// Per-mode multiplier `e^{−dt·ω + i m·dx}`.
    pub fn propagation_weight(&self, dt: f64, dx: &[f64]) -> OneBosonVector {
        OneBosonVector::from_fn(self.mode_count(), |k, _| {
            let phase: f64 = self.momentum(k).iter().zip(dx).map(|(m, x)| m * x).sum();
            C64::new(-dt * self.omega[k], phase).exp()
        })
    }
}

/// Couplings evaluated at one position.
#[derive(Debug, Clone)]
pub struct CouplingSnapshot {
    pub g: Vec<OneBosonVector>,
    pub f: Vec<OneBosonVector>,
    pub q: OneBosonVector,
    pub q_breve: OneBosonVector,
}

/// Position-dependent couplings of plane-wave form
/// `G_{ℓ,x}(k) = e^{−i κ_k·x} G⁰_ℓ(k)`, `F_{j,x}(k) = e^{−i κ_k·x} F⁰_j(k)`,
/// plus the spin matrices σ_1..σ_S. κ ≡ 0 gives x-independent couplings.
#[derive(Debug, Clone)]
pub struct CouplingFamily {
    modes: ModeSpace,
    wavevector: Vec<f64>,
    g0: Vec<OneBosonVector>,
    f0: Vec<OneBosonVector>,
    spin_matrices: Vec<CMatrix>,
    spin_dim: usize,
}

impl CouplingFamily {
    /// `wavevector` is row-major `M × ν`; `g0` has ν entries, `f0` has S entries
    /// matching `spin_matrices`.
    pub fn new(
        modes: &ModeSpace,
        wavevector: Vec<f64>,
        g0: Vec<OneBosonVector>,
        f0: Vec<OneBosonVector>,
        spin_matrices: Vec<CMatrix>,
    ) -> Result<Self> {
        let m = modes.mode_count();
        let nu = modes.space_dim();
        check_len(m * nu, wavevector.len())?;
        check_len(nu, g0.len())?;
        check_len(spin_matrices.len(), f0.len())?;
        if spin_matrices.is_empty() {
            return Err(config("at least one spin matrix is required"));
        }
        let l = spin_matrices[0].nrows();
        for (j, s) in spin_matrices.iter().enumerate() {
            if s.nrows() != l || s.ncols() != l {
                return Err(config(format!("spin matrix {j} is not {l}×{l}")));
            }
            if crate::linalg::hermitian_defect(s) > SYM_TOL {
                return Err(config(format!("spin matrix {j} is not hermitian")));
            }
            if crate::linalg::operator_norm(s) > 1.0 + 1e-12 {
                return Err(config(format!("spin matrix {j} has operator norm above 1")));
            }
        }
        for k in 0..m {
            let p = modes.conj_perm()[k];
            for a in 0..nu {
                if wavevector[p * nu + a] != -wavevector[k * nu + a] {
                    return Err(config(format!("coupling wavevector of mode {p} is not the negative of mode {k}")));
                }
            }
        }
        for (name, list) in [("G", &g0), ("F", &f0)] {
            for (j, v) in list.iter().enumerate() {
                check_len(m, v.len())?;
                if modes.conjugation_defect(v) > 1e-12 {
                    return Err(config(format!("{name}_{} is not fixed by the conjugation", j + 1)));
                }
            }
        }
        Ok(Self { modes: modes.clone(), wavevector, g0, f0, spin_matrices, spin_dim: l })
    }

    pub fn modes(&self) -> &ModeSpace {
        &self.modes
    }

    pub fn spin_dim(&self) -> usize {
        self.spin_dim
    }

    pub fn spin_count(&self) -> usize {
        self.spin_matrices.len()
    }

    pub fn spin_matrices(&self) -> &[CMatrix] {
        &self.spin_matrices
    }

    pub fn is_position_independent(&self) -> bool {
        self.wavevector.iter().all(|&x| x == 0.0)
    }

    pub fn g_is_zero(&self) -> bool {
        self.g0.iter().all(|v| v.iter().all(|z| z.norm() == 0.0))
    }

    fn phase(&self, x: &[f64]) -> OneBosonVector {
        let nu = self.modes.space_dim();
        OneBosonVector::from_fn(self.modes.mode_count(), |k, _| {
            let arg: f64 = (0..nu).map(|a| self.wavevector[k * nu + a] * x[a]).sum();
            C64::new(0.0, -arg).exp()
        })
    }

    fn dressed(&self, base: &[OneBosonVector], x: &[f64]) -> Vec<OneBosonVector> {
        let ph = self.phase(x);
        base.iter().map(|v| v.component_mul(&ph)).collect()
    }

    pub fn g(&self, x: &[f64]) -> Vec<OneBosonVector> {
        self.dressed(&self.g0, x)
    }

    pub fn f(&self, x: &[f64]) -> Vec<OneBosonVector> {
        self.dressed(&self.f0, x)
    }

    /// `dg[j][ℓ] = ∂_{x_j} G_{ℓ,x}`.
    pub fn dg(&self, x: &[f64]) -> Vec<Vec<OneBosonVector>> {
        let nu = self.modes.space_dim();
        let g = self.g(x);
        (0..nu)
            .map(|j| {
                g.iter()
                    .map(|gl| {
                        OneBosonVector::from_fn(gl.len(), |k, _| -I * self.wavevector[k * nu + j] * gl[k])
                    })
                    .collect()
            })
            .collect()
    }

    /// Divergence `q_x = Σ_ℓ ∂_{x_ℓ} G_{ℓ,x}`.
    pub fn q(&self, x: &[f64]) -> OneBosonVector {
        let dg = self.dg(x);
        let mut q = OneBosonVector::zeros(self.modes.mode_count());
        for (l, row) in dg.iter().enumerate() {
            q += &row[l];
        }
        q
    }

    /// `q̆_x = ½ q_x − (i/2) m·G_x`.
    pub fn q_breve(&self, x: &[f64]) -> OneBosonVector {
        self.snapshot(x).q_breve
    }

    pub fn snapshot(&self, x: &[f64]) -> CouplingSnapshot {
        let g = self.g(x);
        let f = self.f(x);
        let q = self.q(x);
        let mut mg = OneBosonVector::zeros(self.modes.mode_count());
        for (l, gl) in g.iter().enumerate() {
            for k in 0..gl.len() {
                mg[k] += gl[k] * self.modes.momentum(k)[l];
            }
        }
        let q_breve = &q * c(0.5) - mg * (I * 0.5);
        CouplingSnapshot { g, f, q, q_breve }
    }

    /// Freezes the couplings at `x`, producing an x-independent family.
    pub fn at_fixed_position(&self, x: &[f64]) -> Result<Self> {
        let m = self.modes.mode_count();
        Self::new(
            &self.modes,
            vec![0.0; m * self.modes.space_dim()],
            self.g(x),
            self.f(x),
            self.spin_matrices.clone(),
        )
    }

    /// Same family with every coupling vector scaled by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for v in out.g0.iter_mut().chain(out.f0.iter_mut()) {
            *v *= c(lambda);
        }
        out
    }

    /// Same family with F scaled by `lambda` (G untouched).
    pub fn with_f_scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        for v in out.f0.iter_mut() {
            *v *= c(lambda);
        }
        out
    }
}

/// Pauli matrices σ_1, σ_2, σ_3.
pub fn pauli() -> Vec<CMatrix> {
    let z = c(0.0);
    let o = c(1.0);
    vec![
        CMatrix::from_row_slice(2, 2, &[z, o, o, z]),
        CMatrix::from_row_slice(2, 2, &[z, -I, I, z]),
        CMatrix::from_row_slice(2, 2, &[o, z, z, -o]),
    ]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm3(a: [f64; 3]) -> f64 {
    libm::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
}

/// Fixed reference axis e used for the polarization frame.
pub const NRQED_AXIS: [f64; 3] = [0.0, 0.0, 1.0];

/// Polarization vectors ε(k,1) = e×k/|e×k|, ε(k,2) = k×ε(k,1)/|k|.
pub fn polarizations(k: [f64; 3]) -> [[f64; 3]; 2] {
    let ek = cross(NRQED_AXIS, k);
    let n = norm3(ek);
    let e1 = [ek[0] / n, ek[1] / n, ek[2] / n];
    let kn = norm3(k);
    let ke = cross(k, e1);
    [e1, [ke[0] / kn, ke[1] / kn, ke[2] / kn]]
}

/// Which momentum convention the NRQED preset uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrqedVariant {
    /// m(k) = k and G_x carrying the phase e^{−ik·x}.
    Standard,
    /// m ≡ 0 with x-dependent couplings, as required for kernel estimates.
    Kernel,
    /// m(k) = k with couplings frozen at x = 0 (fiber Hamiltonian).
    Fiber,
}

/// NRQED (Pauli–Fierz) preset on a symmetric momentum grid with quadrature
/// weights. Mode index `2p + (j−1)` holds grid point `p`, polarization `j`.
pub fn nrqed_preset(
    cutoff: f64,
    k_grid: &[([f64; 3], f64)],
    alpha: f64,
    variant: NrqedVariant,
) -> Result<(ModeSpace, CouplingFamily)> {
    if !(cutoff > 0.0) || !(alpha >= 0.0) {
        return Err(config("NRQED cutoff must be positive and alpha nonnegative"));
    }
    let np = k_grid.len();
    if np == 0 {
        return Err(config("NRQED grid is empty"));
    }
    let mut partner = vec![usize::MAX; np];
    for (p, (k, w)) in k_grid.iter().enumerate() {
        if norm3(*k) == 0.0 {
            return Err(config(format!("NRQED grid point {p} is the origin")));
        }
        if norm3(cross(NRQED_AXIS, *k)) <= 1e-12 * norm3(*k) {
            return Err(config(format!("NRQED grid point {p} lies on the polarization axis")));
        }
        if !(*w > 0.0) {
            return Err(config(format!("NRQED grid weight {p} is not positive")));
        }
        let found = k_grid.iter().position(|(k2, w2)| {
            (0..3).all(|a| k2[a] == -k[a]) && w2 == w
        });
        match found {
            Some(q) => partner[p] = q,
            None => return Err(config(format!("NRQED grid is not symmetric under k → −k at point {p}"))),
        }
    }
    let m = 2 * np;
    let mut mu = vec![0.0; m];
    let mut omega = vec![0.0; m];
    let mut momentum = vec![0.0; 3 * m];
    let mut wave = vec![0.0; 3 * m];
    let mut perm = vec![0; m];
    let mut phase = vec![c(1.0); m];
    let mut g0 = vec![OneBosonVector::zeros(m); 3];
    let mut f0 = vec![OneBosonVector::zeros(m); 3];
    let pref = libm::sqrt(alpha / 2.0) * libm::pow(2.0 * core::f64::consts::PI, -1.5);
    for (p, (k, w)) in k_grid.iter().enumerate() {
        let kn = norm3(*k);
        let eps = polarizations(*k);
        let chi = if kn <= cutoff { 1.0 } else { 0.0 };
        for j in 0..2 {
            let idx = 2 * p + j;
            mu[idx] = *w;
            omega[idx] = kn;
            if variant != NrqedVariant::Kernel {
                momentum[3 * idx..3 * idx + 3].copy_from_slice(k);
            }
            if variant != NrqedVariant::Fiber {
                wave[3 * idx..3 * idx + 3].copy_from_slice(k);
            }
            perm[idx] = 2 * partner[p] + j;
            phase[idx] = if j == 0 { c(-1.0) } else { c(1.0) };
            let amp = pref * chi / libm::sqrt(kn);
            let gvec = [amp * eps[j][0], amp * eps[j][1], amp * eps[j][2]];
            // F = −(i/2) k × G
            let kg = cross(*k, gvec);
            for a in 0..3 {
                g0[a][idx] = c(gvec[a]);
                f0[a][idx] = -I * 0.5 * kg[a];
            }
        }
    }
    let modes = ModeSpace::new(mu, omega, momentum, 3, perm, phase)?;
    let coupling = CouplingFamily::new(&modes, wave, g0, f0, pauli())?;
    Ok((modes, coupling))
}

/// Nelson preset: L = S = 1, σ_1 = −1, G ≡ 0, F_x = e^{−i m·x} f when
/// `translation_covariant`, otherwise F ≡ f.
pub fn nelson_preset(
    modes: &ModeSpace,
    form_factor: OneBosonVector,
    translation_covariant: bool,
) -> Result<(ModeSpace, CouplingFamily)> {
    check_len(modes.mode_count(), form_factor.len())?;
    if modes.conjugation_defect(&form_factor) > 1e-12 {
        return Err(config("Nelson form factor is not fixed by the conjugation"));
    }
    let m = modes.mode_count();
    let nu = modes.space_dim();
    let wave = if translation_covariant {
        (0..m).flat_map(|k| modes.momentum(k).to_vec()).collect()
    } else {
        vec![0.0; m * nu]
    };
    let coupling = CouplingFamily::new(
        modes,
        wave,
        vec![OneBosonVector::zeros(m); nu],
        vec![form_factor],
        vec![CMatrix::from_element(1, 1, c(-1.0))],
    )?;
    Ok((modes.clone(), coupling))
}

/// Whether a coupling family has the Nelson structure (G ≡ 0, L = S = 1, σ_1 = −1).
pub fn is_nelson(coupling: &CouplingFamily) -> bool {
    coupling.g_is_zero()
        && coupling.spin_dim() == 1
        && coupling.spin_count() == 1
        && (coupling.spin_matrices()[0][(0, 0)] - c(-1.0)).norm() == 0.0
}
