//! Scalar Feynman–Kac integrand: closed-form coherent-state matrix elements
//! and the normal-ordered operator on the truncated Fock space.
//!
//! For the standard processes
//! `⟨ζ(g), W ζ(h)⟩ = exp(−u_{−ξ,t} − ⟨U⁻_t,h⟩ + ⟨g,U⁺_t⟩ + ⟨g,w_{0,t}h⟩)`; for
//! the Nelson variant the dressing vectors carry an extra factor `i`:
//! `exp(−u^N_{−ξ,t} + ⟨g,w_{0,t}h⟩ + i⟨g,U^{N,+}_t⟩ − i⟨U^{N,−}_t,h⟩)`.
//! Both are stored as `e^{−u} exp{i a†(a₊)} Γ(w) exp{i a(a₋)}` data.

use alloc::vec::Vec;

use crate::basic_processes::{integrate, BasicProcessTrace, Flavor};
use crate::drivers::DriverPath;
use crate::error::Result;
use crate::fock::{FockOperator, FockVector, TruncatedFock};
use crate::linalg::{C64, I};
use crate::modespace::{CouplingFamily, ModeSpace, OneBosonVector};
use crate::potential::Potential;

/// Dressing data of `W^V_{ξ,t}` on one path at one time.
#[derive(Debug, Clone)]
pub struct ScalarKernelSample {
    modes: ModeSpace,
    /// `u_{−ξ,t}` (exponent of the vacuum amplitude is `−u`).
    pub u: C64,
    /// Vector created by the dressing: `ζ(h) ↦ ζ(w h + creation_vec)`.
    pub creation_vec: OneBosonVector,
    pub contraction: OneBosonVector,
    /// `a(·)` argument entering as `e^{−⟨annihilation_vec, h⟩}`.
    pub annihilation_vec: OneBosonVector,
    pub potential_integral: f64,
    pub ksq: f64,
}

impl ScalarKernelSample {
    pub fn from_trace(trace: &BasicProcessTrace, t_idx: usize) -> Self {
        let neg_xi: Vec<f64> = trace.xi().iter().map(|x| -x).collect();
        let u = trace.u_with_xi(t_idx, &neg_xi);
        let (_, w) = trace.contraction_weight(0, t_idx);
        let up = trace.u_plus(t_idx).clone();
        let um = trace.u_minus(t_idx);
        let (creation_vec, annihilation_vec) = if trace.field_sign() > 0.0 {
            (up, um)
        } else {
            // ⟨−iU⁻, h⟩ = i⟨U⁻, h⟩ because the pairing is antilinear on the left.
            (up * I, um * (-I))
        };
        Self {
            modes: trace.modes().clone(),
            u,
            creation_vec,
            contraction: w,
            annihilation_vec,
            potential_integral: trace.potential_integral(t_idx),
            ksq: trace.ksq(t_idx),
        }
    }

    /// Exponent of `⟨ζ(g), W ζ(h)⟩`.
    pub fn log_matrix_element(&self, g: &OneBosonVector, h: &OneBosonVector) -> C64 {
        let m = &self.modes;
        -self.u - m.inner(&self.annihilation_vec, h) + m.inner(g, &self.creation_vec) + m.inner(g, &self.contraction.component_mul(h))
    }

    pub fn matrix_element(&self, g: &OneBosonVector, h: &OneBosonVector) -> C64 {
        self.log_matrix_element(g, h).exp()
    }

    pub fn as_operator(&self, fock: &TruncatedFock) -> Result<FockOperator> {
        let contraction: Vec<C64> = self.contraction.iter().cloned().collect();
        fock.normal_ordered_dressing(self.u, &self.creation_vec, &contraction, &self.annihilation_vec)
    }

    pub fn apply(&self, fock: &TruncatedFock, v: &FockVector) -> Result<FockVector> {
        let contraction: Vec<C64> = self.contraction.iter().cloned().collect();
        fock.apply_dressing(self.u, &self.creation_vec, &contraction, &self.annihilation_vec, v)
    }

    /// `e^{−∫V}`, the operator-norm bound of the scalar integrand.
    pub fn norm_bound(&self) -> f64 {
        libm::exp(-self.potential_integral)
    }
}

pub fn matrix_element(sample: &ScalarKernelSample, g: &OneBosonVector, h: &OneBosonVector) -> C64 {
    sample.matrix_element(g, h)
}

pub fn as_operator(sample: &ScalarKernelSample, fock: &TruncatedFock) -> Result<FockOperator> {
    sample.as_operator(fock)
}

/// `|⟨ζ(g), W_t[X̄] ζ(h)⟩ − conj⟨ζ(h), W_t[X] ζ(g)⟩|` with both sides built
/// from the given flavor on the full horizon of `path`.
pub fn reversal_check(
    path: &DriverPath,
    coupling: &CouplingFamily,
    xi: &[f64],
    potential: &Potential,
    g: &OneBosonVector,
    h: &OneBosonVector,
    flavor: Flavor,
) -> Result<f64> {
    let k = path.steps();
    let fwd = integrate(path, coupling, xi, potential, flavor)?;
    let rev = integrate(&path.reversed(), coupling, xi, potential, flavor)?;
    let a = ScalarKernelSample::from_trace(&rev, k).matrix_element(g, h);
    let b = ScalarKernelSample::from_trace(&fwd, k).matrix_element(h, g).conj();
    Ok((a - b).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{sample_bm_tagged, sample_bridge_tagged, TimeGrid};
    use crate::linalg::{c, operator_norm, CMatrix};
    use crate::modespace::{nelson_preset, ModeSpace};
    use alloc::vec;

    fn toy() -> CouplingFamily {
        let mom = vec![0.5, -0.5];
        let modes = ModeSpace::new(vec![1.0, 1.0], vec![1.1, 1.1], mom.clone(), 1, vec![1, 0], vec![c(1.0); 2]).unwrap();
        let z = C64::new(0.35, 0.15);
        let g = OneBosonVector::from_vec(vec![z, z.conj()]);
        let f = OneBosonVector::from_vec(vec![c(0.2), c(0.2)]);
        CouplingFamily::new(&modes, mom, vec![g], vec![f], vec![CMatrix::identity(1, 1)]).unwrap()
    }

    #[test]
    fn free_field_value() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let cf = CouplingFamily::new(&modes, vec![0.0], vec![OneBosonVector::zeros(1)], vec![OneBosonVector::zeros(1)], vec![CMatrix::identity(1, 1)]).unwrap();
        let grid = TimeGrid::uniform(libm::log(2.0), 4).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 1, 1);
        let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, Flavor::ItoLeft).unwrap();
        let s = ScalarKernelSample::from_trace(&tr, 4);
        let one = OneBosonVector::from_vec(vec![c(1.0)]);
        assert!((s.matrix_element(&one, &one) - c(libm::exp(0.5))).norm() < 1e-12);
    }

    #[test]
    fn vacuum_and_xi_sign() {
        let cf = toy();
        let grid = TimeGrid::uniform(0.6, 16).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 3, 1);
        let xi = [0.8];
        let tr = integrate(&p, &cf, &xi, &Potential::Constant(0.5), Flavor::ItoLeft).unwrap();
        let s = ScalarKernelSample::from_trace(&tr, 16);
        let z = OneBosonVector::zeros(2);
        let vac = s.matrix_element(&z, &z);
        let dx = p.difference(0, 16)[0];
        // e^{−u_{−ξ}} = e^{−½‖K‖² − ∫V − iξ·ΔX}
        let expect = C64::new(-0.5 * tr.ksq(16) - 0.5 * 0.6, -0.8 * dx).exp();
        assert!((vac - expect).norm() < 1e-12);
        assert!((vac.norm() - libm::exp(-0.5 * tr.ksq(16) - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn operator_matches_matrix_element_and_norm_bound() {
        let cf = toy();
        let grid = TimeGrid::uniform(0.5, 16).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 4, 2);
        let tr = integrate(&p, &cf, &[0.3], &Potential::Constant(0.2), Flavor::ItoLeft).unwrap();
        let s = ScalarKernelSample::from_trace(&tr, 16);
        let fock = TruncatedFock::new(cf.modes(), 14).unwrap();
        let op = s.as_operator(&fock).unwrap();
        let g = OneBosonVector::from_vec(vec![C64::new(0.2, 0.1), C64::new(-0.1, 0.3)]);
        let h = OneBosonVector::from_vec(vec![C64::new(0.1, -0.2), C64::new(0.25, 0.0)]);
        let (zg, tg) = fock.exp_vector(&g).unwrap();
        let (zh, th) = fock.exp_vector(&h).unwrap();
        let lhs = zg.dotc(&(&op * &zh));
        let exact = s.matrix_element(&g, &h);
        assert!((lhs - exact).norm() < 1e-9 + 10.0 * (tg + th));
        let applied = s.apply(&fock, &zh).unwrap();
        assert!((applied - &op * &zh).norm() < 1e-12);
        assert!(operator_norm(&op) <= s.norm_bound() + 1e-8);
    }

    #[test]
    fn midpoint_reversal_is_exact() {
        let cf = toy();
        let grid = TimeGrid::uniform(0.7, 16).unwrap();
        let p = sample_bridge_tagged(&[0.1], &[-0.4], &grid, 5, 0).unwrap();
        let g = OneBosonVector::from_vec(vec![C64::new(0.2, 0.1), C64::new(-0.1, 0.3)]);
        let h = OneBosonVector::from_vec(vec![C64::new(0.1, -0.2), C64::new(0.25, 0.0)]);
        let pot = Potential::Polynomial(vec![0.1, 0.0, 0.3]);
        let r = reversal_check(&p, &cf, &[0.4], &pot, &g, &h, Flavor::Midpoint).unwrap();
        assert!(r < 1e-12, "residual {r}");
    }

    #[test]
    fn nelson_sample_uses_flipped_sign() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let (_, cf) = nelson_preset(&modes, OneBosonVector::from_vec(vec![c(0.3)]), false).unwrap();
        let grid = TimeGrid::uniform(0.5, 8).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 1, 1);
        let tr = crate::basic_processes::nelson_trace(&p, &cf, &[0.0], &Potential::Zero, Flavor::Midpoint).unwrap();
        let s = ScalarKernelSample::from_trace(&tr, 8);
        let z = OneBosonVector::zeros(1);
        assert!(s.matrix_element(&z, &z).re > 1.0);
    }
}
