//! Exact finite-dimensional oracles on the truncated space: semigroups of
//! fiber Hamiltonians, van Hove energies and diagonal domain weights.

use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::fock::TruncatedFock;
use crate::linalg::{c, expm, hermitian_defect, kron_identity, CMatrix, CVector, HermitianSpectrum, C64};
use crate::modespace::{ModeSpace, OneBosonVector};
use crate::rng::PathRng;
use crate::spin_sde::GeneratorSet;

const HERMITIAN_TOL: f64 = 1e-12;

/// `t ↦ e^{−tH}` for a fixed block operator.
#[derive(Debug, Clone)]
pub struct OracleSemigroup {
    h: CMatrix,
    spectrum: Option<HermitianSpectrum>,
}

impl OracleSemigroup {
    /// Uses an eigendecomposition when `H` is hermitian, otherwise scaling and squaring.
    pub fn new(h: CMatrix) -> Self {
        let spectrum = (hermitian_defect(&h) <= HERMITIAN_TOL).then(|| HermitianSpectrum::new(&h));
        Self { h, spectrum }
    }

    /// Forces the scaling-and-squaring route.
    pub fn general(h: CMatrix) -> Self {
        Self { h, spectrum: None }
    }

    pub fn generator(&self) -> &CMatrix {
        &self.h
    }

    pub fn is_hermitian(&self) -> bool {
        self.spectrum.is_some()
    }

    pub fn ground_energy(&self) -> Option<f64> {
        self.spectrum.as_ref().map(|s| s.min_eigenvalue())
    }

    pub fn at(&self, t: f64) -> Result<CMatrix> {
        let n = self.h.nrows();
        if t == 0.0 {
            return Ok(CMatrix::identity(n, n));
        }
        match &self.spectrum {
            Some(sp) => Ok(sp.apply_fn(|l| c(libm::exp(-t * l)))),
            None => expm(&(&self.h * c(-t))),
        }
    }
}

pub fn exact_semigroup(gens: &GeneratorSet, t: f64) -> Result<CMatrix> {
    OracleSemigroup::new(gens.h_full.clone()).at(t)
}

/// `inf spec(dΓ(ω) + φ(f)) = −‖ω^{−1/2} f‖²`.
pub fn van_hove_energy(modes: &ModeSpace, f: &OneBosonVector) -> f64 {
    let r = modes.infrared_norm(f);
    -r * r
}

/// Ground energy of `dΓ(ω) + φ(f)` on `ℱ_N`.
pub fn truncated_van_hove_energy(modes: &ModeSpace, f: &OneBosonVector, max_bosons: usize) -> Result<f64> {
    let fock = TruncatedFock::new(modes, max_bosons)?;
    let h = fock.d_gamma_real(modes.omega())? + fock.field(f)?;
    Ok(HermitianSpectrum::new(&h).min_eigenvalue())
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainWeight {
    /// `M = ½Σ dΓ(m_ℓ)² + dΓ(ω)`.
    M,
    /// `M_a(ξ) = ½(ξ − dΓ(m))² + a dΓ(ω)`, `a ≥ 1`.
    Ma { a: f64, xi: Vec<f64> },
}

/// Diagonal weight operator on `ℂ^L ⊗ ℱ_N`.
pub fn domain_weight(fock: &TruncatedFock, modes: &ModeSpace, spin_dim: usize, flavor: &DomainWeight) -> Result<CMatrix> {
    let nu = modes.space_dim();
    let (a, xi) = match flavor {
        DomainWeight::M => (1.0, alloc::vec![0.0; nu]),
        DomainWeight::Ma { a, xi } => {
            if !(*a >= 1.0) {
                return Err(invalid("M_a needs a ≥ 1"));
            }
            crate::error::check_len(nu, xi.len())?;
            (*a, xi.clone())
        }
    };
    let omega: Vec<C64> = modes.omega().iter().map(|&w| c(w)).collect();
    let mut diag = fock.d_gamma_diagonal(&omega)? * c(a);
    for (l, &x) in xi.iter().enumerate() {
        let ml: Vec<C64> = modes.momentum_component(l).iter().map(|&v| c(v)).collect();
        let dm = fock.d_gamma_diagonal(&ml)?;
        for i in 0..diag.len() {
            let s = c(x) - dm[i];
            diag[i] += s * s * 0.5;
        }
    }
    Ok(kron_identity(spin_dim, &CMatrix::from_diagonal(&diag)))
}

/// Observed constant `c(ε) = max_ψ (‖(Ĥ⁰ − M_1)ψ‖ − ε‖M_aψ‖)/‖ψ‖` over random
/// ψ, reported for each ε.
pub fn relative_bound_sweep(
    h0: &CMatrix,
    m1: &CMatrix,
    ma: &CMatrix,
    epsilons: &[f64],
    samples: usize,
    seed: u64,
) -> Vec<(f64, f64)> {
    let n = h0.nrows();
    let diff = h0 - m1;
    let mut rng = PathRng::new(seed, 0);
    let mut stats: Vec<(f64, f64)> = Vec::with_capacity(samples);
    for _ in 0..samples {
        let psi = CVector::from_fn(n, |_, _| C64::new(rng.normal(), rng.normal()));
        let nrm = psi.norm();
        stats.push(((&diff * &psi).norm() / nrm, (ma * &psi).norm() / nrm));
    }
    epsilons
        .iter()
        .map(|&e| (e, stats.iter().map(|(d, m)| d - e * m).fold(f64::NEG_INFINITY, f64::max).max(0.0)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use crate::modespace::CouplingFamily;
    use crate::potential::Potential;
    use alloc::vec;

    #[test]
    fn van_hove_one_and_two_modes() {
        let m1 = ModeSpace::without_momentum(vec![1.0], vec![2.0], 1).unwrap();
        let f1 = OneBosonVector::from_vec(vec![c(1.0)]);
        assert!((van_hove_energy(&m1, &f1) + 0.5).abs() < 1e-15);
        let e = truncated_van_hove_energy(&m1, &f1, 14).unwrap();
        assert!((e + 0.5).abs() < 1e-8);
        let m2 = ModeSpace::without_momentum(vec![1.0, 0.5], vec![2.0, 1.0], 1).unwrap();
        let f2 = OneBosonVector::from_vec(vec![c(1.0), c(0.6)]);
        let e2 = truncated_van_hove_energy(&m2, &f2, 14).unwrap();
        assert!((e2 - van_hove_energy(&m2, &f2)).abs() < 1e-8);
        let mut prev = 0.0;
        for n in 2..10 {
            let en = truncated_van_hove_energy(&m1, &f1, n).unwrap();
            assert!(en <= prev + 1e-14 && en >= -0.5 - 1e-12);
            prev = en;
        }
    }

    #[test]
    fn semigroup_routes_agree() {
        let modes = ModeSpace::without_momentum(vec![1.0, 1.0], vec![1.0, 1.5], 1).unwrap();
        let z = OneBosonVector::zeros(2);
        let f = OneBosonVector::from_vec(vec![c(0.3), c(0.2)]);
        let cf = CouplingFamily::new(&modes, vec![0.0; 2], vec![z], vec![f], vec![CMatrix::identity(1, 1)]).unwrap();
        let fock = TruncatedFock::new(&modes, 4).unwrap();
        let gs = GeneratorSet::build(&cf, &[0.1], &Potential::Zero, &[0.0], &fock).unwrap();
        let herm = OracleSemigroup::new(gs.h_full.clone());
        let gen = OracleSemigroup::general(gs.h_full.clone());
        assert!(herm.is_hermitian());
        assert!(max_abs(&(herm.at(0.5).unwrap() - gen.at(0.5).unwrap())) < 1e-9);
        let st = herm.at(0.3).unwrap() * herm.at(0.2).unwrap();
        assert!(max_abs(&(st - herm.at(0.5).unwrap())) < 1e-10);
        let n = fock.dim();
        assert!(max_abs(&(herm.at(0.0).unwrap() - CMatrix::identity(n, n))) == 0.0);
    }

    #[test]
    fn domain_weights() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![2.0], 1).unwrap();
        let fock = TruncatedFock::new(&modes, 3).unwrap();
        let m = domain_weight(&fock, &modes, 1, &DomainWeight::M).unwrap();
        assert!(max_abs(&(m - fock.d_gamma_real(&[2.0]).unwrap())) == 0.0);
        let ma = domain_weight(&fock, &modes, 2, &DomainWeight::Ma { a: 1.0, xi: vec![0.0] }).unwrap();
        assert_eq!(ma[(0, 0)], c(0.0));
        assert!(domain_weight(&fock, &modes, 1, &DomainWeight::Ma { a: 0.5, xi: vec![0.0] }).is_err());
    }
}
