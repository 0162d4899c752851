//! Truncated bosonic Fock space over a [`ModeSpace`].
//!
//! The basis consists of occupation multi-indices `n` with `Σ n_k ≤ N`, ordered
//! by total occupation and then lexicographically. Creation operators carry
//! `√µ_k`, so `a(f) = a†(f)†` and `[a(f), a†(g)] = ⟨f,g⟩_µ` hold exactly below
//! the top sector.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{c, expm, CMatrix, CVector, C64, I};
use crate::modespace::{ModeSpace, OneBosonVector};

pub type FockVector = CVector;
pub type FockOperator = CMatrix;

/// Default cap on `dim · L`.
pub const DEFAULT_DIM_CAP: usize = 5000;

const NONE: usize = usize::MAX;

/// `binomial(n, k)`, saturating at `usize::MAX`.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

#[derive(Debug, Clone)]
pub struct TruncatedFock {
    mu: Vec<f64>,
    max_bosons: usize,
    basis: Vec<Vec<u16>>,
    sector_start: Vec<usize>,
    raise: Vec<usize>,
    lower: Vec<usize>,
}

impl TruncatedFock {
    pub fn new(modes: &ModeSpace, max_bosons: usize) -> Result<Self> {
        Self::with_cap(modes, max_bosons, 1, DEFAULT_DIM_CAP)
    }

    /// Builds the space, rejecting `binomial(M+N,N) · spin_dim > cap`.
    pub fn with_cap(modes: &ModeSpace, max_bosons: usize, spin_dim: usize, cap: usize) -> Result<Self> {
        Self::from_weights(modes.mu().to_vec(), max_bosons, spin_dim, cap)
    }

    pub(crate) fn from_weights(mu: Vec<f64>, max_bosons: usize, spin_dim: usize, cap: usize) -> Result<Self> {
        let m = mu.len();
        let dim = binomial(m + max_bosons, max_bosons);
        if dim == usize::MAX || dim.saturating_mul(spin_dim.max(1)) > cap {
            return Err(Error::DimensionCap { dim: dim.saturating_mul(spin_dim.max(1)), cap });
        }
        let mut basis = Vec::with_capacity(dim);
        let mut sector_start = Vec::with_capacity(max_bosons + 2);
        let mut cur = vec![0u16; m];
        for n in 0..=max_bosons {
            sector_start.push(basis.len());
            compositions(n, 0, &mut cur, &mut basis);
        }
        sector_start.push(basis.len());
        debug_assert_eq!(basis.len(), dim);
        let index: BTreeMap<&[u16], usize> = basis.iter().enumerate().map(|(i, b)| (b.as_slice(), i)).collect();
        let mut raise = vec![NONE; dim * m];
        let mut lower = vec![NONE; dim * m];
        let mut scratch = vec![0u16; m];
        for (i, occ) in basis.iter().enumerate() {
            for k in 0..m {
                scratch.copy_from_slice(occ);
                scratch[k] += 1;
                if let Some(&j) = index.get(scratch.as_slice()) {
                    raise[i * m + k] = j;
                    lower[j * m + k] = i;
                }
            }
        }
        Ok(Self { mu, max_bosons, basis, sector_start, raise, lower })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn mode_count(&self) -> usize {
        self.mu.len()
    }

    pub fn max_bosons(&self) -> usize {
        self.max_bosons
    }

    pub fn basis(&self) -> &[Vec<u16>] {
        &self.basis
    }

    pub fn total(&self, i: usize) -> usize {
        self.basis[i].iter().map(|&n| n as usize).sum()
    }

    pub fn sector_range(&self, n: usize) -> core::ops::Range<usize> {
        self.sector_start[n]..self.sector_start[n + 1]
    }

    /// Number of basis states with total occupation ≤ `N − j` (the range of
    /// the projection `P_{≤N−j}`); zero when `j > N`.
    pub fn dim_below_top(&self, j: usize) -> usize {
        if j > self.max_bosons {
            0
        } else {
            self.sector_start[self.max_bosons - j + 1]
        }
    }

    pub fn vacuum(&self) -> FockVector {
        let mut v = FockVector::zeros(self.dim());
        v[0] = c(1.0);
        v
    }

    /// Index of `n + e_k`, if it lies in the truncated basis.
    pub fn raised(&self, i: usize, k: usize) -> Option<usize> {
        let j = self.raise[i * self.mode_count() + k];
        (j != NONE).then_some(j)
    }

    /// Index of `n − e_k`, if `n_k > 0`.
    pub fn lowered(&self, i: usize, k: usize) -> Option<usize> {
        let j = self.lower[i * self.mode_count() + k];
        (j != NONE).then_some(j)
    }

    fn check_mode_vec(&self, f: &OneBosonVector) -> Result<()> {
        check_len(self.mode_count(), f.len())
    }

    pub fn creation(&self, f: &OneBosonVector) -> Result<FockOperator> {
        self.check_mode_vec(f)?;
        let m = self.mode_count();
        let mut a = CMatrix::zeros(self.dim(), self.dim());
        for i in 0..self.dim() {
            for k in 0..m {
                if let Some(j) = self.raised(i, k) {
                    let nk = self.basis[i][k] as f64;
                    a[(j, i)] = f[k] * libm::sqrt((nk + 1.0) * self.mu[k]);
                }
            }
        }
        Ok(a)
    }

    pub fn annihilation(&self, f: &OneBosonVector) -> Result<FockOperator> {
        Ok(self.creation(f)?.adjoint())
    }

    /// Segal field `φ(f) = a†(f) + a(f)`.
    pub fn field(&self, f: &OneBosonVector) -> Result<FockOperator> {
        let a = self.creation(f)?;
        let ad = a.adjoint();
        Ok(a + ad)
    }

    /// `a†(f) v` without forming the matrix.
    pub fn apply_creation(&self, f: &OneBosonVector, v: &FockVector) -> FockVector {
        let m = self.mode_count();
        let mut out = FockVector::zeros(self.dim());
        for i in 0..self.dim() {
            if v[i] == c(0.0) {
                continue;
            }
            for k in 0..m {
                if let Some(j) = self.raised(i, k) {
                    let nk = self.basis[i][k] as f64;
                    out[j] += f[k] * libm::sqrt((nk + 1.0) * self.mu[k]) * v[i];
                }
            }
        }
        out
    }

    /// `a(f) v` without forming the matrix.
    pub fn apply_annihilation(&self, f: &OneBosonVector, v: &FockVector) -> FockVector {
        let m = self.mode_count();
        let mut out = FockVector::zeros(self.dim());
        for i in 0..self.dim() {
            for k in 0..m {
                if let Some(j) = self.raised(i, k) {
                    let nk = self.basis[i][k] as f64;
                    out[i] += f[k].conj() * libm::sqrt((nk + 1.0) * self.mu[k]) * v[j];
                }
            }
        }
        out
    }

    /// Diagonal of `dΓ(κ)`: `Σ_k n_k κ_k` on each basis state.
    pub fn d_gamma_diagonal(&self, kappa: &[C64]) -> Result<FockVector> {
        check_len(self.mode_count(), kappa.len())?;
        Ok(FockVector::from_fn(self.dim(), |i, _| {
            self.basis[i].iter().zip(kappa).map(|(&n, &k)| k * n as f64).sum()
        }))
    }

    pub fn d_gamma(&self, kappa: &[C64]) -> Result<FockOperator> {
        Ok(CMatrix::from_diagonal(&self.d_gamma_diagonal(kappa)?))
    }

    pub fn d_gamma_real(&self, kappa: &[f64]) -> Result<FockOperator> {
        let k: Vec<C64> = kappa.iter().map(|&x| c(x)).collect();
        self.d_gamma(&k)
    }

    /// Diagonal of `Γ(j)`: `Π_k j_k^{n_k}`.
    pub fn gamma_diagonal(&self, j: &[C64]) -> Result<FockVector> {
        check_len(self.mode_count(), j.len())?;
        if let Some(k) = j.iter().position(|z| z.norm() > 1.0 + 1e-12) {
            return Err(invalid(alloc::format!("contraction entry {k} has modulus above 1")));
        }
        Ok(FockVector::from_fn(self.dim(), |i, _| {
            let mut p = c(1.0);
            for (&n, &jk) in self.basis[i].iter().zip(j) {
                for _ in 0..n {
                    p *= jk;
                }
            }
            p
        }))
    }

    pub fn gamma_contraction(&self, j: &[C64]) -> Result<FockOperator> {
        Ok(CMatrix::from_diagonal(&self.gamma_diagonal(j)?))
    }

    /// Truncated exponential vector `ζ(h)` and the norm of the discarded tail,
    /// `tail² = Σ_{n>N} ‖h‖^{2n}/n!`.
    pub fn exp_vector(&self, h: &OneBosonVector) -> Result<(FockVector, f64)> {
        self.check_mode_vec(h)?;
        let m = self.mode_count();
        let step: Vec<C64> = (0..m).map(|k| I * h[k] * libm::sqrt(self.mu[k])).collect();
        let mut v = FockVector::zeros(self.dim());
        v[0] = c(1.0);
        for i in 1..self.dim() {
            let k = self.basis[i].iter().position(|&n| n > 0).expect("nonvacuum state");
            let parent = self.lowered(i, k).expect("parent in basis");
            v[i] = v[parent] * step[k] / libm::sqrt(self.basis[i][k] as f64);
        }
        let x: f64 = (0..m).map(|k| self.mu[k] * h[k].norm_sqr()).sum();
        Ok((v, libm::sqrt(exp_series_tail(x, self.max_bosons))))
    }

    /// Weyl operator `e^{iφ(f)}` by matrix exponential.
    pub fn weyl(&self, f: &OneBosonVector) -> Result<FockOperator> {
        let phi = self.field(f)?;
        expm(&(phi * I))
    }

    /// `e^{−u} exp{i a†(a_plus)} Γ(contraction) exp{i a(a_minus)}`; both
    /// exponentials terminate after N terms on the truncated space.
    pub fn normal_ordered_dressing(
        &self,
        u: C64,
        a_plus: &OneBosonVector,
        contraction: &[C64],
        a_minus: &OneBosonVector,
    ) -> Result<FockOperator> {
        let gamma = self.gamma_diagonal(contraction)?;
        let ep = nilpotent_exp(&(self.creation(a_plus)? * I), self.max_bosons);
        let em = nilpotent_exp(&(self.annihilation(a_minus)? * I), self.max_bosons);
        let mut mid = em;
        for (i, mut row) in mid.row_iter_mut().enumerate() {
            row *= gamma[i];
        }
        Ok(ep * mid * (-u).exp())
    }

    /// Applies the normal-ordered dressing to a vector without forming matrices.
    pub fn apply_dressing(
        &self,
        u: C64,
        a_plus: &OneBosonVector,
        contraction: &[C64],
        a_minus: &OneBosonVector,
        v: &FockVector,
    ) -> Result<FockVector> {
        self.check_mode_vec(a_plus)?;
        self.check_mode_vec(a_minus)?;
        let gamma = self.gamma_diagonal(contraction)?;
        let w = nilpotent_exp_apply(|x| self.apply_annihilation(a_minus, x) * I, v, self.max_bosons);
        let w = w.component_mul(&gamma);
        let w = nilpotent_exp_apply(|x| self.apply_creation(a_plus, x) * I, &w, self.max_bosons);
        Ok(w * (-u).exp())
    }
}

fn compositions(remaining: usize, pos: usize, cur: &mut Vec<u16>, out: &mut Vec<Vec<u16>>) {
    let m = cur.len();
    if pos + 1 == m {
        cur[pos] = remaining as u16;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for v in 0..=remaining {
        cur[pos] = v as u16;
        compositions(remaining - v, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

/// `Σ_{ℓ=0}^{order} A^ℓ/ℓ!` (exact exponential for A nilpotent of that order).
fn nilpotent_exp(a: &CMatrix, order: usize) -> CMatrix {
    let n = a.nrows();
    let mut acc = CMatrix::identity(n, n);
    for l in (1..=order).rev() {
        acc = CMatrix::identity(n, n) + a * acc * c(1.0 / l as f64);
    }
    acc
}

fn nilpotent_exp_apply(apply: impl Fn(&FockVector) -> FockVector, v: &FockVector, order: usize) -> FockVector {
    let mut term = v.clone();
    let mut acc = v.clone();
    for l in 1..=order {
        term = apply(&term) * c(1.0 / l as f64);
        acc += &term;
    }
    acc
}

/// `Σ_{n>N} xⁿ/n!` summed directly (no cancellation against `eˣ`).
pub fn exp_series_tail(x: f64, n_max: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let n0 = (n_max + 1) as f64;
    let mut term = libm::exp(n0 * libm::log(x) - libm::lgamma(n0 + 1.0));
    let mut sum = 0.0;
    let mut n = n0;
    for _ in 0..100_000 {
        sum += term;
        n += 1.0;
        term *= x / n;
        if term <= 1e-17 * sum && n > x {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;

    fn modes(mu: &[f64]) -> ModeSpace {
        ModeSpace::without_momentum(mu.to_vec(), vec![1.0; mu.len()], 1).unwrap()
    }

    #[test]
    fn dimension_and_ordering() {
        let fs = TruncatedFock::new(&modes(&[1.0, 1.0, 1.0]), 3).unwrap();
        assert_eq!(fs.dim(), 20);
        assert_eq!(fs.basis()[0], vec![0, 0, 0]);
        assert_eq!(fs.basis()[1], vec![0, 0, 1]);
        assert_eq!(fs.basis()[3], vec![1, 0, 0]);
        for w in fs.basis().windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let ta: u16 = a.iter().sum();
            let tb: u16 = b.iter().sum();
            assert!(ta < tb || (ta == tb && a < b));
        }
        assert_eq!(fs.dim_below_top(1), 10);
    }

    #[test]
    fn dim_cap_enforced() {
        let r = TruncatedFock::with_cap(&modes(&[1.0; 10]), 6, 1, 5000);
        assert!(matches!(r, Err(Error::DimensionCap { .. })));
    }

    #[test]
    fn creation_on_vacuum_and_top_sector() {
        let fs = TruncatedFock::new(&modes(&[2.0, 0.5]), 2).unwrap();
        let f = OneBosonVector::from_vec(vec![C64::new(1.0, 1.0), c(3.0)]);
        let v = fs.creation(&f).unwrap() * fs.vacuum();
        // single-boson states are [0,1] then [1,0]
        assert!((v[1] - f[1] * libm::sqrt(0.5)).norm() < 1e-15);
        assert!((v[2] - f[0] * libm::sqrt(2.0)).norm() < 1e-15);
        let mut top = FockVector::zeros(fs.dim());
        for i in fs.sector_range(2) {
            top[i] = c(1.0);
        }
        assert_eq!((fs.creation(&f).unwrap() * top).norm(), 0.0);
    }

    #[test]
    fn exp_vector_norm_example() {
        let fs = TruncatedFock::new(&modes(&[1.0]), 12).unwrap();
        let (z, tail) = fs.exp_vector(&OneBosonVector::from_vec(vec![c(0.5)])).unwrap();
        let exact = libm::exp(0.25);
        assert!((z.norm_squared() - exact).abs() <= tail * tail * 1.0001 + 1e-15);
        let (z0, t0) = fs.exp_vector(&OneBosonVector::zeros(1)).unwrap();
        assert_eq!(z0, fs.vacuum());
        assert_eq!(t0, 0.0);
    }

    #[test]
    fn dressing_trivial_cases() {
        let fs = TruncatedFock::new(&modes(&[1.0, 1.0]), 3).unwrap();
        let z = OneBosonVector::zeros(2);
        let id = fs.normal_ordered_dressing(c(0.0), &z, &[c(1.0), c(1.0)], &z).unwrap();
        assert!(max_abs(&(id - CMatrix::identity(fs.dim(), fs.dim()))) < 1e-15);
        let j = [c(0.5), C64::new(0.0, 0.3)];
        let d = fs.normal_ordered_dressing(c(0.7), &z, &j, &z).unwrap();
        let want = fs.gamma_contraction(&j).unwrap() * c(libm::exp(-0.7));
        assert!(max_abs(&(d - want)) < 1e-15);
        assert!(fs.gamma_contraction(&[c(1.1), c(0.0)]).is_err());
    }

    #[test]
    fn tail_sum_matches_closed_form() {
        let x = 0.8;
        let partial: f64 = (0..=5).map(|n| libm::pow(x, n as f64) / libm::tgamma(n as f64 + 1.0)).sum();
        assert!((exp_series_tail(x, 5) - (libm::exp(x) - partial)).abs() < 1e-14);
    }
}
