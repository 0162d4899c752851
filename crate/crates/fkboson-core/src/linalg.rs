//! Dense complex linear algebra used throughout: matrix exponentials,
//! hermitian spectral exponentials, norms and block (spin ⊗ Fock) assembly.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

// Padé(13) coefficients and the 1-norm threshold below which no squaring is
// needed (Higham 2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Maximum absolute column sum.
pub fn norm1(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest entry modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral norm, computed from the largest eigenvalue of `a† a`.
pub fn operator_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let gram = a.adjoint() * a;
    let eig = gram.symmetric_eigen();
    libm::sqrt(eig.eigenvalues.iter().cloned().fold(0.0, f64::max).max(0.0))
}

/// `max |A − A†|` over all entries.
pub fn hermitian_defect(a: &CMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

/// Matrix exponential by scaling and squaring with a fixed Padé order 13.
pub fn expm(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
    }
    if n == 0 {
        return Ok(a.clone());
    }
    let nrm = norm1(a);
    if !nrm.is_finite() {
        return Err(Error::Numerical("matrix exponential of a non-finite matrix".into()));
    }
    let squarings = if nrm > THETA13 {
        libm::ceil(libm::log2(nrm / THETA13)) as i32
    } else {
        0
    };
    let scaled = a * c(libm::pow(2.0, -(squarings as f64)));
    let ident = CMatrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let inner_u = &a6 * (&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]))
        + &a6 * c(b[7])
        + &a4 * c(b[5])
        + &a2 * c(b[3])
        + &ident * c(b[1]);
    let u = &scaled * inner_u;
    let v = &a6 * (&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]))
        + &a6 * c(b[6])
        + &a4 * c(b[4])
        + &a2 * c(b[2])
        + &ident * c(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(r)
}

/// Spectral data of a hermitian matrix, reusable for every `f(H)`.
#[derive(Debug, Clone)]
pub struct HermitianSpectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl HermitianSpectrum {
    pub fn new(h: &CMatrix) -> Self {
        // Symmetrize so rounding asymmetry does not leak into the spectrum.
        let sym = (h + h.adjoint()) * c(0.5);
        let eig = sym.symmetric_eigen();
        Self {
            eigenvalues: eig.eigenvalues.iter().cloned().collect(),
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `U diag(f(λ)) U†`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let mut scaled = self.eigenvectors.clone();
        for (j, &lam) in self.eigenvalues.iter().enumerate() {
            let fj = f(lam);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= fj;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }
}

/// Block-diagonal `id_L ⊗ a`.
pub fn kron_identity(l: usize, a: &CMatrix) -> CMatrix {
    let d = a.nrows();
    let mut out = CMatrix::zeros(l * d, l * d);
    for b in 0..l {
        out.view_mut((b * d, b * d), (d, d)).copy_from(a);
    }
    out
}

/// `target += coef · (s ⊗ a)` where `s` is L×L and `a` acts on one block.
pub fn add_kron(target: &mut CMatrix, s: &CMatrix, a: &CMatrix, coef: C64) {
    let d = a.nrows();
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let sij = s[(i, j)] * coef;
            if sij == C64::new(0.0, 0.0) {
                continue;
            }
            let mut blk = target.view_mut((i * d, j * d), (d, d));
            blk += a * sij;
        }
    }
}

/// Applies `id_L ⊗ a` to the stacked columns of `y` (blocks of height `a.nrows()`).
pub fn apply_block_diag(a: &CMatrix, y: &CMatrix) -> CMatrix {
    let d = a.nrows();
    let l = y.nrows() / d;
    let mut out = CMatrix::zeros(y.nrows(), y.ncols());
    for b in 0..l {
        let blk = a * y.rows(b * d, d);
        out.rows_mut(b * d, d).copy_from(&blk);
    }
    out
}

pub(crate) fn is_finite_matrix(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub(crate) fn is_finite_vector(a: &CVector) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn herm(n: usize, seed: u64) -> CMatrix {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(next(), next()));
        (&a + a.adjoint()) * c(0.5)
    }

    #[test]
    fn expm_of_zero_is_identity() {
        let z = CMatrix::zeros(4, 4);
        assert!(max_abs(&(expm(&z).unwrap() - CMatrix::identity(4, 4))) < 1e-15);
    }

    #[test]
    fn expm_diagonal_matches_scalar_exponentials() {
        let d = CMatrix::from_diagonal(&CVector::from_vec(alloc::vec![
            C64::new(-3.0, 0.5),
            C64::new(12.0, -1.0),
            C64::new(0.1, 0.0)
        ]));
        let e = expm(&d).unwrap();
        for k in 0..3 {
            let want = d[(k, k)].exp();
            assert!((e[(k, k)] - want).norm() <= 1e-12 * want.norm());
        }
    }

    #[test]
    fn expm_matches_spectral_route_on_hermitian_input() {
        for seed in 0..10 {
            let h = herm(7, seed) * c(6.0);
            let spec = HermitianSpectrum::new(&h);
            let a = spec.apply_fn(|l| C64::new(-0.7 * l, 0.0).exp());
            let b = expm(&(&h * c(-0.7))).unwrap();
            assert!(max_abs(&(a - b)) < 1e-9);
        }
    }

    #[test]
    fn expm_of_nilpotent_is_finite_sum() {
        let mut n = CMatrix::zeros(3, 3);
        n[(0, 1)] = c(2.0);
        n[(1, 2)] = c(3.0);
        let e = expm(&n).unwrap();
        assert!((e[(0, 2)] - c(3.0)).norm() < 1e-13);
        assert!((e[(0, 1)] - c(2.0)).norm() < 1e-13);
    }

    #[test]
    fn operator_norm_of_unitary_is_one() {
        let h = herm(5, 3);
        let u = expm(&(h * I)).unwrap();
        assert!((operator_norm(&u) - 1.0).abs() < 1e-12);
    }
}
