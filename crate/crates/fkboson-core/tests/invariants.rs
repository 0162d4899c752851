use fkboson_core::basic_processes::Flavor;
use fkboson_core::drivers::{bridge_from_normals, TimeGrid};
use fkboson_core::fock::TruncatedFock;
use fkboson_core::linalg::{max_abs, CMatrix, CVector, C64};
use fkboson_core::modespace::{CouplingFamily, ModeSpace, OneBosonVector};
use fkboson_core::potential::Potential;
use fkboson_core::scalar_kernel::reversal_check;
use proptest::prelude::*;

fn two_mode_space() -> ModeSpace {
    // modes swapped by the conjugation, momenta ±0.5
    ModeSpace::new(vec![0.7, 0.7], vec![1.0, 1.0], vec![0.5, -0.5], 1, vec![1, 0], vec![C64::new(1.0, 0.0); 2]).unwrap()
}

fn vec_strategy(len: usize, scale: f64) -> impl Strategy<Value = OneBosonVector> {
    prop::collection::vec((-scale..scale, -scale..scale), len)
        .prop_map(|v| CVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b))))
}

/// Projector onto sectors with total occupation ≤ N − j.
fn low_sectors(fock: &TruncatedFock, j: usize) -> CMatrix {
    let n = fock.dim();
    let keep = fock.dim_below_top(j);
    CMatrix::from_fn(n, n, |r, c| if r == c && r < keep { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn creation_is_adjoint_of_annihilation(f in vec_strategy(2, 1.0)) {
        let fock = TruncatedFock::new(&two_mode_space(), 4).unwrap();
        let a = fock.annihilation(&f).unwrap();
        let ad = fock.creation(&f).unwrap();
        prop_assert_eq!(ad.adjoint(), a);
    }

    #[test]
    fn ccr_below_top_sector(f in vec_strategy(2, 1.0), g in vec_strategy(2, 1.0)) {
        let modes = two_mode_space();
        let fock = TruncatedFock::new(&modes, 5).unwrap();
        let comm = fock.annihilation(&f).unwrap() * fock.creation(&g).unwrap()
            - fock.creation(&g).unwrap() * fock.annihilation(&f).unwrap();
        let n = fock.dim();
        let target = CMatrix::identity(n, n) * modes.inner(&f, &g);
        let p = low_sectors(&fock, 1);
        prop_assert!(max_abs(&((comm - target) * p)) < 1e-12);
    }

    #[test]
    fn conjugation_is_an_involution(f in vec_strategy(2, 2.0)) {
        let modes = two_mode_space();
        let back = modes.apply_conjugation(&modes.apply_conjugation(&f));
        prop_assert!((back - &f).norm() < 1e-15);
    }

    #[test]
    fn conjugation_fixed_vectors_pair_to_reals(f in vec_strategy(2, 1.0), g in vec_strategy(2, 1.0)) {
        let modes = two_mode_space();
        let sym = |v: &OneBosonVector| (v + modes.apply_conjugation(v)) * C64::new(0.5, 0.0);
        let (fs, gs) = (sym(&f), sym(&g));
        prop_assert!(modes.conjugation_defect(&fs) < 1e-14);
        prop_assert!(modes.inner(&fs, &gs).im.abs() < 1e-14);
    }

    #[test]
    fn exp_vector_overlap_within_tail(f in vec_strategy(2, 0.6), g in vec_strategy(2, 0.6)) {
        let modes = two_mode_space();
        let fock = TruncatedFock::new(&modes, 8).unwrap();
        let (zf, tf) = fock.exp_vector(&f).unwrap();
        let (zg, tg) = fock.exp_vector(&g).unwrap();
        let exact = modes.inner(&f, &g).exp();
        let bound = tf * zg.norm() + zf.norm() * tg + tf * tg + 1e-13;
        prop_assert!((zf.dotc(&zg) - exact).norm() <= bound);
    }

    #[test]
    fn gamma_is_multiplicative(a in prop::collection::vec(-1.0f64..1.0, 2), b in prop::collection::vec(-1.0f64..1.0, 2)) {
        let fock = TruncatedFock::new(&two_mode_space(), 4).unwrap();
        let ja: Vec<C64> = a.iter().map(|&x| C64::new(x, 0.0)).collect();
        let jb: Vec<C64> = b.iter().map(|&x| C64::new(x, 0.0)).collect();
        let jab: Vec<C64> = ja.iter().zip(&jb).map(|(x, y)| x * y).collect();
        let lhs = fock.gamma_contraction(&ja).unwrap() * fock.gamma_contraction(&jb).unwrap();
        prop_assert!(max_abs(&(lhs - fock.gamma_contraction(&jab).unwrap())) < 1e-15);
    }

    #[test]
    fn bridge_hits_both_endpoints(z in prop::collection::vec(-3.0f64..3.0, 16), x0 in -2.0f64..2.0, y in -2.0f64..2.0) {
        let grid = TimeGrid::uniform(0.8, 16).unwrap();
        let p = bridge_from_normals(&[x0], &[y], &grid, &z).unwrap();
        prop_assert_eq!(p.start()[0], x0);
        prop_assert!((p.end()[0] - y).abs() < 1e-14);
        let back = p.reversed().reversed();
        for j in 0..=16 {
            prop_assert!((back.position(j)[0] - p.position(j)[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn midpoint_reversal_is_exact(z in prop::collection::vec(-3.0f64..3.0, 12), g in vec_strategy(2, 0.5), h in vec_strategy(2, 0.5)) {
        let modes = two_mode_space();
        let c0 = C64::new(0.3, 0.1);
        let gv = OneBosonVector::from_vec(vec![c0, c0.conj()]);
        let fv = OneBosonVector::from_vec(vec![C64::new(0.2, 0.0); 2]);
        let cf = CouplingFamily::new(&modes, vec![0.5, -0.5], vec![gv], vec![fv], vec![CMatrix::identity(1, 1)]).unwrap();
        let grid = TimeGrid::uniform(0.6, 12).unwrap();
        let path = bridge_from_normals(&[0.2], &[-0.3], &grid, &z).unwrap();
        let pot = Potential::Polynomial(vec![0.1, 0.0, 0.2]);
        let r = reversal_check(&path, &cf, &[0.3], &pot, &g, &h, Flavor::Midpoint).unwrap();
        prop_assert!(r < 1e-10, "residual {}", r);
    }
}
