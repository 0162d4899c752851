//! Time-ordered Wick series for the spin integrand.
//!
//! `⟨ζ(g), 𝕎 ζ(h)⟩ = ⟨ζ(g), W ζ(h)⟩ · (id + Σ_{n≥1} ∫_{simplex} Q⁽ⁿ⁾)` where
//! `Q⁽ⁿ⁾ = Σ_α σ_{α_n}…σ_{α_1} Σ_{A∪B∪C} I_C · ADg_A · Ah_B`.
//!
//! Simplex integrals are evaluated on the path grid as a discrete
//! time-ordered exponential: node `i` with quadrature weight `w_i` contributes
//! `exp(w_i X_i)`, i.e. ordered tuples `i_1 ≤ … ≤ i_n` weighted by
//! `Π w / Π (multiplicity)!`. With this convention the Nelson series resums
//! exactly to the closed exponential built from the same quadrature.
//!
//! The fast evaluation walks the nodes once, carrying per order a vector over
//! a small Fock space of "open pairings": a pairing opened at `t_c` is a boson
//! `a†(F_{α_c})`, it is damped by `Γ(w)` between nodes, and closed by
//! `a(F_{α_{c'}})`. The vacuum component at the end is `∫Q⁽ⁿ⁾`.

use alloc::vec;
use alloc::vec::Vec;

use crate::basic_processes::BasicProcessTrace;
use crate::error::{invalid, Result};
use crate::fock::TruncatedFock;
use crate::linalg::{c, CMatrix, C64, I};
use crate::modespace::{CouplingFamily, OneBosonVector};
use crate::scalar_kernel::ScalarKernelSample;

/// Upper limits enforced for series runs.
pub const MAX_SERIES_ORDER: usize = 6;
pub const MAX_SERIES_STEPS: usize = 64;

/// One way to split `{0..n}` into `A` (annihilation side, pairs with g),
/// `B` (creation side, pairs with h) and ordered pairs `(c, c')`, `c < c'`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionTerm {
    pub n: usize,
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

/// All partition terms of `{0..n}`.
pub fn partition_terms(n: usize) -> Vec<PartitionTerm> {
    let mut out = Vec::new();
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut open: Vec<usize> = Vec::new();
    let mut pairs = Vec::new();
    fn rec(
        i: usize,
        n: usize,
        a: &mut Vec<usize>,
        b: &mut Vec<usize>,
        open: &mut Vec<usize>,
        pairs: &mut Vec<(usize, usize)>,
        out: &mut Vec<PartitionTerm>,
    ) {
        if open.len() > n - i {
            return;
        }
        if i == n {
            if open.is_empty() {
                let mut p = pairs.clone();
                p.sort();
                out.push(PartitionTerm { n, a: a.clone(), b: b.clone(), pairs: p });
            }
            return;
        }
        a.push(i);
        rec(i + 1, n, a, b, open, pairs, out);
        a.pop();
        b.push(i);
        rec(i + 1, n, a, b, open, pairs, out);
        b.pop();
        open.push(i);
        rec(i + 1, n, a, b, open, pairs, out);
        open.pop();
        for k in 0..open.len() {
            let c0 = open.remove(k);
            pairs.push((c0, i));
            rec(i + 1, n, a, b, open, pairs, out);
            pairs.pop();
            open.insert(k, c0);
        }
    }
    rec(0, n, &mut a, &mut b, &mut open, &mut pairs, &mut out);
    out
}

/// `Σ_{k even} C(n,k) (k−1)!! 2^{n−k}`.
pub fn partition_count(n: usize) -> usize {
    let mut total = 0;
    for k in (0..=n).step_by(2) {
        let mut dfact = 1;
        let mut j = k;
        while j > 1 {
            dfact *= j - 1;
            j -= 2;
        }
        total += crate::fock::binomial(n, k) * dfact * (1usize << (n - k));
    }
    total
}

fn check_trace(trace: &BasicProcessTrace, coupling: &CouplingFamily, t_idx: usize) -> Result<()> {
    if trace.field_sign() < 0.0 {
        return Err(invalid("the series expansion is built on the standard basic processes, not the Nelson variant"));
    }
    if t_idx > trace.steps() {
        return Err(invalid("evaluation index beyond the path grid"));
    }
    crate::error::check_len(coupling.modes().mode_count(), trace.modes().mode_count())
}

/// Per-node scalar factors `ADg + Ah` for each α.
fn node_scalars(
    trace: &BasicProcessTrace,
    g: &OneBosonVector,
    h: &OneBosonVector,
    t_idx: usize,
    row: &[OneBosonVector],
    i: usize,
) -> (Vec<C64>, Vec<C64>) {
    let modes = trace.modes();
    let (wbar_it, _) = trace.contraction_weight(i, t_idx);
    let (_, w0i) = trace.contraction_weight(0, i);
    let left = (wbar_it.component_mul(g) - &row[i]) * I;
    let right = (w0i.component_mul(h) + trace.u_plus(i)) * I;
    let f = trace.f_at(i);
    let adg = f.iter().map(|fa| modes.inner(&left, fa)).collect();
    let ah = f.iter().map(|fa| modes.inner(fa, &right)).collect();
    (adg, ah)
}

/// `Q⁽ⁿ⁾(g,h; t_{nodes})` for nondecreasing node indices, by explicit
/// enumeration of partitions and multi-indices.
pub fn q_n(
    coupling: &CouplingFamily,
    trace: &BasicProcessTrace,
    g: &OneBosonVector,
    h: &OneBosonVector,
    nodes: &[usize],
    t_idx: usize,
) -> Result<CMatrix> {
    check_trace(trace, coupling, t_idx)?;
    if nodes.windows(2).any(|w| w[1] < w[0]) || nodes.iter().any(|&n| n > t_idx) {
        return Err(invalid("series times must be ordered and not exceed the evaluation time"));
    }
    let n = nodes.len();
    let l = coupling.spin_dim();
    let s = coupling.spin_count();
    let sig = coupling.spin_matrices();
    let row = trace.u_minus_row(t_idx);
    let modes = trace.modes();
    let scal: Vec<(Vec<C64>, Vec<C64>)> = nodes.iter().map(|&i| node_scalars(trace, g, h, t_idx, &row, i)).collect();
    let terms = partition_terms(n);
    let mut total = CMatrix::zeros(l, l);
    let mut alpha = vec![0usize; n];
    loop {
        let mut sum = c(0.0);
        for term in &terms {
            let mut p = c(1.0);
            for &a in &term.a {
                p *= scal[a].0[alpha[a]];
            }
            for &b in &term.b {
                p *= scal[b].1[alpha[b]];
            }
            for &(c0, c1) in &term.pairs {
                let (_, w) = trace.contraction_weight(nodes[c0], nodes[c1]);
                let f0 = &trace.f_at(nodes[c0])[alpha[c0]];
                let f1 = &trace.f_at(nodes[c1])[alpha[c1]];
                p *= modes.inner(f1, &w.component_mul(f0));
            }
            sum += p;
        }
        if sum != c(0.0) {
            let mut prod = CMatrix::identity(l, l);
            for &al in alpha.iter() {
                prod = &sig[al] * prod;
            }
            total += prod * sum;
        }
        // next multi-index
        let mut k = 0;
        while k < n {
            alpha[k] += 1;
            if alpha[k] < s {
                break;
            }
            alpha[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
    }
    Ok(total)
}

/// Per-order integrated series terms by brute-force enumeration of node
/// tuples (small grids only; used as the oracle for the fast evaluation).
pub fn series_terms_brute(
    coupling: &CouplingFamily,
    trace: &BasicProcessTrace,
    g: &OneBosonVector,
    h: &OneBosonVector,
    t_idx: usize,
    n_max: usize,
) -> Result<Vec<CMatrix>> {
    let l = coupling.spin_dim();
    let weights = trace.node_weights(t_idx);
    let active: Vec<usize> = (0..=t_idx).filter(|&i| weights[i] != 0.0).collect();
    let mut out = vec![CMatrix::identity(l, l)];
    for n in 1..=n_max {
        let mut acc = CMatrix::zeros(l, l);
        let mut idx = vec![0usize; n];
        if !active.is_empty() {
            loop {
                let nodes: Vec<usize> = idx.iter().map(|&k| active[k]).collect();
                let mut wprod = 1.0;
                let mut run = 1usize;
                for k in 0..n {
                    wprod *= weights[nodes[k]];
                    if k > 0 && nodes[k] == nodes[k - 1] {
                        run += 1;
                        wprod /= run as f64;
                    } else {
                        run = 1;
                    }
                }
                acc += q_n(coupling, trace, g, h, &nodes, t_idx)? * c(wprod);
                // next nondecreasing tuple
                let mut k = n;
                loop {
                    if k == 0 {
                        break;
                    }
                    k -= 1;
                    if idx[k] + 1 < active.len() {
                        idx[k] += 1;
                        for r in k + 1..n {
                            idx[r] = idx[k];
                        }
                        k = n + 1;
                        break;
                    }
                }
                if k != n + 1 {
                    break;
                }
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// Block state: one L×L matrix per open-pairing Fock basis state.
type State = Vec<CMatrix>;

struct OpenSpace {
    fock: TruncatedFock,
    mu: Vec<f64>,
}

impl OpenSpace {
    fn zeros(&self, l: usize) -> State {
        vec![CMatrix::zeros(l, l); self.fock.dim()]
    }

    /// `Σ_α σ_α (d_α + a†(F_α) + a(F_α)) S`, scaled by `scale`.
    fn apply_x(&self, s: &State, sig: &[CMatrix], d: &[C64], f: &[OneBosonVector], scale: f64, l: usize) -> State {
        let m = self.mu.len();
        let mut out = self.zeros(l);
        for (al, sa) in sig.iter().enumerate() {
            let mut t = self.zeros(l);
            for i in 0..self.fock.dim() {
                if s[i].iter().all(|z| *z == c(0.0)) {
                    continue;
                }
                t[i] += &s[i] * d[al];
                for k in 0..m {
                    let amp = libm::sqrt(self.mu[k]);
                    if let Some(j) = self.fock.raised(i, k) {
                        let nk = self.fock.basis()[i][k] as f64;
                        // a†: |n⟩ → √(n_k+1) √µ_k F_k |n+e_k⟩
                        t[j] += &s[i] * (f[al][k] * amp * libm::sqrt(nk + 1.0));
                    }
                    if let Some(j) = self.fock.lowered(i, k) {
                        let nk = self.fock.basis()[i][k] as f64;
                        // a: |n⟩ → √n_k √µ_k conj(F_k) |n−e_k⟩
                        t[j] += &s[i] * (f[al][k].conj() * amp * libm::sqrt(nk));
                    }
                }
            }
            for (o, ti) in out.iter_mut().zip(&t) {
                *o += sa * ti * c(scale);
            }
        }
        out
    }
}

/// Series value and per-order contributions.
#[derive(Debug, Clone)]
pub struct SeriesValue {
    /// `⟨ζ(g), W ζ(h)⟩`.
    pub scalar: C64,
    /// Integrated `Q⁽ⁿ⁾` for `n = 0..=N_max` (order 0 is the identity).
    pub orders: Vec<CMatrix>,
    /// `scalar · Σ_{n≤k} orders[n]` for each k.
    pub partial_sums: Vec<CMatrix>,
}

impl SeriesValue {
    pub fn value(&self) -> &CMatrix {
        self.partial_sums.last().expect("order 0 present")
    }

    /// Frobenius norm of each scaled order.
    pub fn order_norms(&self) -> Vec<f64> {
        self.orders.iter().map(|q| (q * self.scalar).norm()).collect()
    }

    /// `‖last order‖ / ‖value‖`.
    pub fn tail_ratio(&self) -> f64 {
        let last = self.order_norms().last().cloned().unwrap_or(0.0);
        last / self.value().norm().max(f64::MIN_POSITIVE)
    }
}

/// Integrated series terms by the single forward sweep over nodes.
pub fn series_terms(
    coupling: &CouplingFamily,
    trace: &BasicProcessTrace,
    g: &OneBosonVector,
    h: &OneBosonVector,
    t_idx: usize,
    n_max: usize,
) -> Result<Vec<CMatrix>> {
    check_trace(trace, coupling, t_idx)?;
    let l = coupling.spin_dim();
    let sig = coupling.spin_matrices();
    let mu = trace.modes().mu().to_vec();
    let fock = TruncatedFock::from_weights(mu.clone(), n_max / 2, 1, usize::MAX)?;
    let space = OpenSpace { fock, mu };
    let weights = trace.node_weights(t_idx);
    let row = trace.u_minus_row(t_idx);
    let mut states: Vec<State> = (0..=n_max).map(|_| space.zeros(l)).collect();
    states[0][0] = CMatrix::identity(l, l);
    for i in 0..=t_idx {
        if i > 0 {
            let wstep: Vec<C64> = trace.step_weight(i - 1).iter().cloned().collect();
            let gam = space.fock.gamma_diagonal(&wstep)?;
            for st in states.iter_mut() {
                for (k, blk) in st.iter_mut().enumerate() {
                    *blk *= gam[k];
                }
            }
        }
        let wi = weights[i];
        if wi == 0.0 {
            continue;
        }
        let (adg, ah) = node_scalars(trace, g, h, t_idx, &row, i);
        let d: Vec<C64> = adg.iter().zip(&ah).map(|(a, b)| a + b).collect();
        let f = trace.f_at(i);
        let old = states.clone();
        for m0 in 0..n_max {
            let mut term = old[m0].clone();
            for k in 1..=(n_max - m0) {
                term = space.apply_x(&term, sig, &d, f, wi / k as f64, l);
                for (dst, src) in states[m0 + k].iter_mut().zip(&term) {
                    *dst += src;
                }
            }
        }
    }
    Ok(states.into_iter().map(|s| s[0].clone()).collect())
}

/// `⟨ζ(g), 𝕎 ζ(h)⟩` truncated at order `n_max`.
pub fn series_matrix_element(
    coupling: &CouplingFamily,
    trace: &BasicProcessTrace,
    g: &OneBosonVector,
    h: &OneBosonVector,
    t_idx: usize,
    n_max: usize,
) -> Result<SeriesValue> {
    let orders = series_terms(coupling, trace, g, h, t_idx, n_max)?;
    let scalar = ScalarKernelSample::from_trace(trace, t_idx).matrix_element(g, h);
    let mut partial_sums = Vec::with_capacity(orders.len());
    let mut acc = CMatrix::zeros(coupling.spin_dim(), coupling.spin_dim());
    for q in &orders {
        acc += q;
        partial_sums.push(&acc * scalar);
    }
    Ok(SeriesValue { scalar, orders, partial_sums })
}

/// Closed Nelson exponential `exp(−u^N_{−ξ} + ⟨g,w h⟩ + i⟨g,U^{N,+}⟩ − i⟨U^{N,−},h⟩)`
/// from a Nelson trace.
pub fn nelson_resummed(nelson: &BasicProcessTrace, g: &OneBosonVector, h: &OneBosonVector, t_idx: usize) -> Result<C64> {
    if nelson.field_sign() > 0.0 {
        return Err(invalid("nelson_resummed needs a Nelson trace"));
    }
    Ok(ScalarKernelSample::from_trace(nelson, t_idx).matrix_element(g, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basic_processes::{integrate, nelson_trace, Flavor};
    use crate::drivers::{sample_bm_tagged, sample_bridge_tagged, TimeGrid};
    use crate::linalg::max_abs;
    use crate::modespace::{nelson_preset, pauli, ModeSpace};
    use crate::potential::Potential;

    #[test]
    fn partition_counts() {
        let expect = [1, 2, 5, 14, 43, 142, 499];
        for n in 0..=6 {
            assert_eq!(partition_terms(n).len(), expect[n]);
            assert_eq!(partition_count(n), expect[n]);
        }
        let t = partition_terms(2);
        assert!(t.iter().any(|p| p.pairs == vec![(0, 1)]));
    }

    fn toy_spin() -> CouplingFamily {
        let mom = vec![0.5, -0.5];
        let modes = ModeSpace::new(vec![1.0, 1.0], vec![1.0, 1.0], mom.clone(), 1, vec![1, 0], vec![c(1.0); 2]).unwrap();
        let z = C64::new(0.2, 0.1);
        let g = OneBosonVector::from_vec(vec![z, z.conj()]);
        let f1 = OneBosonVector::from_vec(vec![c(0.3), c(0.3)]);
        let f2 = OneBosonVector::from_vec(vec![C64::new(0.1, 0.2), C64::new(0.1, -0.2)]);
        let p = pauli();
        CouplingFamily::new(&modes, mom, vec![g], vec![f1, f2], vec![p[2].clone(), p[0].clone()]).unwrap()
    }

    #[test]
    fn fast_sweep_matches_enumeration() {
        let cf = toy_spin();
        let grid = TimeGrid::uniform(0.4, 4).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 2, 7);
        let g = OneBosonVector::from_vec(vec![C64::new(0.1, 0.2), C64::new(-0.2, 0.1)]);
        let h = OneBosonVector::from_vec(vec![C64::new(0.3, 0.0), C64::new(0.0, -0.1)]);
        for flavor in [Flavor::ItoLeft, Flavor::Midpoint] {
            let tr = integrate(&p, &cf, &[0.2], &Potential::Zero, flavor).unwrap();
            let fast = series_terms(&cf, &tr, &g, &h, 4, 3).unwrap();
            let brute = series_terms_brute(&cf, &tr, &g, &h, 4, 3).unwrap();
            for n in 0..=3 {
                assert!(max_abs(&(&fast[n] - &brute[n])) < 1e-13, "order {n}");
            }
        }
    }

    #[test]
    fn zero_f_collapses_to_scalar() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let gv = OneBosonVector::from_vec(vec![c(0.3)]);
        let cf = CouplingFamily::new(&modes, vec![0.0], vec![gv], vec![OneBosonVector::zeros(1)], vec![CMatrix::identity(1, 1)]).unwrap();
        let grid = TimeGrid::uniform(0.5, 8).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 1, 0);
        let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, Flavor::ItoLeft).unwrap();
        let g = OneBosonVector::from_vec(vec![c(0.2)]);
        let v = series_matrix_element(&cf, &tr, &g, &g, 8, 4).unwrap();
        assert!((v.value()[(0, 0)] - v.scalar).norm() < 1e-15);
        let z = OneBosonVector::zeros(1);
        assert!(max_abs(&q_n(&cf, &tr, &z, &z, &[3], 8).unwrap()) == 0.0);
    }

    #[test]
    fn nelson_series_resums() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let (_, cf) = nelson_preset(&modes, OneBosonVector::from_vec(vec![c(0.3)]), false).unwrap();
        let grid = TimeGrid::uniform(0.5, 16).unwrap();
        let p = sample_bm_tagged(&[0.0], &grid, 1, 3);
        let g = OneBosonVector::from_vec(vec![C64::new(0.3, 0.1)]);
        let h = OneBosonVector::from_vec(vec![C64::new(0.2, -0.2)]);
        for flavor in [Flavor::ItoLeft, Flavor::Midpoint] {
            let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, flavor).unwrap();
            let nt = nelson_trace(&p, &cf, &[0.0], &Potential::Zero, flavor).unwrap();
            let v = series_matrix_element(&cf, &tr, &g, &h, 16, 6).unwrap();
            let r = nelson_resummed(&nt, &g, &h, 16).unwrap();
            let err = (v.value()[(0, 0)] - r).norm() / r.norm();
            assert!(err < 1e-6, "{flavor:?}: {err}");
            assert!(v.tail_ratio() < 1e-3);
        }
    }

    #[test]
    fn series_reversal_per_order() {
        let cf = toy_spin();
        let grid = TimeGrid::uniform(0.4, 8).unwrap();
        let p = sample_bridge_tagged(&[0.0], &[0.3], &grid, 2, 2).unwrap();
        let g = OneBosonVector::from_vec(vec![C64::new(0.1, 0.2), C64::new(-0.2, 0.1)]);
        let h = OneBosonVector::from_vec(vec![C64::new(0.3, 0.0), C64::new(0.0, -0.1)]);
        let fwd = integrate(&p, &cf, &[0.2], &Potential::Zero, Flavor::Midpoint).unwrap();
        let rev = integrate(&p.reversed(), &cf, &[0.2], &Potential::Zero, Flavor::Midpoint).unwrap();
        let a = series_matrix_element(&cf, &rev, &g, &h, 8, 3).unwrap();
        let b = series_matrix_element(&cf, &fwd, &h, &g, 8, 3).unwrap();
        for n in 0..=3 {
            let lhs = &a.orders[n] * a.scalar;
            let rhs = (&b.orders[n] * b.scalar).adjoint();
            assert!(max_abs(&(lhs - rhs)) < 1e-12, "order {n}");
        }
    }
}
