//! Basic processes along a driver path, computed in the one-boson space.
//!
//! The auxiliary process `K_t` (valued in a larger space) is never formed.
//! Instead each step contributes two base-space vectors, `a_j` attached to
//! node `j` and `b_j` attached to node `j+1`, so that formally
//! `K_{t_k} = Σ_{j<k} (ι_{t_j} a_j + ι_{t_{j+1}} b_j)`. All pairings reduce
//! through `ι_t* ι_s = w_{s,t} = e^{−(t−s)ω + i m·(X_t−X_s)}` for `s ≤ t`.
//!
//! * Itô left-point: `a_j = Σ_ℓ G_{ℓ,X_j} ΔX_ℓ + q̆_{X_j} Δ_j`, `b_j = 0`.
//! * Midpoint: `a_j = ½ Σ_ℓ G_{ℓ,X_j} ΔX_ℓ`, `b_j = ½ Σ_ℓ G_{ℓ,X_{j+1}} ΔX_ℓ`;
//!   the Stratonovich correction of the midpoint sum supplies the `q̆` drift.
//!
//! From these, `U⁺_{j+1} = w_{j,j+1}(U⁺_j + a_j) + b_j` and `‖K‖²` is
//! accumulated exactly (it is the squared norm of the discrete `K`, hence
//! never negative).

use alloc::vec;
use alloc::vec::Vec;

use crate::drivers::DriverPath;
use crate::error::{check_len, invalid, Error, Result};
use crate::linalg::{c, is_finite_vector, C64, I};
use crate::modespace::{is_nelson, CouplingFamily, ModeSpace, OneBosonVector};
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Flavor {
    ItoLeft,
    Midpoint,
}

/// Basic processes sampled on every node of one path.
#[derive(Debug, Clone)]
pub struct BasicProcessTrace {
    path: DriverPath,
    modes: ModeSpace,
    flavor: Flavor,
    xi: Vec<f64>,
    field_sign: f64,
    a: Vec<OneBosonVector>,
    b: Vec<OneBosonVector>,
    step_weight: Vec<OneBosonVector>,
    u_plus: Vec<OneBosonVector>,
    ksq: Vec<f64>,
    v_int: Vec<f64>,
    f_nodes: Vec<Vec<OneBosonVector>>,
}

fn zero(m: usize) -> OneBosonVector {
    OneBosonVector::zeros(m)
}

fn combine(g: &[OneBosonVector], dx: &[f64], scale: f64) -> OneBosonVector {
    let mut out = zero(g[0].len());
    for (gl, &d) in g.iter().zip(dx) {
        out.axpy(c(d * scale), gl, c(1.0));
    }
    out
}

fn potential_integral(path: &DriverPath, potential: &Potential, flavor: Flavor) -> Vec<f64> {
    let k = path.steps();
    let vals: Vec<f64> = (0..=k).map(|j| potential.eval(path.position(j))).collect();
    let mut acc = vec![0.0; k + 1];
    for j in 0..k {
        let dt = path.grid().step(j);
        let inc = match flavor {
            Flavor::ItoLeft => vals[j] * dt,
            Flavor::Midpoint => 0.5 * (vals[j] + vals[j + 1]) * dt,
        };
        acc[j + 1] = acc[j] + inc;
    }
    acc
}

impl BasicProcessTrace {
    fn assemble(
        path: &DriverPath,
        coupling: &CouplingFamily,
        xi: &[f64],
        potential: &Potential,
        flavor: Flavor,
        field_sign: f64,
        a: Vec<OneBosonVector>,
        b: Vec<OneBosonVector>,
    ) -> Result<Self> {
        let modes = coupling.modes().clone();
        let k = path.steps();
        let m = modes.mode_count();
        let mut step_weight = Vec::with_capacity(k);
        let mut u_plus = Vec::with_capacity(k + 1);
        let mut ksq = Vec::with_capacity(k + 1);
        u_plus.push(zero(m));
        ksq.push(0.0);
        for j in 0..k {
            let w = modes.propagation_weight(path.grid().step(j), &path.displacement(j));
            let up = &u_plus[j];
            let wb: OneBosonVector = w.map(|z| z.conj()).component_mul(&b[j]);
            let wup = w.component_mul(up);
            let inc = 2.0 * modes.inner(up, &a[j]).re
                + 2.0 * modes.inner(&wup, &b[j]).re
                + modes.norm_sq(&a[j])
                + modes.norm_sq(&b[j])
                + 2.0 * modes.inner(&a[j], &wb).re;
            let next_k = (ksq[j] + inc).max(0.0);
            let next_u = w.component_mul(&(up + &a[j])) + &b[j];
            if !next_k.is_finite() || !is_finite_vector(&next_u) {
                return Err(Error::Overflow { node: j + 1, context: "basic process accumulation" });
            }
            ksq.push(next_k);
            u_plus.push(next_u);
            step_weight.push(w);
        }
        let v_int = potential_integral(path, potential, flavor);
        if let Some(j) = v_int.iter().position(|v| !v.is_finite()) {
            return Err(Error::Overflow { node: j, context: "potential integral" });
        }
        let f_nodes = (0..=k).map(|j| coupling.f(path.position(j))).collect();
        Ok(Self {
            path: path.clone(),
            modes,
            flavor,
            xi: xi.to_vec(),
            field_sign,
            a,
            b,
            step_weight,
            u_plus,
            ksq,
            v_int,
            f_nodes,
        })
    }

    pub fn path(&self) -> &DriverPath {
        &self.path
    }

    pub fn modes(&self) -> &ModeSpace {
        &self.modes
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn steps(&self) -> usize {
        self.path.steps()
    }

    /// `+1` for the standard processes, `−1` for the Nelson variant (where the
    /// field part of `u` enters with the opposite sign).
    pub fn field_sign(&self) -> f64 {
        self.field_sign
    }

    pub fn u_plus(&self, j: usize) -> &OneBosonVector {
        &self.u_plus[j]
    }

    pub fn ksq(&self, j: usize) -> f64 {
        self.ksq[j]
    }

    /// `∫₀^{t_j} V(X_s) ds`.
    pub fn potential_integral(&self, j: usize) -> f64 {
        self.v_int[j]
    }

    /// `u_{ξ,t_j}` for the trace's own ξ.
    pub fn u(&self, j: usize) -> C64 {
        self.u_with_xi(j, &self.xi)
    }

    /// `±½‖K_{t_j}‖² + ∫V − i ξ·(X_{t_j} − X_0)` for an arbitrary ξ.
    pub fn u_with_xi(&self, j: usize, xi: &[f64]) -> C64 {
        let d = self.path.difference(0, j);
        let phase: f64 = xi.iter().zip(&d).map(|(a, b)| a * b).sum();
        C64::new(self.field_sign * 0.5 * self.ksq[j] + self.v_int[j], -phase)
    }

    /// Step contributions `(a_j, b_j)`.
    pub fn contribution(&self, j: usize) -> (&OneBosonVector, &OneBosonVector) {
        (&self.a[j], &self.b[j])
    }

    /// `w_{t_j, t_{j+1}}`.
    pub fn step_weight(&self, j: usize) -> &OneBosonVector {
        &self.step_weight[j]
    }

    /// `F_{α, X_{t_j}}` for all α.
    pub fn f_at(&self, j: usize) -> &[OneBosonVector] {
        &self.f_nodes[j]
    }

    /// Quadrature weights for time integrals over `[0, t_K]`: left-point for
    /// the Itô flavor, trapezoid for the midpoint flavor.
    pub fn node_weights(&self, t_idx: usize) -> Vec<f64> {
        let g = self.path.grid();
        let mut w = vec![0.0; t_idx + 1];
        for j in 0..t_idx {
            let dt = g.step(j);
            match self.flavor {
                Flavor::ItoLeft => w[j] += dt,
                Flavor::Midpoint => {
                    w[j] += 0.5 * dt;
                    w[j + 1] += 0.5 * dt;
                }
            }
        }
        w
    }

    /// `(w̄_{τ,t}, w_{τ,t})` for `τ = t_{tau_idx}`, `t = t_{t_idx}`; both are
    /// identically 1 when `t ≤ τ`.
    pub fn contraction_weight(&self, tau_idx: usize, t_idx: usize) -> (OneBosonVector, OneBosonVector) {
        let m = self.modes.mode_count();
        if t_idx <= tau_idx {
            let one = OneBosonVector::from_element(m, c(1.0));
            return (one.clone(), one);
        }
        let g = self.path.grid();
        let w = self
            .modes
            .propagation_weight(g.node(t_idx) - g.node(tau_idx), &self.path.difference(tau_idx, t_idx));
        (w.map(|z| z.conj()), w)
    }

    /// `U⁻(t_j, t)` for `j = 0..=t_idx`, by the backward recursion
    /// `R_j = a_j + w̄_{j,j+1}(b_j + R_{j+1})`, `R_{t_idx} = 0`.
    pub fn u_minus_row(&self, t_idx: usize) -> Vec<OneBosonVector> {
        let m = self.modes.mode_count();
        let mut row = vec![zero(m); t_idx + 1];
        for j in (0..t_idx).rev() {
            let wbar = self.step_weight[j].map(|z| z.conj());
            let next = wbar.component_mul(&(&self.b[j] + &row[j + 1]));
            row[j] = &self.a[j] + next;
        }
        row
    }

    /// `U⁻_{0,t}` at `t = t_{t_idx}`.
    pub fn u_minus(&self, t_idx: usize) -> OneBosonVector {
        self.u_minus_row(t_idx).swap_remove(0)
    }

    /// Forward summation `Σ_{τ_idx ≤ j < t_idx} (w̄_{t_τ,t_j} a_j + w̄_{t_τ,t_{j+1}} b_j)`,
    /// an independent evaluation of `U⁻(t_τ, t)`.
    pub fn u_minus_direct(&self, tau_idx: usize, t_idx: usize) -> OneBosonVector {
        let mut out = zero(self.modes.mode_count());
        for j in tau_idx..t_idx {
            let (wa, _) = self.contraction_weight(tau_idx, j);
            let (wb, _) = self.contraction_weight(tau_idx, j + 1);
            out += wa.component_mul(&self.a[j]) + wb.component_mul(&self.b[j]);
        }
        out
    }

    /// Midpoint record of `K_t − K_τ` as node-stamped base vectors.
    pub fn k_record(&self, tau_idx: usize, t_idx: usize) -> KRecord {
        let mut rec = KRecord { nodes: Vec::new(), vectors: Vec::new() };
        for j in tau_idx..t_idx {
            rec.push(j, self.a[j].clone());
            rec.push(j + 1, self.b[j].clone());
        }
        rec.compact();
        rec
    }
}

/// A finite combination `Σ_r ι_{t_{n_r}} v_r`, with pairings evaluated through
/// the path-dependent weights.
#[derive(Debug, Clone)]
pub struct KRecord {
    pub nodes: Vec<usize>,
    pub vectors: Vec<OneBosonVector>,
}

impl KRecord {
    fn push(&mut self, node: usize, v: OneBosonVector) {
        self.nodes.push(node);
        self.vectors.push(v);
    }

    /// Merges entries at the same node and drops zero entries.
    fn compact(&mut self) {
        let mut nodes: Vec<usize> = Vec::new();
        let mut vectors: Vec<OneBosonVector> = Vec::new();
        for (n, v) in self.nodes.iter().zip(&self.vectors) {
            match nodes.iter().position(|x| x == n) {
                Some(p) => vectors[p] += v,
                None => {
                    nodes.push(*n);
                    vectors.push(v.clone());
                }
            }
        }
        let keep: Vec<bool> = vectors.iter().map(|v| v.iter().any(|z| z.norm() > 0.0)).collect();
        self.nodes = nodes.iter().zip(&keep).filter(|(_, k)| **k).map(|(n, _)| *n).collect();
        self.vectors = vectors.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(v, _)| v).collect();
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `⟨Σ, Σ'⟩ = Σ_{r,s} ⟨v_r, ι_{t_r}* ι_{t_s} v'_s⟩` along `path`.
    pub fn pairing(&self, other: &KRecord, path: &DriverPath, modes: &ModeSpace) -> C64 {
        let g = path.grid();
        let mut s = c(0.0);
        for (r, vr) in self.nodes.iter().zip(&self.vectors) {
            for (q, vq) in other.nodes.iter().zip(&other.vectors) {
                // ι_r* ι_q = w_{q,r} when q ≤ r, otherwise its adjoint w̄_{r,q}.
                let (lo, hi) = if q <= r { (*q, *r) } else { (*r, *q) };
                let w = modes.propagation_weight(g.node(hi) - g.node(lo), &path.difference(lo, hi));
                let w = if q <= r { w } else { w.map(|z| z.conj()) };
                s += modes.inner(vr, &w.component_mul(vq));
            }
        }
        s
    }
}

/// Basic processes for a coupling family along `path`.
pub fn integrate(
    path: &DriverPath,
    coupling: &CouplingFamily,
    xi: &[f64],
    potential: &Potential,
    flavor: Flavor,
) -> Result<BasicProcessTrace> {
    let nu = coupling.modes().space_dim();
    check_len(nu, path.space_dim())?;
    check_len(nu, xi.len())?;
    let k = path.steps();
    let m = coupling.modes().mode_count();
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    let g_zero = coupling.g_is_zero();
    let mut snap_next = if g_zero { None } else { Some(coupling.snapshot(path.position(0))) };
    for j in 0..k {
        if g_zero {
            a.push(zero(m));
            b.push(zero(m));
            continue;
        }
        let snap = snap_next.take().expect("snapshot");
        let nxt = coupling.snapshot(path.position(j + 1));
        let dx = path.displacement(j);
        match flavor {
            Flavor::ItoLeft => {
                let mut aj = combine(&snap.g, &dx, 1.0);
                aj.axpy(c(path.grid().step(j)), &snap.q_breve, c(1.0));
                a.push(aj);
                b.push(zero(m));
            }
            Flavor::Midpoint => {
                a.push(combine(&snap.g, &dx, 0.5));
                b.push(combine(&nxt.g, &dx, 0.5));
            }
        }
        snap_next = Some(nxt);
    }
    BasicProcessTrace::assemble(path, coupling, xi, potential, flavor, 1.0, a, b)
}

/// Deterministic Nelson analogs: `U^{N,+}_t = Σ_j w_{s_j,t} F_{X_{s_j}} Δ_j`,
/// `U^{N,−}_t = Σ_j w̄_{0,s_j} F_{X_{s_j}} Δ_j`, `‖K^N‖²` from the same kernel,
/// and `u^N = −½‖K^N‖² + ∫V − iξ·ΔX`. The midpoint flavor uses trapezoid
/// quadrature in time.
pub fn nelson_trace(
    path: &DriverPath,
    coupling: &CouplingFamily,
    xi: &[f64],
    potential: &Potential,
    flavor: Flavor,
) -> Result<BasicProcessTrace> {
    if !is_nelson(coupling) {
        return Err(invalid("nelson_trace needs a Nelson coupling (G = 0, L = S = 1, σ₁ = −1)"));
    }
    let nu = coupling.modes().space_dim();
    check_len(nu, path.space_dim())?;
    check_len(nu, xi.len())?;
    let k = path.steps();
    let m = coupling.modes().mode_count();
    let mut a = Vec::with_capacity(k);
    let mut b = Vec::with_capacity(k);
    for j in 0..k {
        let dt = path.grid().step(j);
        let f0 = &coupling.f(path.position(j))[0];
        match flavor {
            Flavor::ItoLeft => {
                a.push(f0 * c(dt));
                b.push(zero(m));
            }
            Flavor::Midpoint => {
                let f1 = &coupling.f(path.position(j + 1))[0];
                a.push(f0 * c(0.5 * dt));
                b.push(f1 * c(0.5 * dt));
            }
        }
    }
    BasicProcessTrace::assemble(path, coupling, xi, potential, flavor, -1.0, a, b)
}

/// Reference left-point sum of the Itô equation for `u`:
/// `du = ⟨U⁺,G⟩·dX + ⟨U⁺,q̆⟩ds + ½Σ‖G_ℓ‖²ds + V ds − iξ·dX`.
pub fn ito_u_reference(trace: &BasicProcessTrace, coupling: &CouplingFamily, potential: &Potential) -> Vec<C64> {
    let path = trace.path();
    let modes = coupling.modes();
    let k = path.steps();
    let mut out = vec![c(0.0); k + 1];
    for j in 0..k {
        let x = path.position(j);
        let snap = coupling.snapshot(x);
        let dx = path.displacement(j);
        let dt = path.grid().step(j);
        let up = trace.u_plus(j);
        let mut inc = modes.inner(up, &snap.q_breve) * dt;
        for (l, gl) in snap.g.iter().enumerate() {
            inc += modes.inner(up, gl) * dx[l];
            inc += c(0.5 * modes.norm_sq(gl) * dt);
        }
        inc += c(potential.eval(x) * dt);
        let phase: f64 = trace.xi().iter().zip(&dx).map(|(a, b)| a * b).sum();
        inc -= I * phase;
        out[j + 1] = out[j] + inc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{sample_bm_tagged, sample_bridge_tagged, TimeGrid};
    use crate::linalg::C64;
    use crate::modespace::{nelson_preset, CouplingFamily, ModeSpace};
    use alloc::vec;

    fn toy(nu: usize) -> CouplingFamily {
        // Two modes swapped by the conjugation, momenta ±m, plane-wave couplings.
        let mut mom = vec![0.0; 2 * nu];
        mom[0] = 0.5;
        mom[nu] = -0.5;
        let modes = ModeSpace::new(vec![1.0, 1.0], vec![1.0, 1.0], mom.clone(), nu, vec![1, 0], vec![c(1.0); 2]).unwrap();
        let g: Vec<OneBosonVector> = (0..nu)
            .map(|l| {
                let z = C64::new(0.3 + 0.1 * l as f64, 0.2);
                OneBosonVector::from_vec(vec![z, z.conj()])
            })
            .collect();
        let f = OneBosonVector::from_vec(vec![C64::new(0.4, -0.1), C64::new(0.4, 0.1)]);
        CouplingFamily::new(&modes, mom, g, vec![f], vec![crate::linalg::CMatrix::identity(1, 1)]).unwrap()
    }

    #[test]
    fn zero_coupling_gives_zero_processes() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.0], 1).unwrap();
        let cf = CouplingFamily::new(&modes, vec![0.0], vec![OneBosonVector::zeros(1)], vec![OneBosonVector::zeros(1)], vec![crate::linalg::CMatrix::identity(1, 1)]).unwrap();
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let p = sample_bm_tagged(&[0.0], &g, 1, 0);
        let tr = integrate(&p, &cf, &[0.7], &Potential::Constant(2.0), Flavor::ItoLeft).unwrap();
        for j in 0..=8 {
            assert_eq!(tr.ksq(j), 0.0);
            assert_eq!(tr.u_plus(j)[0], c(0.0));
            let expected = C64::new(2.0 * g.node(j), -0.7 * (p.position(j)[0]));
            assert!((tr.u(j) - expected).norm() < 1e-14);
        }
        assert!(tr.u_minus_row(8).iter().all(|v| v[0] == c(0.0)));
    }

    #[test]
    fn frozen_path_closed_form() {
        let cf = toy(1);
        let grid = TimeGrid::uniform(0.8, 4000).unwrap();
        let p = crate::drivers::bridge_from_normals(&[0.2], &[0.2], &grid, &vec![0.0; 4000]).unwrap();
        let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, Flavor::ItoLeft).unwrap();
        let qb = cf.q_breve(&[0.2]);
        let t = 0.8;
        for k in 0..2 {
            let om = cf.modes().omega()[k];
            let expect = qb[k] * ((1.0 - libm::exp(-t * om)) / om);
            assert!((tr.u_plus(4000)[k] - expect).norm() < 1e-3 * (1.0 + expect.norm()));
        }
    }

    #[test]
    fn u_structure_and_c_reality() {
        let cf = toy(2);
        let g = TimeGrid::uniform(1.0, 32).unwrap();
        for flavor in [Flavor::ItoLeft, Flavor::Midpoint] {
            let p = sample_bm_tagged(&[0.1, -0.2], &g, 9, 3);
            let tr = integrate(&p, &cf, &[0.4, 0.1], &Potential::Polynomial(vec![0.0, 0.0, 1.0]), flavor).unwrap();
            for j in 0..=32 {
                assert!(tr.ksq(j) >= 0.0);
                let re = tr.u(j).re - tr.potential_integral(j);
                assert!((re - 0.5 * tr.ksq(j)).abs() <= 1e-12 * (1.0 + re.abs()));
                assert!(cf.modes().conjugation_defect(tr.u_plus(j)) < 1e-10);
            }
            for row in tr.u_minus_row(32) {
                assert!(cf.modes().conjugation_defect(&row) < 1e-10);
            }
            let d = tr.u_with_xi(32, &[0.0, 0.0]) - tr.u(32);
            let dx = p.difference(0, 32);
            assert!((d - I * (0.4 * dx[0] + 0.1 * dx[1])).norm() < 1e-13);
        }
    }

    #[test]
    fn u_minus_recursion_matches_forward_sum() {
        let cf = toy(1);
        let g = TimeGrid::uniform(0.5, 8).unwrap();
        let p = sample_bridge_tagged(&[0.0], &[0.3], &g, 4, 1).unwrap();
        for flavor in [Flavor::ItoLeft, Flavor::Midpoint] {
            let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, flavor).unwrap();
            for t in 0..=8 {
                let row = tr.u_minus_row(t);
                for (tau, r) in row.iter().enumerate() {
                    let d = r - tr.u_minus_direct(tau, t);
                    assert!(d.norm() < 1e-12);
                }
                assert!(row[t].norm() == 0.0);
            }
        }
        let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, Flavor::ItoLeft).unwrap();
        let snap = cf.snapshot(p.position(0));
        let one = &snap.g[0] * c(p.displacement(0)[0]) + &snap.q_breve * c(g.step(0));
        assert!((tr.u_minus_row(1)[0].clone() - one).norm() < 1e-14);
    }

    #[test]
    fn ksq_equals_record_self_pairing() {
        let cf = toy(1);
        let g = TimeGrid::uniform(1.0, 6).unwrap();
        let p = sample_bm_tagged(&[0.0], &g, 2, 2);
        for flavor in [Flavor::ItoLeft, Flavor::Midpoint] {
            let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, flavor).unwrap();
            let rec = tr.k_record(0, 6);
            let pair = rec.pairing(&rec, &p, cf.modes());
            assert!((pair.re - tr.ksq(6)).abs() < 1e-12);
            assert!(pair.im.abs() < 1e-12);
        }
    }

    #[test]
    fn weights_are_multiplicative_and_contractive() {
        let cf = toy(1);
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let p = sample_bm_tagged(&[0.0], &g, 2, 5);
        let tr = integrate(&p, &cf, &[0.0], &Potential::Zero, Flavor::ItoLeft).unwrap();
        let (wb13, _) = tr.contraction_weight(1, 3);
        let (wb37, _) = tr.contraction_weight(3, 7);
        let (wb17, w17) = tr.contraction_weight(1, 7);
        assert!((wb13.component_mul(&wb37) - &wb17).norm() < 1e-14);
        assert!(wb17.iter().zip(w17.iter()).all(|(a, b)| (a.conj() - b).norm() == 0.0 && a.norm() <= 1.0));
        let (one, _) = tr.contraction_weight(4, 4);
        assert!(one.iter().all(|z| *z == c(1.0)));
    }

    #[test]
    fn nelson_frozen_path() {
        let modes = ModeSpace::without_momentum(vec![1.0], vec![1.5], 1).unwrap();
        let (_, cf) = nelson_preset(&modes, OneBosonVector::from_vec(vec![c(0.3)]), false).unwrap();
        let grid = TimeGrid::uniform(0.7, 2000).unwrap();
        let p = crate::drivers::bridge_from_normals(&[0.0], &[0.0], &grid, &vec![0.0; 2000]).unwrap();
        let tr = nelson_trace(&p, &cf, &[0.0], &Potential::Zero, Flavor::Midpoint).unwrap();
        let expect = 0.3 * (1.0 - libm::exp(-0.7 * 1.5)) / 1.5;
        assert!((tr.u_plus(2000)[0].re - expect).abs() < 1e-6);
        // ‖K‖² = ∫∫ e^{−|s−r|ω} F² for the frozen path
        let t: f64 = 0.7;
        let om: f64 = 1.5;
        let kk = 0.09 * 2.0 * (t / om - (1.0 - libm::exp(-om * t)) / (om * om));
        assert!((tr.ksq(2000) - kk).abs() < 1e-6);
        assert!(tr.u(2000).re < 0.0);
        let rec = tr.k_record(0, 2000);
        assert!(!rec.is_empty());
    }
}
