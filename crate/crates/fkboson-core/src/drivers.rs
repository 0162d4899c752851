//! Driving processes: Brownian motion and Brownian bridges on a time grid,
//! exact bridge drift moments, pathwise reversal and grid coarsening.
//!
//! A bridge from `x0` to `y` over `[0,T]` is represented through its explicit
//! solution `b_t = x0 + t(y−x0)/T + (T−t) Z_t` with the Gaussian martingale
//! `Z_t = ∫₀ᵗ (T−s)^{-1} dB_s`. The grid values of `Z` are sampled from their
//! exact independent increments, so the nodes carry the exact bridge law,
//! `b_{t_K} = y` holds exactly, and the drift is `Y_t = (y−x0)/T − Z_t`. The
//! stored increments are the driving increments of the discretized equation
//! `X_{j+1} − X_j = ΔB_j + Y_j Δ_j`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_len, config, invalid, Result};
use crate::rng::PathRng;

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || steps == 0 {
            return Err(config("grid needs a positive horizon and at least one step"));
        }
        let nodes = (0..=steps)
            .map(|j| if j == steps { horizon } else { horizon * j as f64 / steps as f64 })
            .collect();
        Ok(Self { nodes })
    }

    /// Nodes `t_j = T(1 − (1 − j/K)^p)`, clustering toward `T` for `p > 1`.
    pub fn refined_toward_end(horizon: f64, steps: usize, power: f64) -> Result<Self> {
        if !(power >= 1.0) {
            return Err(config("refinement power must be at least 1"));
        }
        let mut g = Self::uniform(horizon, steps)?;
        for j in 1..steps {
            let s = 1.0 - j as f64 / steps as f64;
            g.nodes[j] = horizon * (1.0 - libm::pow(s, power));
        }
        Ok(g)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(config("grid must start at 0 and contain at least one step"));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(config("grid nodes must be strictly increasing"));
        }
        Ok(Self { nodes })
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("nonempty grid")
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    pub fn step(&self, j: usize) -> f64 {
        self.nodes[j + 1] - self.nodes[j]
    }

    pub fn is_uniform(&self) -> bool {
        let d0 = self.step(0);
        (0..self.steps()).all(|j| (self.step(j) - d0).abs() <= 1e-12 * d0)
    }

    /// Mirrored grid `t̄_j = T − t_{K−j}`.
    pub fn reversed(&self) -> Self {
        let t = self.horizon();
        let k = self.steps();
        let mut nodes: Vec<f64> = (0..=k).map(|j| t - self.nodes[k - j]).collect();
        nodes[0] = 0.0;
        nodes[k] = t;
        Self { nodes }
    }

    /// Every `factor`-th node.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(invalid("coarsening factor must divide the number of steps"));
        }
        Ok(Self { nodes: self.nodes.iter().step_by(factor).cloned().collect() })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathKind {
    BrownianMotion { x0: Vec<f64> },
    Bridge { x0: Vec<f64>, y: Vec<f64> },
    /// Time reversal of a Brownian motion started at `end`: a bridge-type path
    /// from `start` to `end` with drift `(end − X_s)/(T − s)`.
    Reversed { start: Vec<f64>, end: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTag {
    pub master_seed: u64,
    pub path_index: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverPath {
    grid: TimeGrid,
    nu: usize,
    positions: Vec<f64>,
    increments: Vec<f64>,
    drift: Vec<f64>,
    kind: PathKind,
    seed_tag: Option<SeedTag>,
}

impl DriverPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn space_dim(&self) -> usize {
        self.nu
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn kind(&self) -> &PathKind {
        &self.kind
    }

    pub fn seed_tag(&self) -> Option<SeedTag> {
        self.seed_tag
    }

    pub fn position(&self, j: usize) -> &[f64] {
        &self.positions[j * self.nu..(j + 1) * self.nu]
    }

    /// Driving increment ΔB_j.
    pub fn increment(&self, j: usize) -> &[f64] {
        &self.increments[j * self.nu..(j + 1) * self.nu]
    }

    /// Drift sample Y_{t_j}; the value at `t_K` is unused and stored as 0.
    pub fn drift(&self, j: usize) -> &[f64] {
        &self.drift[j * self.nu..(j + 1) * self.nu]
    }

    /// `X_{t_{j+1}} − X_{t_j}`.
    pub fn displacement(&self, j: usize) -> Vec<f64> {
        let a = self.position(j);
        let b = self.position(j + 1);
        (0..self.nu).map(|l| b[l] - a[l]).collect()
    }

    /// `X_{t_b} − X_{t_a}`.
    pub fn difference(&self, a: usize, b: usize) -> Vec<f64> {
        let pa = self.position(a);
        let pb = self.position(b);
        (0..self.nu).map(|l| pb[l] - pa[l]).collect()
    }

    pub fn start(&self) -> &[f64] {
        self.position(0)
    }

    pub fn end(&self) -> &[f64] {
        self.position(self.steps())
    }

    /// Largest `|X_{j+1} − X_j − ΔB_j − Y_jΔ_j|` over all steps.
    pub fn sde_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.steps() {
            let d = self.displacement(j);
            let dt = self.grid.step(j);
            for l in 0..self.nu {
                let r = d[l] - self.increment(j)[l] - self.drift(j)[l] * dt;
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    fn with_target_drift(grid: TimeGrid, nu: usize, positions: Vec<f64>, target: Option<&[f64]>, kind: PathKind) -> Self {
        let k = grid.steps();
        let t = grid.horizon();
        let mut drift = vec![0.0; (k + 1) * nu];
        let mut increments = vec![0.0; k * nu];
        for j in 0..k {
            let dt = grid.step(j);
            for l in 0..nu {
                let x = positions[j * nu + l];
                let dx = positions[(j + 1) * nu + l] - x;
                let yj = match target {
                    Some(y) => (y[l] - x) / (t - grid.node(j)),
                    None => 0.0,
                };
                drift[j * nu + l] = yj;
                increments[j * nu + l] = dx - yj * dt;
            }
        }
        Self { grid, nu, positions, increments, drift, kind, seed_tag: None }
    }

    /// Time-reversed path `X̄_j = X_{K−j}` on the mirrored grid.
    pub fn reversed(&self) -> Self {
        let k = self.steps();
        let nu = self.nu;
        let mut positions = Vec::with_capacity(self.positions.len());
        for j in 0..=k {
            positions.extend_from_slice(self.position(k - j));
        }
        let grid = self.grid.reversed();
        let mut out = match &self.kind {
            PathKind::Bridge { x0, y } => {
                let kind = PathKind::Bridge { x0: y.clone(), y: x0.clone() };
                Self::with_target_drift(grid, nu, positions, Some(x0), kind)
            }
            PathKind::BrownianMotion { x0 } => {
                let kind = PathKind::Reversed { start: self.end().to_vec(), end: x0.clone() };
                Self::with_target_drift(grid, nu, positions, Some(x0), kind)
            }
            PathKind::Reversed { end, .. } => {
                let kind = PathKind::BrownianMotion { x0: end.clone() };
                Self::with_target_drift(grid, nu, positions, None, kind)
            }
        };
        out.seed_tag = self.seed_tag;
        out
    }

    /// The same path observed on every `factor`-th node.
    pub fn coarsened(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsened(factor)?;
        let nu = self.nu;
        let mut positions = Vec::with_capacity((grid.steps() + 1) * nu);
        for j in 0..=grid.steps() {
            positions.extend_from_slice(self.position(j * factor));
        }
        let target: Option<Vec<f64>> = match &self.kind {
            PathKind::Bridge { y, .. } => Some(y.clone()),
            PathKind::Reversed { end, .. } => Some(end.clone()),
            PathKind::BrownianMotion { .. } => None,
        };
        let mut out = Self::with_target_drift(grid, nu, positions, target.as_deref(), self.kind.clone());
        out.seed_tag = self.seed_tag;
        Ok(out)
    }
}

/// Brownian motion from `x0` built from standard normals (`K·ν` of them).
pub fn bm_from_normals(x0: &[f64], grid: &TimeGrid, normals: &[f64]) -> Result<DriverPath> {
    let nu = x0.len();
    let k = grid.steps();
    check_len(k * nu, normals.len())?;
    let mut positions = Vec::with_capacity((k + 1) * nu);
    positions.extend_from_slice(x0);
    let mut increments = vec![0.0; k * nu];
    for j in 0..k {
        let s = libm::sqrt(grid.step(j));
        for l in 0..nu {
            let db = s * normals[j * nu + l];
            increments[j * nu + l] = db;
            let prev = positions[j * nu + l];
            positions.push(prev + db);
        }
    }
    Ok(DriverPath {
        grid: grid.clone(),
        nu,
        positions,
        increments,
        drift: vec![0.0; (k + 1) * nu],
        kind: PathKind::BrownianMotion { x0: x0.to_vec() },
        seed_tag: None,
    })
}

/// Brownian bridge from `x0` to `y` built from standard normals (`K·ν` of
/// them; the last step's normals are not needed and ignored).
pub fn bridge_from_normals(x0: &[f64], y: &[f64], grid: &TimeGrid, normals: &[f64]) -> Result<DriverPath> {
    let nu = x0.len();
    check_len(nu, y.len())?;
    let k = grid.steps();
    check_len(k * nu, normals.len())?;
    let t = grid.horizon();
    let mut z = vec![0.0; nu];
    let mut positions = vec![0.0; (k + 1) * nu];
    let mut drift = vec![0.0; (k + 1) * nu];
    for j in 0..k {
        let tj = grid.node(j);
        for l in 0..nu {
            positions[j * nu + l] = x0[l] + tj * (y[l] - x0[l]) / t + (t - tj) * z[l];
            drift[j * nu + l] = (y[l] - x0[l]) / t - z[l];
        }
        if j + 1 < k {
            let r0 = t - tj;
            let r1 = t - grid.node(j + 1);
            // Var(Z_{t_{j+1}} − Z_{t_j}) = ∫ (T−s)^{-2} ds = Δ_j / ((T−t_j)(T−t_{j+1}))
            let sd = libm::sqrt(grid.step(j) / (r0 * r1));
            for l in 0..nu {
                z[l] += sd * normals[j * nu + l];
            }
        }
    }
    positions[k * nu..].copy_from_slice(y);
    let mut increments = vec![0.0; k * nu];
    for j in 0..k {
        let dt = grid.step(j);
        for l in 0..nu {
            increments[j * nu + l] =
                positions[(j + 1) * nu + l] - positions[j * nu + l] - drift[j * nu + l] * dt;
        }
    }
    Ok(DriverPath {
        grid: grid.clone(),
        nu,
        positions,
        increments,
        drift,
        kind: PathKind::Bridge { x0: x0.to_vec(), y: y.to_vec() },
        seed_tag: None,
    })
}

pub fn sample_bm(x0: &[f64], grid: &TimeGrid, rng: &mut PathRng) -> DriverPath {
    let mut z = vec![0.0; grid.steps() * x0.len()];
    rng.fill_normal(&mut z);
    bm_from_normals(x0, grid, &z).expect("consistent lengths")
}

pub fn sample_bridge(x0: &[f64], y: &[f64], grid: &TimeGrid, rng: &mut PathRng) -> Result<DriverPath> {
    let mut z = vec![0.0; grid.steps() * x0.len()];
    rng.fill_normal(&mut z);
    bridge_from_normals(x0, y, grid, &z)
}

/// Brownian motion for path `index` of the stream with `master_seed`.
pub fn sample_bm_tagged(x0: &[f64], grid: &TimeGrid, master_seed: u64, index: u64) -> DriverPath {
    let mut rng = PathRng::new(master_seed, index);
    let mut p = sample_bm(x0, grid, &mut rng);
    p.seed_tag = Some(SeedTag { master_seed, path_index: index });
    p
}

pub fn sample_bridge_tagged(x0: &[f64], y: &[f64], grid: &TimeGrid, master_seed: u64, index: u64) -> Result<DriverPath> {
    let mut rng = PathRng::new(master_seed, index);
    let mut p = sample_bridge(x0, y, grid, &mut rng)?;
    p.seed_tag = Some(SeedTag { master_seed, path_index: index });
    Ok(p)
}

pub fn reverse_path(path: &DriverPath) -> DriverPath {
    path.reversed()
}

/// `(2p−2+ν)!! / (2(p−ℓ)−2+ν)!!`, a product of ℓ factors.
fn double_factorial_ratio(p: u32, l: u32, nu: u32) -> f64 {
    let mut r = 1.0;
    for i in (p - l + 1)..=p {
        r *= (2 * i + nu) as f64 - 2.0;
    }
    r
}

fn binom_f(n: u32, k: u32) -> f64 {
    let mut r = 1.0;
    for i in 0..k {
        r = r * (n - i) as f64 / (i + 1) as f64;
    }
    r
}

/// Exact `E|Y_t|^{2p}` for the drift of a bridge over `[0,T]` in dimension ν,
/// with `dist_moment(j) = E|x0 − y|^{2j}`.
pub fn bridge_drift_moment_with(
    p: u32,
    t: f64,
    horizon: f64,
    nu: u32,
    dist_moment: impl Fn(u32) -> f64,
) -> Result<f64> {
    if !(t >= 0.0 && t < horizon) {
        return Err(invalid("bridge drift moment needs 0 ≤ t < T"));
    }
    if p == 0 || nu == 0 {
        return Err(invalid("bridge drift moment needs p ≥ 1 and ν ≥ 1"));
    }
    let mut sum = 0.0;
    for l in 0..=p {
        let j = p - l;
        sum += double_factorial_ratio(p, l, nu)
            * binom_f(p, l)
            * dist_moment(j)
            * libm::pow(horizon, -2.0 * j as f64)
            * libm::pow(t / (horizon * (horizon - t)), l as f64);
    }
    Ok(sum)
}

/// Exact `E|Y_t|^{2p}` for deterministic endpoints at distance `dist`.
pub fn bridge_drift_moment(p: u32, t: f64, horizon: f64, dist: f64, nu: u32) -> Result<f64> {
    bridge_drift_moment_with(p, t, horizon, nu, |j| libm::pow(dist, 2.0 * j as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_moment_examples() {
        assert!((bridge_drift_moment(1, 0.5, 1.0, 1.0, 1).unwrap() - 2.0).abs() < 1e-14);
        assert!((bridge_drift_moment(2, 0.5, 1.0, 1.0, 1).unwrap() - 10.0).abs() < 1e-13);
        let v = bridge_drift_moment(3, 0.0, 2.0, 1.5, 3).unwrap();
        assert!((v - libm::pow(1.5 / 2.0, 6.0)).abs() < 1e-14);
        let p1 = bridge_drift_moment(1, 0.3, 1.7, 0.8, 3).unwrap();
        assert!((p1 - (0.64 / (1.7 * 1.7) + 3.0 * 0.3 / (1.7 * 1.4))).abs() < 1e-14);
        assert!(bridge_drift_moment(1, 1.0, 1.0, 0.0, 1).is_err());
    }

    #[test]
    fn frozen_bridge_is_constant() {
        let g = TimeGrid::uniform(1.0, 8).unwrap();
        let p = bridge_from_normals(&[0.4], &[0.4], &g, &[0.0; 8]).unwrap();
        for j in 0..=8 {
            assert_eq!(p.position(j), &[0.4]);
        }
    }

    #[test]
    fn bridge_invariants() {
        let g = TimeGrid::uniform(1.5, 32).unwrap();
        let mut r = PathRng::new(3, 9);
        let p = sample_bridge(&[0.0, 1.0], &[2.0, -1.0], &g, &mut r).unwrap();
        assert_eq!(p.end(), &[2.0, -1.0]);
        assert!(p.sde_residual() < 1e-12);
        for j in 0..32 {
            // drift equals the ratio form (y − X)/(T − t)
            for l in 0..2 {
                let y = [2.0, -1.0][l];
                let ratio = (y - p.position(j)[l]) / (1.5 - g.node(j));
                assert!((ratio - p.drift(j)[l]).abs() < 1e-9 * (1.0 + ratio.abs()));
            }
        }
    }

    #[test]
    fn reversal_is_an_involution() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let p = sample_bridge_tagged(&[0.0], &[1.0], &g, 5, 2).unwrap();
        let r = p.reversed();
        assert_eq!(r.start(), &[1.0]);
        assert_eq!(r.end(), &[0.0]);
        assert!(r.sde_residual() < 1e-12);
        let rr = r.reversed();
        for j in 0..=16 {
            assert_eq!(rr.position(j), p.position(j));
        }
        let b = sample_bm_tagged(&[0.3], &g, 5, 2);
        let bb = b.reversed().reversed();
        assert_eq!(bb.kind(), b.kind());
        for j in 0..=16 {
            assert_eq!(bb.position(j), b.position(j));
        }
    }

    #[test]
    fn coarsening_keeps_shared_nodes() {
        let g = TimeGrid::uniform(1.0, 16).unwrap();
        let p = sample_bm_tagged(&[0.0], &g, 1, 1);
        let c = p.coarsened(4).unwrap();
        assert_eq!(c.steps(), 4);
        assert_eq!(c.position(2), p.position(8));
        assert!(c.sde_residual() < 1e-15);
    }
}
