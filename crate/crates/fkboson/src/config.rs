//! Run configuration: TOML on disk, validated in full before any compute.
//!
//! Every field has a default, so an empty file is a valid configuration (the
//! one-mode Nelson toy). `workers` and `output` only affect where and how a
//! run executes; they are left out of the config echo and its content hash.

use std::path::Path;

use fkboson_core::drivers::TimeGrid;
use fkboson_core::fock::{binomial, DEFAULT_DIM_CAP};
use fkboson_core::linalg::{CMatrix, C64};
use fkboson_core::modespace::{nelson_preset, nrqed_preset, pauli, CouplingFamily, ModeSpace, NrqedVariant, OneBosonVector};
use fkboson_core::potential::Potential;
use fkboson_core::spin_series::{MAX_SERIES_ORDER, MAX_SERIES_STEPS};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A validation failure tied to a dotted field path such as `grid.steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.to_string(), message: message.into() }
}

/// Complex numbers are written as `[re, im]` pairs.
pub type Complex = [f64; 2];

#[derive(Default, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub fock: FockConfig,
    pub grid: GridConfig,
    pub physics: PhysicsConfig,
    pub potential: PotentialConfig,
    pub mc: McConfig,
    pub series: SeriesConfig,
    pub estimator: EstimatorConfig,
    pub vectors: VectorConfig,
    pub kernel: KernelConfig,
    pub semigroup: SemigroupConfig,
    pub sweep: SweepConfig,
    pub moments: MomentConfig,
    pub reversal: ReversalConfig,
    pub vanhove: VanHoveConfig,
    /// Output directory; the `--out` flag and `FKBOSON_OUT` take precedence
    /// in that order.
    #[serde(skip_serializing)]
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// `nelson`, `general`, `free` or `nrqed`.
    pub preset: String,
    /// Optional CSV with columns mode_id, mu, omega, m_1..m_nu and coupling
    /// columns; replaces `omega`, `mu`, `momentum`, `g` and `f` when set.
    pub mode_file: Option<String>,
    pub omega: Vec<f64>,
    pub mu: Vec<f64>,
    /// Row-major `M × ν` boson momenta; empty means m ≡ 0.
    pub momentum: Vec<f64>,
    /// One list of M complex amplitudes per direction ℓ = 1..ν (`general`).
    pub g: Vec<Vec<Complex>>,
    /// One list of M complex amplitudes per spin matrix.
    pub f: Vec<Vec<Complex>>,
    /// Spin matrices: `identity`, `minus-one`, `pauli-x`, `pauli-y`, `pauli-z`.
    pub spin: Vec<String>,
    /// Couplings carry the plane-wave phase `e^{−i m·x}` (position dependent).
    pub translation_covariant: bool,
    pub nrqed: NrqedConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            preset: "nelson".into(),
            mode_file: None,
            omega: vec![1.0],
            mu: vec![1.0],
            momentum: vec![],
            g: vec![],
            f: vec![vec![[0.3, 0.0]]],
            spin: vec![],
            translation_covariant: false,
            nrqed: NrqedConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NrqedConfig {
    pub cutoff: f64,
    pub alpha: f64,
    /// Grid points; the grid must be closed under k → −k.
    pub k_points: Vec<[f64; 3]>,
    pub k_weights: Vec<f64>,
    /// `standard`, `kernel` or `fiber`.
    pub variant: String,
}

impl Default for NrqedConfig {
    fn default() -> Self {
        Self {
            cutoff: 2.0,
            alpha: 0.5,
            k_points: vec![[0.6, 0.3, 0.2], [-0.6, -0.3, -0.2]],
            k_weights: vec![1.0, 1.0],
            variant: "fiber".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockConfig {
    pub max_bosons: usize,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self { max_bosons: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub steps: usize,
    pub horizon: f64,
    /// Nodes accumulate toward the horizon (`t_j = T(1 − (1 − j/K)^power)`).
    pub refine: bool,
    pub refine_power: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { steps: 128, horizon: 0.5, refine: false, refine_power: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub nu: usize,
    pub xi: Vec<f64>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self { nu: 1, xi: vec![0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PotentialConfig {
    /// `none`, `constant`, `polynomial` or `tabulated`.
    pub kind: String,
    pub value: f64,
    /// `V(x) = Σ c_k |x|^k`.
    pub coefficients: Vec<f64>,
    pub radius: Vec<f64>,
    pub values: Vec<f64>,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self { kind: "none".into(), value: 0.0, coefficients: vec![], radius: vec![], values: vec![] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub n_paths: u64,
    pub seed: u64,
    #[serde(skip_serializing)]
    pub workers: usize,
    pub antithetic: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_paths: 20_000, seed: 20_240_611, workers: 1, antithetic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeriesConfig {
    pub n_max: usize,
    /// Path grids for series runs (each ≤ 64 steps).
    pub steps: Vec<usize>,
    pub n_paths: u64,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { n_max: 6, steps: vec![16, 32, 64], n_paths: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    /// `sde` (on the truncated space) or `closed-form`.
    pub mode: String,
    /// `splitting` or `euler-maruyama`.
    pub scheme: String,
    /// `ito` or `midpoint`, used by closed-form and reversal runs.
    pub flavor: String,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { mode: "sde".into(), scheme: "splitting".into(), flavor: "midpoint".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VectorConfig {
    /// Coherent-state labels; one complex amplitude per mode.
    pub g: Vec<Complex>,
    pub h: Vec<Complex>,
}

impl Default for VectorConfig {
    fn default() -> Self {
        Self { g: vec![[0.4, 0.0]], h: vec![[0.3, 0.0]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Grids for the symmetry refinement study.
    pub steps: Vec<usize>,
    /// Paired bridges per grid in the symmetry study.
    pub n_paths: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { x: vec![0.3], y: vec![-0.2], steps: vec![32, 64, 128], n_paths: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SemigroupConfig {
    pub s: f64,
    pub t: f64,
    pub n_paths: u64,
}

impl Default for SemigroupConfig {
    fn default() -> Self {
        Self { s: 0.25, t: 0.25, n_paths: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub steps: Vec<usize>,
    pub truncations: Vec<usize>,
    pub paths: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { steps: vec![32, 64, 128], truncations: vec![4, 6, 8], paths: vec![1000, 2000, 4000] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentConfig {
    pub powers: Vec<u32>,
    pub nus: Vec<usize>,
    pub t_fracs: Vec<f64>,
    pub horizon: f64,
    /// Distance |y − x0| between the bridge endpoints.
    pub distance: f64,
    pub n_paths: u64,
    pub steps: usize,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self {
            powers: vec![1, 2],
            nus: vec![1, 3],
            t_fracs: vec![0.25, 0.5, 0.9],
            horizon: 1.0,
            distance: 1.0,
            n_paths: 100_000,
            steps: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReversalConfig {
    pub n_paths: u64,
    pub steps: Vec<usize>,
}

impl Default for ReversalConfig {
    fn default() -> Self {
        Self { n_paths: 200, steps: vec![32, 64, 128] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VanHoveConfig {
    pub omega: Vec<f64>,
    pub mu: Vec<f64>,
    pub f: Vec<Complex>,
    pub max_bosons: usize,
}

impl Default for VanHoveConfig {
    fn default() -> Self {
        Self { omega: vec![2.0], mu: vec![1.0], f: vec![[1.0, 0.0]], max_bosons: 14 }
    }
}

/// Model data resolved from the configuration.
#[derive(Debug, Clone)]
pub struct Model {
    pub coupling: CouplingFamily,
    pub potential: Potential,
}

fn to_c(z: &Complex) -> C64 {
    C64::new(z[0], z[1])
}

fn to_vec(field: &str, list: &[Complex], m: usize) -> Result<OneBosonVector, ConfigError> {
    if list.len() != m {
        return Err(err(field, format!("expected {m} complex entries, found {}", list.len())));
    }
    Ok(OneBosonVector::from_iterator(m, list.iter().map(to_c)))
}

fn spin_matrix(field: &str, name: &str) -> Result<CMatrix, ConfigError> {
    let p = pauli();
    Ok(match name {
        "identity" => CMatrix::identity(1, 1),
        "minus-one" => CMatrix::from_element(1, 1, C64::new(-1.0, 0.0)),
        "pauli-x" => p[0].clone(),
        "pauli-y" => p[1].clone(),
        "pauli-z" => p[2].clone(),
        other => return Err(err(field, format!("unknown spin matrix `{other}`"))),
    })
}

/// Conjugation partner of each mode: the unique mode with opposite momentum
/// and equal ω, µ; zero-momentum modes are their own partners.
pub fn infer_conjugation(mu: &[f64], omega: &[f64], momentum: &[f64], nu: usize) -> Result<Vec<usize>, ConfigError> {
    let m = mu.len();
    let mut perm = vec![usize::MAX; m];
    for k in 0..m {
        let mk = &momentum[k * nu..(k + 1) * nu];
        if mk.iter().all(|&v| v == 0.0) {
            perm[k] = k;
            continue;
        }
        let hits: Vec<usize> = (0..m)
            .filter(|&j| {
                let mj = &momentum[j * nu..(j + 1) * nu];
                mj.iter().zip(mk).all(|(a, b)| *a == -*b) && omega[j] == omega[k] && mu[j] == mu[k]
            })
            .collect();
        match hits.as_slice() {
            [j] => perm[k] = *j,
            [] => return Err(err("model.momentum", format!("mode {k} has no partner with opposite momentum"))),
            _ => return Err(err("model.momentum", format!("mode {k} has several partners with opposite momentum"))),
        }
    }
    Ok(perm)
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("byte {}..{}", s.start, s.end)).unwrap_or_else(|| "<root>".into());
            err(&field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Canonical JSON echo (keys sorted at every level).
    pub fn echo(&self) -> serde_json::Value {
        // serde_json's default map is ordered by key
        serde_json::to_value(self).expect("config serializes")
    }

    /// SHA-256 of the canonical echo, hex encoded.
    pub fn content_hash(&self) -> String {
        let text = serde_json::to_string(&self.echo()).expect("json");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn grid(&self) -> Result<TimeGrid, ConfigError> {
        self.grid_with(self.grid.horizon, self.grid.steps)
    }

    pub fn grid_with(&self, horizon: f64, steps: usize) -> Result<TimeGrid, ConfigError> {
        let g = if self.grid.refine {
            TimeGrid::refined_toward_end(horizon, steps, self.grid.refine_power)
        } else {
            TimeGrid::uniform(horizon, steps)
        };
        g.map_err(|e| err("grid", e.to_string()))
    }

    pub fn potential(&self) -> Result<Potential, ConfigError> {
        let p = &self.potential;
        Ok(match p.kind.as_str() {
            "none" => Potential::Zero,
            "constant" => Potential::Constant(p.value),
            "polynomial" => {
                if p.coefficients.is_empty() {
                    return Err(err("potential.coefficients", "polynomial potential needs coefficients"));
                }
                Potential::Polynomial(p.coefficients.clone())
            }
            "tabulated" => Potential::tabulated(p.radius.clone(), p.values.clone()).map_err(|e| err("potential.radius", e.to_string()))?,
            other => return Err(err("potential.kind", format!("unknown kind `{other}`"))),
        })
    }

    /// Builds the coupling family and potential.
    pub fn model(&self) -> Result<Model, ConfigError> {
        let mc = &self.model;
        let nu = self.physics.nu;
        let coupling = match mc.preset.as_str() {
            "nrqed" => {
                let n = &mc.nrqed;
                if nu != 3 {
                    return Err(err("physics.nu", "the NRQED preset lives in ν = 3"));
                }
                if n.k_points.len() != n.k_weights.len() {
                    return Err(err("model.nrqed.k_weights", "one weight per grid point is required"));
                }
                let variant = match n.variant.as_str() {
                    "standard" => NrqedVariant::Standard,
                    "kernel" => NrqedVariant::Kernel,
                    "fiber" => NrqedVariant::Fiber,
                    other => return Err(err("model.nrqed.variant", format!("unknown variant `{other}`"))),
                };
                let grid: Vec<([f64; 3], f64)> = n.k_points.iter().cloned().zip(n.k_weights.iter().cloned()).collect();
                nrqed_preset(n.cutoff, &grid, n.alpha, variant).map_err(|e| err("model.nrqed", e.to_string()))?.1
            }
            "nelson" | "general" | "free" => self.tabulated_model(nu)?,
            other => return Err(err("model.preset", format!("unknown preset `{other}`"))),
        };
        Ok(Model { coupling, potential: self.potential()? })
    }

    fn tabulated_model(&self, nu: usize) -> Result<CouplingFamily, ConfigError> {
        let mc = &self.model;
        let table = match &mc.mode_file {
            Some(path) => crate::io::read_mode_csv(Path::new(path), nu).map_err(|e| err("model.mode_file", e.to_string()))?,
            None => crate::io::ModeTable {
                mu: mc.mu.clone(),
                omega: mc.omega.clone(),
                momentum: mc.momentum.clone(),
                g: mc.g.clone(),
                f: mc.f.clone(),
            },
        };
        let m = table.omega.len();
        if table.mu.len() != m {
            return Err(err("model.mu", format!("expected {m} weights, found {}", table.mu.len())));
        }
        let momentum = if table.momentum.is_empty() { vec![0.0; m * nu] } else { table.momentum.clone() };
        if momentum.len() != m * nu {
            return Err(err("model.momentum", format!("expected {} entries (M × ν), found {}", m * nu, momentum.len())));
        }
        let perm = infer_conjugation(&table.mu, &table.omega, &momentum, nu)?;
        let modes = ModeSpace::new(table.mu.clone(), table.omega.clone(), momentum.clone(), nu, perm, vec![C64::new(1.0, 0.0); m])
            .map_err(|e| err("model", e.to_string()))?;
        let wave = if mc.translation_covariant { momentum.clone() } else { vec![0.0; m * nu] };
        match mc.preset.as_str() {
            "free" => {
                let z = OneBosonVector::zeros(m);
                CouplingFamily::new(&modes, wave, vec![z.clone(); nu], vec![z], vec![CMatrix::identity(1, 1)])
                    .map_err(|e| err("model", e.to_string()))
            }
            "nelson" => {
                if table.f.len() != 1 {
                    return Err(err("model.f", "the Nelson preset takes exactly one form factor"));
                }
                let f = to_vec("model.f[0]", &table.f[0], m)?;
                nelson_preset(&modes, f, mc.translation_covariant).map(|p| p.1).map_err(|e| err("model.f", e.to_string()))
            }
            _ => {
                if table.g.len() != nu {
                    return Err(err("model.g", format!("expected ν = {nu} coupling lists, found {}", table.g.len())));
                }
                if table.f.len() != mc.spin.len() || mc.spin.is_empty() {
                    return Err(err("model.spin", "one spin matrix per F list is required"));
                }
                let g = table.g.iter().enumerate().map(|(l, v)| to_vec(&format!("model.g[{l}]"), v, m)).collect::<Result<Vec<_>, _>>()?;
                let f = table.f.iter().enumerate().map(|(j, v)| to_vec(&format!("model.f[{j}]"), v, m)).collect::<Result<Vec<_>, _>>()?;
                let s = mc.spin.iter().enumerate().map(|(j, n)| spin_matrix(&format!("model.spin[{j}]"), n)).collect::<Result<Vec<_>, _>>()?;
                CouplingFamily::new(&modes, wave, g, f, s).map_err(|e| err("model", e.to_string()))
            }
        }
    }

    pub fn vectors(&self, m: usize) -> Result<(OneBosonVector, OneBosonVector), ConfigError> {
        Ok((to_vec("vectors.g", &self.vectors.g, m)?, to_vec("vectors.h", &self.vectors.h, m)?))
    }

    /// Full validation for `command`; collects the first failure per check.
    pub fn validate(&self, command: &str) -> Result<(), ConfigError> {
        let nu = self.physics.nu;
        if nu == 0 {
            return Err(err("physics.nu", "must be positive"));
        }
        if self.physics.xi.len() != nu {
            return Err(err("physics.xi", format!("expected {nu} entries")));
        }
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return Err(err("grid.horizon", "must be positive"));
        }
        if self.grid.steps == 0 {
            return Err(err("grid.steps", "must be positive"));
        }
        if self.grid.refine && !(self.grid.refine_power >= 1.0) {
            return Err(err("grid.refine_power", "must be at least 1"));
        }
        if self.mc.n_paths < 2 {
            return Err(err("mc.n_paths", "at least two paths are needed"));
        }
        if !matches!(self.estimator.mode.as_str(), "sde" | "closed-form") {
            return Err(err("estimator.mode", "expected `sde` or `closed-form`"));
        }
        if !matches!(self.estimator.scheme.as_str(), "splitting" | "euler-maruyama") {
            return Err(err("estimator.scheme", "expected `splitting` or `euler-maruyama`"));
        }
        if !matches!(self.estimator.flavor.as_str(), "ito" | "midpoint") {
            return Err(err("estimator.flavor", "expected `ito` or `midpoint`"));
        }
        if self.series.n_max > MAX_SERIES_ORDER {
            return Err(err("series.n_max", format!("series runs are limited to order {MAX_SERIES_ORDER}")));
        }
        if let Some(k) = self.series.steps.iter().find(|&&k| k > MAX_SERIES_STEPS || k == 0) {
            return Err(err("series.steps", format!("{k} is outside 1..={MAX_SERIES_STEPS}")));
        }
        let vh = &self.vanhove;
        if vh.omega.len() != vh.f.len() || vh.omega.len() != vh.mu.len() || vh.omega.is_empty() {
            return Err(err("vanhove.f", "omega, mu and f need one entry per mode"));
        }
        if binomial(vh.omega.len() + vh.max_bosons, vh.max_bosons) > DEFAULT_DIM_CAP {
            return Err(err("vanhove.max_bosons", format!("truncated dimension exceeds {DEFAULT_DIM_CAP}")));
        }
        let mo = &self.moments;
        if mo.t_fracs.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
            return Err(err("moments.t_fracs", "fractions must lie in (0, 1)"));
        }
        if mo.nus.contains(&0) || mo.steps == 0 || mo.n_paths < 2 || !(mo.horizon > 0.0) {
            return Err(err("moments", "nus, steps, n_paths and horizon must be positive"));
        }
        if self.kernel.x.len() != nu || self.kernel.y.len() != nu {
            return Err(err("kernel.x", format!("kernel endpoints need {nu} coordinates")));
        }
        let sg = &self.semigroup;
        if !(sg.s > 0.0 && sg.t > 0.0) || sg.n_paths < 2 {
            return Err(err("semigroup", "s and t must be positive and n_paths at least 2"));
        }
        if self.kernel.n_paths == 0 {
            return Err(err("kernel.n_paths", "must be positive"));
        }
        if command == "vanhove" || command == "bridge-moments" {
            return Ok(());
        }
        let model = self.model()?;
        let m = model.coupling.modes().mode_count();
        let l = model.coupling.spin_dim();
        let dim = binomial(m + self.fock.max_bosons, self.fock.max_bosons) * l;
        if dim > DEFAULT_DIM_CAP {
            return Err(err("fock.max_bosons", format!("dimension binomial(M+N,N)·L = {dim} exceeds {DEFAULT_DIM_CAP}")));
        }
        for (i, &n) in self.sweep.truncations.iter().enumerate() {
            if binomial(m + n, n) * l > DEFAULT_DIM_CAP {
                return Err(err(&format!("sweep.truncations[{i}]"), format!("N = {n} exceeds the dimension cap")));
            }
        }
        self.vectors(m)?;
        if command == "series-vs-sde" && self.grid.steps > MAX_SERIES_STEPS && self.estimator.mode == "closed-form" {
            return Err(err("grid.steps", format!("series runs are limited to {MAX_SERIES_STEPS} steps")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_hash_is_order_independent() {
        let c = RunConfig::default();
        c.validate("fiber-mc").unwrap();
        let a = RunConfig::from_toml_str("[grid]\nsteps = 64\nhorizon = 0.5\n[mc]\nseed = 3\n").unwrap();
        let b = RunConfig::from_toml_str("[mc]\nseed = 3\n[grid]\nhorizon = 0.5\nsteps = 64\n").unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
    }

    #[test]
    fn workers_do_not_change_the_hash() {
        let mut c = RunConfig::default();
        let h = c.content_hash();
        c.mc.workers = 4;
        c.output = Some("elsewhere".into());
        assert_eq!(c.content_hash(), h);
    }

    #[test]
    fn errors_carry_field_paths() {
        let mut c = RunConfig::default();
        c.grid.steps = 0;
        assert_eq!(c.validate("fiber-mc").unwrap_err().field, "grid.steps");
        let mut c = RunConfig::default();
        c.fock.max_bosons = 5000;
        assert_eq!(c.validate("fiber-mc").unwrap_err().field, "fock.max_bosons");
        let mut c = RunConfig::default();
        c.series.n_max = 7;
        assert_eq!(c.validate("series-vs-sde").unwrap_err().field, "series.n_max");
        assert!(RunConfig::from_toml_str("[grid]\nstep = 3\n").is_err());
    }

    #[test]
    fn general_model_with_swapped_modes() {
        let text = r#"
[model]
preset = "general"
omega = [1.0, 1.0]
mu = [1.0, 1.0]
momentum = [0.5, -0.5]
g = [[[0.2, 0.0], [0.2, 0.0]]]
f = [[[0.3, 0.0], [0.3, 0.0]]]
spin = ["pauli-z"]
[vectors]
g = [[0.1, 0.0], [0.1, 0.0]]
h = [[0.2, 0.0], [0.0, 0.1]]
"#;
        let c = RunConfig::from_toml_str(text).unwrap();
        c.validate("fiber-mc").unwrap();
        let m = c.model().unwrap();
        assert_eq!(m.coupling.spin_dim(), 2);
        assert_eq!(m.coupling.modes().conj_perm(), &[1, 0]);
    }
}
