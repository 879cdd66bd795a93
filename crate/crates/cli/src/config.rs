//! Experiment configuration files.
//!
//! TOML with four sections. Every key in `[sampler]` except `dt`, `gamma`
//! and one of `n_iter`/`horizon` has a default.
//!
//! ```toml
//! [model]
//! dim = 2
//! particles = 100
//! beta = "n_squared"          # or a positive number
//! confinement = "quadratic"   # quartic | weak | { radial_power = { a = 1.0, q = 2.0 } }
//! interaction = "coulomb"     # or "log1d"
//!
//! [[constraints]]             # omit, or use kind = "none", for an unconstrained gas
//! kind = "affine"             # cosine | log_abs | radial_gap | axis_gap
//! v = [1.0, 0.0]
//! c = 1.0
//!
//! [sampler]
//! dt = 0.5
//! gamma = 1.0
//! n_iter = 100000             # or horizon = 50000.0, giving ceil(horizon / dt) steps
//! newton_tol = 1e-12
//! newton_max_iter = 20
//! reversibility_tol = 1e-12
//! strict_reversibility = false
//! seed = 1
//! burn_in_fraction = 0.1
//! snapshot_stride = 100
//!
//! [output]
//! dir = "out/ginibre_shift"
//! files = ["positions", "scalars", "stats"]
//! ```

use coulomb_gas::constraints::{ConstraintSet, ConstraintSpec, LinearPhi, PairPhi};
use coulomb_gas::model::{ConfinementSpec, GasModel, InteractionSpec};
use coulomb_gas::rattle::NewtonParams;
use coulomb_gas::sampler::{ObserverSchedule, SamplerParams};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub constraints: Vec<ConstraintConfig>,
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dim: usize,
    pub particles: usize,
    #[serde(default)]
    pub beta: BetaConfig,
    pub confinement: ConfinementConfig,
    pub interaction: InteractionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BetaConfig {
    Mode(String),
    Value(f64),
}

impl Default for BetaConfig {
    fn default() -> Self {
        BetaConfig::Mode("n_squared".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfinementConfig {
    Quadratic,
    Quartic,
    Weak,
    RadialPower { a: f64, q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionConfig {
    Coulomb,
    Log1d,
}

fn default_cosine_k() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintConfig {
    None,
    Affine {
        v: Vec<f64>,
        c: f64,
    },
    Cosine {
        c: f64,
        #[serde(default = "default_cosine_k")]
        k: f64,
    },
    LogAbs {
        c: f64,
    },
    RadialGap {
        c: f64,
    },
    AxisGap {
        c: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub dt: f64,
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "default_tol")]
    pub reversibility_tol: f64,
    #[serde(default)]
    pub strict_reversibility: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_stride")]
    pub snapshot_stride: usize,
}

fn default_tol() -> f64 {
    1e-12
}

fn default_max_iter() -> usize {
    20
}

fn default_burn_in() -> f64 {
    0.1
}

fn default_stride() -> usize {
    100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFile {
    Positions,
    Scalars,
    Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "all_files")]
    pub files: Vec<OutputFile>,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn all_files() -> Vec<OutputFile> {
    vec![OutputFile::Positions, OutputFile::Scalars, OutputFile::Stats]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), files: all_files() }
    }
}

impl OutputConfig {
    pub fn wants(&self, file: OutputFile) -> bool {
        self.files.contains(&file)
    }
}

/// A validated configuration turned into library objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: GasModel,
    pub constraints: ConstraintSet,
    pub params: SamplerParams,
    pub schedule: ObserverSchedule,
    pub output: OutputConfig,
    /// Set when the step count comes from a time horizon, so that a dt
    /// scan can keep the simulated time fixed.
    pub horizon: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn build(&self) -> Result<Experiment, ConfigError> {
        let model = self.model.build()?;
        let constraints = build_constraints(&self.constraints, model.dim())?;
        let s = &self.sampler;
        let n_iter = match (s.n_iter, s.horizon) {
            (Some(_), Some(_)) => return Err(invalid("sampler", "give either n_iter or horizon, not both")),
            (None, None) => return Err(invalid("sampler", "one of n_iter or horizon is required")),
            (Some(n), None) => n,
            (None, Some(t)) => {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(invalid("sampler.horizon", format!("must be positive and finite, got {t}")));
                }
                check_dt(s.dt)?;
                SamplerParams::steps_for_horizon(t, s.dt)
            }
        };
        if !(0.0..1.0).contains(&s.burn_in_fraction) {
            return Err(invalid(
                "sampler.burn_in_fraction",
                format!("must lie in [0, 1), got {}", s.burn_in_fraction),
            ));
        }
        if s.snapshot_stride == 0 {
            return Err(invalid("sampler.snapshot_stride", "must be at least 1"));
        }
        let params = SamplerParams {
            newton: NewtonParams { tol: s.newton_tol, max_iter: s.newton_max_iter },
            epsilon_rev: s.reversibility_tol,
            strict_reversibility: s.strict_reversibility,
            ..SamplerParams::new(s.dt, s.gamma, n_iter, s.seed)
        };
        params.validate().map_err(|e| invalid("sampler", e))?;

        let (direction, center) = moment_frame(&constraints, model.dim());
        let burn_in = (s.burn_in_fraction * n_iter as f64).floor() as usize;
        let schedule = ObserverSchedule::default_for(n_iter, model.dim())
            .with_burn_in(burn_in)
            .with_stride(s.snapshot_stride)
            .with_direction(direction)
            .with_center(center);
        if self.output.files.is_empty() {
            return Err(invalid("output.files", "at least one output file is required"));
        }
        Ok(Experiment {
            model,
            constraints,
            params,
            schedule,
            output: self.output.clone(),
            horizon: s.horizon,
        })
    }
}

fn check_dt(dt: f64) -> Result<(), ConfigError> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(invalid("sampler.dt", format!("must be positive and finite, got {dt}")))
    }
}

impl ModelConfig {
    fn build(&self) -> Result<GasModel, ConfigError> {
        if self.dim == 0 {
            return Err(invalid("model.dim", "must be at least 1"));
        }
        if self.particles < 2 {
            return Err(invalid("model.particles", format!("need at least 2 particles, got {}", self.particles)));
        }
        let beta = match &self.beta {
            BetaConfig::Mode(m) if m == "n_squared" => (self.particles * self.particles) as f64,
            BetaConfig::Mode(m) => {
                return Err(invalid("model.beta", format!("expected \"n_squared\" or a number, got \"{m}\"")))
            }
            BetaConfig::Value(b) => *b,
        };
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(invalid("model.beta", format!("must be positive and finite, got {beta}")));
        }
        let confinement = match self.confinement {
            ConfinementConfig::Quadratic => ConfinementSpec::Quadratic,
            ConfinementConfig::Quartic => ConfinementSpec::Quartic,
            ConfinementConfig::Weak => ConfinementSpec::Weak,
            ConfinementConfig::RadialPower { a, q } => ConfinementSpec::RadialPower { a, q },
        };
        let interaction = match self.interaction {
            InteractionConfig::Coulomb => InteractionSpec::Coulomb,
            InteractionConfig::Log1d => InteractionSpec::Log1D,
        };
        GasModel::new(self.dim, self.particles, beta, confinement, interaction).map_err(|e| invalid("model", e))
    }
}

fn build_constraints(entries: &[ConstraintConfig], dim: usize) -> Result<ConstraintSet, ConfigError> {
    if entries.contains(&ConstraintConfig::None) {
        if entries.len() > 1 {
            return Err(invalid("constraints", "kind = \"none\" cannot be combined with other constraints"));
        }
        return Ok(ConstraintSet::unconstrained(dim));
    }
    if entries.is_empty() {
        return Ok(ConstraintSet::unconstrained(dim));
    }
    let specs = entries
        .iter()
        .map(|e| match e {
            ConstraintConfig::None => unreachable!(),
            ConstraintConfig::Affine { v, c } => ConstraintSpec::affine(v.clone(), *c),
            ConstraintConfig::Cosine { c, k } => ConstraintSpec::LinearStat(LinearPhi::Cosine { c: *c, k: *k }),
            ConstraintConfig::LogAbs { c } => ConstraintSpec::LinearStat(LinearPhi::LogAbs { c: *c }),
            ConstraintConfig::RadialGap { c } => ConstraintSpec::QuadStat(PairPhi::RadialGap { c: *c }),
            ConstraintConfig::AxisGap { c } => ConstraintSpec::QuadStat(PairPhi::AxisGap { c: *c }),
        })
        .collect();
    ConstraintSet::new(dim, specs).map_err(|e| invalid("constraints", e))
}

/// Direction and center for the recorded scalars: the first affine
/// constraint's `v` and its level point `c v`, else `e₁` and the origin.
fn moment_frame(cs: &ConstraintSet, dim: usize) -> (Vec<f64>, Vec<f64>) {
    for spec in cs.components() {
        if let ConstraintSpec::LinearStat(LinearPhi::Affine { v, c }) = spec {
            return (v.clone(), v.iter().map(|vi| c * vi).collect());
        }
    }
    let mut e1 = vec![0.0; dim];
    e1[0] = 1.0;
    (e1, vec![0.0; dim])
}
