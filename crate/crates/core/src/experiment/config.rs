use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::ENVELOPE_TOL;
use crate::lyapunov::{AlphaStrategy, INEQUALITY_REL_TOL};
use crate::models::{CollisionFrequencyModel, InitialDataSpec, InitialSource, SigmaVariant, ZGrid};
use crate::spectral::{ModeLattice, MIN_TRUNCATION};
use crate::{Error, Result};

/// Sample times, all nonnegative and sorted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeGrid {
    /// `0, dt, 2dt, …` up to and including `t_end` (within `1e-9·dt`).
    Uniform { t_end: f64, dt: f64 },
    Explicit { values: Vec<f64> },
}

impl TimeGrid {
    pub fn times(&self) -> Result<Vec<f64>> {
        match self {
            TimeGrid::Uniform { t_end, dt } => {
                if !(dt.is_finite() && *dt > 0.0 && t_end.is_finite() && *t_end >= 0.0) {
                    return Err(Error::Usage(format!("uniform time grid needs dt > 0 and t_end >= 0, got dt={dt}, t_end={t_end}")));
                }
                let steps = (t_end / dt + 1e-9).floor() as usize;
                Ok((0..=steps).map(|i| i as f64 * dt).collect())
            }
            TimeGrid::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::Usage("explicit time grid is empty".into()));
                }
                if values.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || values.windows(2).any(|w| !(w[1] >= w[0])) {
                    return Err(Error::Usage("explicit times must be finite, nonnegative and sorted".into()));
                }
                Ok(values.clone())
            }
        }
    }
}

/// `σ(z)` together with its parameter domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaModelSpec {
    pub variant: SigmaVariant,
    pub z_domain: (f64, f64),
}

impl SigmaModelSpec {
    pub fn build(&self) -> Result<CollisionFrequencyModel> {
        CollisionFrequencyModel::new(self.variant.clone(), self.z_domain)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative slack for envelope ratios.
    #[serde(default = "default_envelope_tol")]
    pub envelope: f64,
    /// Relative slack for matrix-inequality eigenvalues.
    #[serde(default = "default_inequality_tol")]
    pub inequality: f64,
}

fn default_envelope_tol() -> f64 {
    ENVELOPE_TOL
}
fn default_inequality_tol() -> f64 {
    INEQUALITY_REL_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { envelope: ENVELOPE_TOL, inequality: INEQUALITY_REL_TOL }
    }
}

/// One swept model parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// Sweep axes; an empty axis means "the configured value only".
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub lengths: Vec<f64>,
    #[serde(default)]
    pub parameter: Option<ParameterAxis>,
}

/// Debug-only knobs used to construct deliberate failures.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugSpec {
    /// Multiplies the certified `μ` before verification.
    #[serde(default = "unit")]
    pub mu_scale: f64,
}

impl Default for DebugSpec {
    fn default() -> Self {
        Self { mu_scale: 1.0 }
    }
}

fn unit() -> f64 {
    1.0
}
fn default_z_grid() -> ZGrid {
    ZGrid::Uniform { points: 1 }
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_sigma_points() -> usize {
    33
}
fn yes() -> bool {
    true
}

/// A complete run description, read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Spatial period `L`.
    pub length: f64,
    /// Largest stored Fourier mode `K`.
    pub k_max: usize,
    /// Hermite truncation `M`.
    pub truncation: usize,
    /// Highest `z`-derivative order `N`.
    #[serde(default)]
    pub derivative_levels: usize,
    pub time_grid: TimeGrid,
    pub sigma_model: SigmaModelSpec,
    pub initial_data: InitialDataSpec,
    #[serde(default = "default_z_grid")]
    pub z_grid: ZGrid,
    #[serde(default)]
    pub alpha_strategy: AlphaStrategy,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// σ samples per `k` in `verify`.
    #[serde(default = "default_sigma_points")]
    pub verify_sigma_points: usize,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub debug: DebugSpec,
    /// Rescale initial data so that the level-0 entropy is at most 1.
    #[serde(default = "yes")]
    pub scale_to_unit_entropy: bool,
}

/// Everything derived from a config that the commands need.
#[derive(Clone, Debug)]
pub struct Validated {
    pub config: RunConfig,
    pub lattice: ModeLattice,
    pub model: CollisionFrequencyModel,
    pub times: Vec<f64>,
    pub zs: Vec<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every precondition and reports all failures at once.
    pub fn validate(&self) -> Result<Validated> {
        let mut problems: Vec<Error> = Vec::new();
        let mut note = |r: Result<()>| {
            if let Err(e) = r {
                problems.push(e);
            }
        };
        note(check(self.length.is_finite() && self.length > 0.0, || format!("length must be positive, got {}", self.length)));
        note(check(self.k_max >= 1, || "k_max must be at least 1".into()));
        note(check(self.truncation >= MIN_TRUNCATION, || {
            format!("truncation must be at least {MIN_TRUNCATION}, got {}", self.truncation)
        }));
        note(check(self.verify_sigma_points >= 1, || "verify_sigma_points must be at least 1".into()));
        note(check(self.tolerances.envelope >= 0.0 && self.tolerances.inequality >= 0.0, || {
            "tolerances must be nonnegative".into()
        }));
        note(check(self.debug.mu_scale.is_finite() && self.debug.mu_scale > 0.0, || {
            "debug.mu_scale must be positive".into()
        }));
        note(check(!matches!(self.initial_data.source, InitialSource::Random { seed: None, .. }), || {
            "random initial data need a seed (set it in the config or pass --seed)".into()
        }));
        note(check(self.sweep.lengths.iter().all(|l| l.is_finite() && *l > 0.0), || {
            "sweep lengths must be positive".into()
        }));
        if let Some(axis) = &self.sweep.parameter {
            note(self.sigma_model.variant.with_param(&axis.name, 0.0).map(|_| ()));
            note(check(!axis.values.is_empty() && axis.values.iter().all(|v| v.is_finite()), || {
                format!("sweep parameter '{}' needs finite values", axis.name)
            }));
        }
        let times = self.time_grid.times().map_err(|e| problems.push(e)).ok();
        let model = self.sigma_model.build().map_err(|e| problems.push(e)).ok();
        let zs = model.as_ref().and_then(|m| self.z_grid.points(m).map_err(|e| problems.push(e)).ok());
        let lattice = ModeLattice::new(self.length, self.k_max, self.truncation).map_err(|e| problems.push(e)).ok();
        match (lattice, model, times, zs) {
            (Some(lattice), Some(model), Some(times), Some(zs)) if problems.is_empty() => {
                Ok(Validated { config: self.clone(), lattice, model, times, zs })
            }
            _ if problems.len() == 1 => Err(problems.remove(0)),
            _ => {
                let model_error = problems.iter().any(|p| matches!(p, Error::InvalidModel(_)));
                let list: Vec<String> = problems.iter().map(|p| p.to_string()).collect();
                let msg = format!("{} problems:\n  - {}", list.len(), list.join("\n  - "));
                Err(if model_error { Error::InvalidModel(msg) } else { Error::Usage(msg) })
            }
        }
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Usage(msg()))
    }
}
