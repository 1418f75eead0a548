//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::plot::PlotScale;
use crate::error::{Error, Result};
use crate::precond::PrecondKind;
use crate::problems::{ImagePattern, RefMethod};
use crate::solvers::{Algorithm, Cadence, Ramp, RelaxMode, RelaxationSchedule, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Legend and file label; the algorithm name when absent.
    #[serde(default)]
    pub label: Option<String>,
    pub problem: ProblemConfig,
    pub solver: SolverSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub output: OutputSection,
    /// Directory relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ProblemConfig {
    TgvKl(TgvKlConfig),
    Classification(ClassificationConfig),
    TinyQp(TinyQpConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TgvKlConfig {
    /// Ground-truth image (PGM or PNG); a synthetic pattern when absent.
    #[serde(default)]
    pub image: Option<PathBuf>,
    #[serde(default = "d32")]
    pub d1: usize,
    #[serde(default = "d32")]
    pub d2: usize,
    #[serde(default = "shapes")]
    pub pattern: ImagePattern,
    #[serde(default = "blur5")]
    pub blur_length: usize,
    #[serde(default)]
    pub blur_angle: f64,
    #[serde(default = "alpha0")]
    pub alpha0: f64,
    #[serde(default = "alpha1")]
    pub alpha1: f64,
    #[serde(default)]
    pub noise_peak: Option<f64>,
    #[serde(default)]
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassificationConfig {
    /// LIBSVM file; synthetic data when absent.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default = "n50")]
    pub n: usize,
    #[serde(default = "d20")]
    pub d: usize,
    #[serde(default = "separability")]
    pub separability: f64,
    #[serde(default = "one")]
    pub seed: u64,
    #[serde(default = "lambda")]
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyQpConfig {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub algorithm: Algorithm,
    pub sigma: f64,
    pub tau: f64,
    #[serde(default = "richardson")]
    pub precond: PrecondKind,
    #[serde(default = "one_usize")]
    pub sweeps: usize,
    #[serde(default = "full")]
    pub relaxation: RelaxMode,
    #[serde(default = "unit")]
    pub rho: f64,
    #[serde(default)]
    pub rho_x: Option<f64>,
    #[serde(default)]
    pub rho_y: Option<f64>,
    /// Per-set sampling probabilities; uniform when absent.
    #[serde(default)]
    pub probs: Option<Vec<f64>>,
    #[serde(default)]
    pub sets: Option<Vec<Vec<usize>>>,
    #[serde(default = "seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "epochs")]
    pub epochs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "cadence")]
    pub cadence: Cadence,
    /// Evaluate the restricted gap.
    #[serde(default = "yes")]
    pub gap: bool,
    /// Half-width of the gap box; derived from the reference when absent.
    #[serde(default)]
    pub box_radius: Option<f64>,
    /// Divide Bregman distance and gap by the pixel count; on by default
    /// for deblurring only.
    #[serde(default)]
    pub normalize: Option<bool>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        MetricsSection { cadence: cadence(), gap: true, box_radius: None, normalize: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefChoice {
    Oracle,
    LongRun,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Oracle for classification and the tiny problem, long run otherwise.
    #[serde(default)]
    pub method: Option<RefChoice>,
    #[serde(default = "budget")]
    pub budget: usize,
    #[serde(default = "tol")]
    pub tol: f64,
    /// Long-run step sizes; the solver's when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub precond: Option<PrecondKind>,
    #[serde(default = "rho19")]
    pub rho: f64,
    #[serde(default = "yes")]
    pub cache: bool,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection { method: None, budget: budget(), tol: tol(), sigma: None, tau: None, precond: None, rho: rho19(), cache: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Relative to the output root.
    #[serde(default = "out_dir")]
    pub dir: PathBuf,
    #[serde(default = "yes")]
    pub plots: bool,
    #[serde(default = "yes")]
    pub images: bool,
    #[serde(default)]
    pub scale: PlotScale,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: out_dir(), plots: true, images: true, scale: PlotScale::default() }
    }
}

fn d32() -> usize {
    32
}
fn shapes() -> ImagePattern {
    ImagePattern::Shapes
}
fn blur5() -> usize {
    5
}
fn alpha0() -> f64 {
    1e-4
}
fn alpha1() -> f64 {
    5e-5
}
fn n50() -> usize {
    50
}
fn d20() -> usize {
    20
}
fn separability() -> f64 {
    0.8
}
fn one() -> u64 {
    1
}
fn one_usize() -> usize {
    1
}
fn lambda() -> f64 {
    1e-4
}
fn richardson() -> PrecondKind {
    PrecondKind::Richardson
}
fn full() -> RelaxMode {
    RelaxMode::Full
}
fn unit() -> f64 {
    1.0
}
fn seeds() -> Vec<u64> {
    vec![5]
}
fn epochs() -> usize {
    100
}
fn cadence() -> Cadence {
    Cadence::Log(30)
}
fn yes() -> bool {
    true
}
fn budget() -> usize {
    1_000_000
}
fn tol() -> f64 {
    1e-8
}
fn rho19() -> f64 {
    1.9
}
fn out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

impl ExperimentConfig {
    /// Display label: the configured one or the algorithm name.
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.solver.algorithm.name().to_string())
    }

    pub fn schedule(&self) -> Result<RelaxationSchedule> {
        let s = &self.solver;
        let sched = match s.relaxation {
            RelaxMode::None => RelaxationSchedule::none(),
            mode => RelaxationSchedule {
                mode,
                rho: Ramp::constant(if mode == RelaxMode::Partial { 1.0 } else { s.rho }),
                rho_x: Ramp::constant(s.rho_x.unwrap_or(s.rho)),
                rho_y: Ramp::constant(s.rho_y.unwrap_or(s.rho)),
            },
        };
        sched.validate().map_err(|e| cfg_err("solver.rho", e.to_string()))?;
        Ok(sched)
    }

    /// Solver settings for one seed.
    pub fn solver_config(&self, seed: u64) -> Result<SolverConfig> {
        let s = &self.solver;
        let mut c = SolverConfig::new(s.algorithm, s.sigma, s.tau);
        c.precond = s.precond;
        c.sweeps = s.sweeps;
        c.schedule = self.schedule()?;
        c.probs = s.probs.clone();
        c.sets = s.sets.clone();
        c.seed = seed;
        c.epochs = s.epochs;
        c.cadence = self.metrics.cadence;
        Ok(c)
    }

    pub fn ref_method(&self) -> Option<RefMethod> {
        let default = match self.problem {
            ProblemConfig::TgvKl(_) => RefChoice::LongRun,
            _ => RefChoice::Oracle,
        };
        match self.reference.method.unwrap_or(default) {
            RefChoice::Oracle => Some(RefMethod::Oracle),
            RefChoice::LongRun => Some(RefMethod::LongRun),
            RefChoice::None => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.solver;
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(s.sigma) {
            return Err(cfg_err("solver.sigma", "must be positive and finite"));
        }
        if !pos(s.tau) {
            return Err(cfg_err("solver.tau", "must be positive and finite"));
        }
        if s.sweeps == 0 {
            return Err(cfg_err("solver.sweeps", "must be at least 1"));
        }
        if s.seeds.is_empty() {
            return Err(cfg_err("solver.seeds", "needs at least one seed"));
        }
        self.schedule()?;
        if let Some(p) = &s.probs {
            if p.iter().any(|v| !(*v > 0.0 && *v <= 1.0)) {
                return Err(cfg_err("solver.probs", "probabilities must lie in (0, 1]"));
            }
        }
        match self.metrics.cadence {
            Cadence::Every(0) => return Err(cfg_err("metrics.cadence.value", "must be positive")),
            Cadence::Log(m) if m < 2 => return Err(cfg_err("metrics.cadence.value", "log cadence needs at least 2 points")),
            _ => {}
        }
        if let Some(r) = self.metrics.box_radius {
            if !pos(r) {
                return Err(cfg_err("metrics.box_radius", "must be positive"));
            }
        }
        let r = &self.reference;
        if !pos(r.tol) {
            return Err(cfg_err("reference.tol", "must be positive"));
        }
        if !(r.rho > 0.0 && r.rho < 2.0) {
            return Err(cfg_err("reference.rho", "must lie in (0, 2)"));
        }
        match &self.problem {
            ProblemConfig::TgvKl(t) => {
                if !(pos(t.alpha0) && pos(t.alpha1)) {
                    return Err(cfg_err("problem.alpha0", "alphas must be positive"));
                }
                if t.blur_length == 0 {
                    return Err(cfg_err("problem.blur_length", "must be at least 1"));
                }
                if t.image.is_none() && (t.d1 < 2 || t.d2 < 2) {
                    return Err(cfg_err("problem.d1", "images need at least 2x2 pixels"));
                }
            }
            ProblemConfig::Classification(c) => {
                if !(c.lambda >= 0.0 && c.lambda.is_finite()) {
                    return Err(cfg_err("problem.lambda", "must be finite and nonnegative"));
                }
                if c.data.is_none() && (c.n == 0 || c.d == 0) {
                    return Err(cfg_err("problem.n", "sizes must be positive"));
                }
                if !(0.0..=1.0).contains(&c.separability) {
                    return Err(cfg_err("problem.separability", "must lie in [0, 1]"));
                }
            }
            ProblemConfig::TinyQp(_) => {}
        }
        Ok(())
    }

    /// Resolves a data path against the configuration's directory.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// SHA-256 of the canonical JSON of the resolved configuration.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Hash of the problem section and reference settings, naming cached
    /// reference points.
    pub fn reference_key(&self) -> String {
        let v = serde_json::json!({
            "problem": self.problem,
            "method": self.ref_method(),
            "budget": self.reference.budget,
            "tol": self.reference.tol,
            "sigma": self.reference.sigma.unwrap_or(self.solver.sigma),
            "tau": self.reference.tau.unwrap_or(self.solver.tau),
            "precond": self.reference.precond.unwrap_or(self.solver.precond),
            "rho": self.reference.rho,
        });
        sha256_hex(&serde_json::to_vec(&v).expect("json serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates a configuration; errors name the offending field.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::new(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        cfg_err(path, inner.message().trim().to_string())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(path.display().to_string(), e.to_string()))?;
    let mut cfg = parse_config(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}
