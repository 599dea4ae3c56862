//! Declarative run and sweep configurations.

use std::fmt;
use std::path::Path;

use scoremi::baselines::{BaselineVariant, CriticConfig};
use scoremi::estimators::{EstimatorVariant, McConfig};
use scoremi::score::TrainConfig;
use scoremi::sde::VpSchedule;
use scoremi::tasks::Transform;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// A MINDE variant or a baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Minde(EstimatorVariant),
    Baseline(BaselineVariant),
}

impl Method {
    pub fn id(&self) -> String {
        match self {
            Method::Minde(v) => match v {
                EstimatorVariant::Cond => "minde-c",
                EstimatorVariant::CondSigma => "minde-c-sigma",
                EstimatorVariant::Joint => "minde-j",
                EstimatorVariant::JointSigma => "minde-j-sigma",
            }
            .to_string(),
            Method::Baseline(b) => b.id(),
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        let v = match s {
            "minde-c" => Method::Minde(EstimatorVariant::Cond),
            "minde-c-sigma" => Method::Minde(EstimatorVariant::CondSigma),
            "minde-j" => Method::Minde(EstimatorVariant::Joint),
            "minde-j-sigma" => Method::Minde(EstimatorVariant::JointSigma),
            other => Method::Baseline(
                BaselineVariant::from_id(other).ok_or_else(|| CliError::Config(format!("unknown method {other:?}")))?,
            ),
        };
        Ok(v)
    }

    pub fn label(&self) -> String {
        match self {
            Method::Minde(v) => v.label().to_string(),
            Method::Baseline(b) => b.label().to_string(),
        }
    }

    pub fn needs_sigma(&self) -> bool {
        matches!(self, Method::Minde(v) if v.needs_sigma())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.id())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Method::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Network shape shared by both score-model flavors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub width: usize,
    pub blocks: usize,
    pub time_embed_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            width: 64,
            blocks: 3,
            time_embed_dim: 64,
        }
    }
}

/// Everything that determines the value of a single cell. Its hash keys the
/// record cache, so adding tasks, seeds or σ values reuses finished cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellSettings {
    pub n_train: usize,
    pub n_test: usize,
    pub train: TrainConfig,
    pub arch: ArchConfig,
    pub schedule: VpSchedule,
    pub mc: McConfig,
    pub critic: CriticConfig,
}

impl Default for CellSettings {
    fn default() -> Self {
        Self {
            n_train: 100_000,
            n_test: 10_000,
            train: TrainConfig::default(),
            arch: ArchConfig::default(),
            schedule: VpSchedule::default(),
            mc: McConfig::default(),
            critic: CriticConfig::default(),
        }
    }
}

impl CellSettings {
    /// First 16 hex digits of SHA-256 over the canonical JSON form.
    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_string(self).expect("settings serialize"))
    }
}

pub(crate) fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn default_methods() -> Vec<Method> {
    vec![
        Method::Minde(EstimatorVariant::Cond),
        Method::Minde(EstimatorVariant::CondSigma),
        Method::Minde(EstimatorVariant::Joint),
        Method::Minde(EstimatorVariant::JointSigma),
        Method::Baseline(BaselineVariant::Mine),
        Method::Baseline(BaselineVariant::InfoNce),
        Method::Baseline(BaselineVariant::Dv),
        Method::Baseline(BaselineVariant::Nwj),
    ]
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_sigmas() -> Vec<f64> {
    vec![1.0]
}

fn default_workers() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub tasks: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Reference standard deviations for the σ variants.
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default, flatten)]
    pub settings: CellSettings,
    /// Relative paths resolve against the output root.
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.tasks.is_empty() || self.methods.is_empty() || self.seeds.is_empty() {
            return bad("tasks, methods and seeds must be non-empty".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.methods.iter().any(Method::needs_sigma) && self.sigmas.is_empty() {
            return bad("σ variants need at least one sigma".into());
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return bad(format!("sigma {s} must be positive"));
        }
        if self.settings.n_train < 4 || self.settings.n_test < 2 {
            return bad("n_train must be ≥ 4 and n_test ≥ 2".into());
        }
        if self.workers == 0 {
            return bad("workers must be positive".into());
        }
        self.settings
            .train
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// Hash of the whole effective config, as reported in the summary.
    pub fn hash(&self) -> String {
        short_hash(&serde_json::to_string(self).expect("config serializes"))
    }
}

/// Which map, if any, the high-MI sweep applies to the sparse normal.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepTransform {
    #[default]
    None,
    HalfCube,
    Spiral,
}

impl SweepTransform {
    pub fn chain(self) -> Vec<Transform> {
        match self {
            SweepTransform::None => vec![],
            SweepTransform::HalfCube => vec![Transform::HalfCube],
            SweepTransform::Spiral => vec![Transform::Spiral],
        }
    }
}

fn default_targets() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn three() -> usize {
    3
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_targets")]
    pub targets: Vec<f64>,
    #[serde(default = "three")]
    pub x_dim: usize,
    #[serde(default = "three")]
    pub y_dim: usize,
    #[serde(default = "two")]
    pub pairs: usize,
    #[serde(default)]
    pub transform: SweepTransform,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_sigmas")]
    pub sigmas: Vec<f64>,
    #[serde(default, flatten)]
    pub settings: CellSettings,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl SweepConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
        let mut cfg: SweepConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }
}
