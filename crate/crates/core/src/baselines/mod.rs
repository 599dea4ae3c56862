//! Discriminative neural MI bounds and the Kraskov k-nearest-neighbour estimator.

mod critic;
mod ksg;

pub use critic::{estimate, train_critic, Critic, CriticConfig, CriticReport};
pub use ksg::{ksg, normal_scores};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PairedSamples;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid baseline config: {0}")]
    Config(String),
    #[error("{variant} needs a trained critic")]
    MissingCritic { variant: BaselineVariant },
    #[error("{variant} is not a neural estimator")]
    NotNeural { variant: BaselineVariant },
    #[error("KSG with k = {k} needs more than {k} samples, got {n}")]
    TooFewSamples { k: usize, n: usize },
    #[error("critic diverged at step {step}")]
    Diverged { step: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BaselineVariant {
    /// Donsker-Varadhan bound with the denominator's gradient corrected by
    /// an EMA of the partition estimate.
    Mine,
    /// Donsker-Varadhan bound, plain gradient.
    Dv,
    Nwj,
    InfoNce,
    Ksg { k: usize },
}

impl BaselineVariant {
    pub const NEURAL: [BaselineVariant; 4] = [Self::Mine, Self::InfoNce, Self::Dv, Self::Nwj];

    pub fn is_neural(self) -> bool {
        !matches!(self, Self::Ksg { .. })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Mine => "MINE",
            Self::Dv => "D-V",
            Self::Nwj => "NWJ",
            Self::InfoNce => "InfoNCE",
            Self::Ksg { .. } => "KSG",
        }
    }

    /// Stable identifier; KSG carries its `k`.
    pub fn id(self) -> String {
        match self {
            Self::Mine => "mine".into(),
            Self::Dv => "dv".into(),
            Self::Nwj => "nwj".into(),
            Self::InfoNce => "infonce".into(),
            Self::Ksg { k } => format!("ksg{k}"),
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        match s {
            "mine" => Some(Self::Mine),
            "dv" => Some(Self::Dv),
            "nwj" => Some(Self::Nwj),
            "infonce" => Some(Self::InfoNce),
            _ => s.strip_prefix("ksg").and_then(|k| match k {
                "" => Some(Self::Ksg { k: 10 }),
                k => k.parse().ok().filter(|k| *k >= 1).map(|k| Self::Ksg { k }),
            }),
        }
    }
}

impl fmt::Display for BaselineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineEstimate {
    pub variant: BaselineVariant,
    /// Nats.
    pub mean: f64,
    pub std_error: f64,
    pub n_points: usize,
}

/// Trains when needed and evaluates on `test`.
pub fn run_baseline(
    variant: BaselineVariant,
    train: &PairedSamples,
    test: &PairedSamples,
    config: &CriticConfig,
) -> Result<BaselineEstimate, BaselineError> {
    match variant {
        BaselineVariant::Ksg { k } => ksg(test, k),
        _ => {
            let (critic, _) = train_critic(variant, train, config)?;
            estimate(variant, Some(&critic), test)
        }
    }
}
