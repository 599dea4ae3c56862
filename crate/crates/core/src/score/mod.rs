//! Score networks, their denoising objective and training.

mod checkpoint;
mod models;
mod net;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use models::{CondScoreModel, JointScoreModel, LossBatch, Mask, ScoreModel};
pub use net::{time_embedding, Flavor, ScoreArch, ScoreNet};
pub use train::{train, weighted_noise_loss, TrainConfig, TrainError, TrainReport};

use thiserror::Error;

use crate::nn::NnError;
use crate::sde::SdeError;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("mask (0, 0) diffuses nothing")]
    InvalidMask,
    #[error("architecture flavor does not match the model type")]
    WrongFlavor,
    #[error("expected block dims {expected:?}, got {got:?}")]
    Dimension { expected: (usize, usize), got: (usize, usize) },
    #[error("time {0} outside [t_eps, T]")]
    Time(f64),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(
        "training diverged at iteration {iteration}: loss {loss}, t in [{t_min:.3e}, {t_max:.3e}], input norm {input_norm:.3e}"
    )]
    Diverged {
        iteration: u64,
        loss: f64,
        t_min: f64,
        t_max: f64,
        input_norm: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}
