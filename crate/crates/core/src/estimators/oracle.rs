use serde::{Deserialize, Serialize};

use super::EstimatorError;
use crate::nn::Tensor;
use crate::score::{CondScoreModel, JointScoreModel, Mask, ScoreModel};
use crate::sde::VpSchedule;

/// Whether a score comes from a closed form or a trained network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    Analytic,
    Learned,
}

/// Score of a single diffused measure on `R^dim`.
pub trait ScoreOracle {
    fn dim(&self) -> usize;
    fn kind(&self) -> OracleKind;
    fn schedule(&self) -> &VpSchedule;
    /// Row-wise scores of `xt` (`[n, dim]`) at per-row times `t`.
    fn score(&self, xt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError>;
}

/// Marginal score of `A` and conditional score of `A` given a clean `y`.
pub trait ConditionalOracle {
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;
    fn kind(&self) -> OracleKind;
    fn schedule(&self) -> &VpSchedule;
    fn marginal(&self, xt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError>;
    fn conditional(&self, xt: &Tensor, y0: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError>;
}

/// Joint score of `[A, B]` and both conditional scores.
pub trait JointOracle {
    fn x_dim(&self) -> usize;
    fn y_dim(&self) -> usize;
    fn kind(&self) -> OracleKind;
    fn schedule(&self) -> &VpSchedule;
    /// `[n, x_dim + y_dim]` score of the jointly diffused pair.
    fn joint(&self, xt: &Tensor, yt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError>;
    /// `[n, x_dim]` score of `x_t` given clean `y0`.
    fn cond_x(&self, xt: &Tensor, y0: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError>;
    /// `[n, y_dim]` score of `y_t` given clean `x0`.
    fn cond_y(&self, x0: &Tensor, yt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError>;
}

impl ConditionalOracle for CondScoreModel {
    fn x_dim(&self) -> usize {
        self.arch().x_dim
    }
    fn y_dim(&self) -> usize {
        self.arch().y_dim
    }
    fn kind(&self) -> OracleKind {
        OracleKind::Learned
    }
    fn schedule(&self) -> &VpSchedule {
        ScoreModel::schedule(self)
    }
    fn marginal(&self, xt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        Ok(self.predict_score(xt, None, t)?)
    }
    fn conditional(&self, xt: &Tensor, y0: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        Ok(self.predict_score(xt, Some(y0), t)?)
    }
}

impl JointOracle for JointScoreModel {
    fn x_dim(&self) -> usize {
        self.arch().x_dim
    }
    fn y_dim(&self) -> usize {
        self.arch().y_dim
    }
    fn kind(&self) -> OracleKind {
        OracleKind::Learned
    }
    fn schedule(&self) -> &VpSchedule {
        ScoreModel::schedule(self)
    }
    fn joint(&self, xt: &Tensor, yt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        Ok(self.predict_score(xt, yt, t, Mask::Both)?)
    }
    fn cond_x(&self, xt: &Tensor, y0: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        let s = self.predict_score(xt, y0, t, Mask::XOnly)?;
        Ok(s.slice_cols(0, self.arch().x_dim)?)
    }
    fn cond_y(&self, x0: &Tensor, yt: &Tensor, t: &[f64]) -> Result<Tensor, EstimatorError> {
        let s = self.predict_score(x0, yt, t, Mask::YOnly)?;
        let dx = self.arch().x_dim;
        Ok(s.slice_cols(dx, dx + self.arch().y_dim)?)
    }
}
