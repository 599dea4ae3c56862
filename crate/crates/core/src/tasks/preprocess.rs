use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::data::PairedSamples;
use crate::nn::Tensor;

/// Per-coordinate affine map fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn moments(t: &Tensor, offset: usize) -> Result<(Vec<f64>, Vec<f64>), TaskError> {
    let (n, d) = (t.rows(), t.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        mean.iter_mut().zip(t.row(i)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for (j, v) in t.row(i).iter().enumerate() {
            var[j] += (v - mean[j]).powi(2);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    if let Some(j) = std.iter().position(|s| !(*s > 1e-300) || !s.is_finite()) {
        return Err(TaskError::ZeroVariance(offset + j));
    }
    Ok((mean, std))
}

fn affine(t: &Tensor, mean: &[f64], std: &[f64]) -> Result<Tensor, TaskError> {
    if t.cols() != mean.len() {
        return Err(TaskError::Invalid(format!(
            "standardizer fitted on {} columns, got {}",
            mean.len(),
            t.cols()
        )));
    }
    let mut out = t.clone();
    for i in 0..out.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mean[j]) / std[j];
        }
    }
    Ok(out)
}

impl Standardizer {
    /// Mean and population standard deviation of every coordinate.
    pub fn fit(samples: &PairedSamples) -> Result<Self, TaskError> {
        if samples.len() < 2 {
            return Err(TaskError::TooFewSamples(samples.len()));
        }
        let (x_mean, x_std) = moments(&samples.x, 0)?;
        let (y_mean, y_std) = moments(&samples.y, samples.x_dim())?;
        Ok(Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        })
    }

    pub fn apply(&self, samples: &PairedSamples) -> Result<PairedSamples, TaskError> {
        Ok(PairedSamples::new(
            affine(&samples.x, &self.x_mean, &self.x_std)?,
            affine(&samples.y, &self.y_mean, &self.y_std)?,
        )?)
    }

    /// Fits on `samples` and returns them standardized.
    pub fn fit_apply(samples: &PairedSamples) -> Result<(PairedSamples, Self), TaskError> {
        let s = Self::fit(samples)?;
        Ok((s.apply(samples)?, s))
    }
}
