use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{NnError, Tensor};

/// `n` paired draws `(x_i, y_i)` stored as two row-aligned matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSamples {
    pub x: Tensor,
    pub y: Tensor,
}

impl PairedSamples {
    pub fn new(x: Tensor, y: Tensor) -> Result<Self, NnError> {
        if x.rows() != y.rows() {
            return Err(NnError::ShapeMismatch {
                op: "paired_samples",
                left: x.shape().to_vec(),
                right: y.shape().to_vec(),
            });
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn y_dim(&self) -> usize {
        self.y.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Result<Self, NnError> {
        Ok(Self {
            x: self.x.select_rows(idx)?,
            y: self.y.select_rows(idx)?,
        })
    }

    /// Random split into `(rest, held_out)` with `round(n * fraction)` held out.
    pub fn split<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> Result<(Self, Self), NnError> {
        let n = self.len();
        let held = ((n as f64) * fraction).round() as usize;
        let held = held.clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let (val, train) = idx.split_at(held);
        Ok((self.select(train)?, self.select(val)?))
    }

    /// Swaps the roles of the two variables.
    pub fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
        }
    }
}
