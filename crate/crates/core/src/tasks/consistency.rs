//! Self-consistency constructions on tasks with known MI.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{TaskError, TaskSpec};
use crate::data::PairedSamples;
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencyKind {
    /// `y` re-paired by a random permutation: MI 0.
    Independence,
    /// Two independent copies stacked coordinate-wise: MI doubles.
    Additivity,
    /// `y` replaced by `[y, Qy]` for orthogonal `Q`: MI unchanged.
    DataProcessing,
}

/// A derived sampler and the MI it must have relative to its base.
#[derive(Clone, Debug)]
pub struct ConsistencyTask {
    pub kind: ConsistencyKind,
    pub base: TaskSpec,
    /// Row-major orthogonal `Q` over `y`, for data processing.
    pub q: Option<DMatrix<f64>>,
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix, sign fixed).
pub fn random_orthogonal<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

impl ConsistencyTask {
    pub fn new(kind: ConsistencyKind, base: TaskSpec) -> Result<Self, TaskError> {
        base.validate()?;
        let q = match kind {
            ConsistencyKind::DataProcessing => Some(DMatrix::identity(base.dims()?.1, base.dims()?.1)),
            _ => None,
        };
        Ok(Self { kind, base, q })
    }

    /// Data processing with an explicit `Q`, checked orthogonal to 1e−9.
    pub fn data_processing(base: TaskSpec, q: DMatrix<f64>) -> Result<Self, TaskError> {
        base.validate()?;
        let n = base.dims()?.1;
        if q.nrows() != n || q.ncols() != n {
            return Err(TaskError::Invalid(format!("Q must be {n}x{n}")));
        }
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(n, n)).abs().max();
        if err > 1e-9 {
            return Err(TaskError::Invalid(format!("Q is not orthogonal (error {err:.2e})")));
        }
        Ok(Self {
            kind: ConsistencyKind::DataProcessing,
            base,
            q: Some(q),
        })
    }

    pub fn base_mi(&self) -> Result<f64, TaskError> {
        Ok(self.base.ground_truth()?.mi)
    }

    /// MI the construction must have.
    pub fn expected_mi(&self) -> Result<f64, TaskError> {
        let mi = self.base_mi()?;
        Ok(match self.kind {
            ConsistencyKind::Independence => 0.0,
            ConsistencyKind::Additivity => 2.0 * mi,
            ConsistencyKind::DataProcessing => mi,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<PairedSamples, TaskError> {
        let a = self.base.sample(count, rng)?;
        Ok(match self.kind {
            ConsistencyKind::Independence => {
                let mut idx: Vec<usize> = (0..count).collect();
                idx.shuffle(rng);
                PairedSamples::new(a.x, a.y.select_rows(&idx)?)?
            }
            ConsistencyKind::Additivity => {
                let b = self.base.sample(count, rng)?;
                PairedSamples::new(Tensor::hcat(&[&a.x, &b.x])?, Tensor::hcat(&[&a.y, &b.y])?)?
            }
            ConsistencyKind::DataProcessing => {
                let q = self.q.as_ref().expect("data processing carries Q");
                let n = a.y_dim();
                let mut qy = Vec::with_capacity(count * n);
                for i in 0..count {
                    let row = a.y.row(i);
                    qy.extend((0..n).map(|r| (0..n).map(|c| q[(r, c)] * row[c]).sum::<f64>()));
                }
                let qy = Tensor::matrix(count, n, qy)?;
                PairedSamples::new(a.x, Tensor::hcat(&[&a.y, &qy])?)?
            }
        })
    }
}
