//! Synthetic benchmark tasks with known mutual information.

mod catalogue;
mod consistency;
mod cov;
mod io;
mod preprocess;
mod transforms;
mod truth;

pub use catalogue::{
    bivariate_rho_for, catalogue, dense_alpha_for, find_task, sparse_lambda_for, sparse_task, Catalogue, CatalogueEntry,
    CATALOGUE_VERSION,
};
pub use consistency::{random_orthogonal, ConsistencyKind, ConsistencyTask};
pub use cov::{bivariate_normal_mi, gaussian_mi, log_det, CovFamily};
pub use io::{load_catalogue, read_samples_csv, save_catalogue, write_samples_csv};
pub use preprocess::Standardizer;
pub use transforms::{half_cube, phi, spiral_row, swiss_roll, wiggly_x, wiggly_y, Transform};
pub use truth::{solve_increasing, student_correction, student_mi, uniform_additive_mi, SOLVE_TOL};

use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::PairedSamples;
use crate::nn::{NnError, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("invalid task: {0}")]
    Invalid(String),
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("{transform} does not apply to dims {dims:?}")]
    UnsupportedDim { transform: &'static str, dims: (usize, usize) },
    #[error("target MI {0} is unreachable for this family")]
    Unreachable(f64),
    #[error("coordinate {0} has zero variance")]
    ZeroVariance(usize),
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("unknown task id {0:?}")]
    UnknownTask(String),
    #[error("unsupported catalogue version {0}")]
    Version(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// The distribution before any transform is applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Base {
    Multinormal { x_dim: usize, y_dim: usize, cov: CovFamily },
    BivariateNormal { rho: f64 },
    /// `N(0, Ω) · sqrt(ν / U)` with `U ~ χ²_ν`, `Ω` from the covariance family.
    Student { x_dim: usize, y_dim: usize, dof: f64, dispersion: CovFamily },
    /// Gaussian copula with correlation `rho` pushed through the quantile
    /// functions of two normal mixtures.
    Bimodal { rho: f64 },
    /// `X ~ U(0, 1)`, `Y = X + N`, `N ~ U(−ε, ε)`.
    UniformAdditive { epsilon: f64 },
    /// Gaussian copula with uniform margins; the base of the swiss roll.
    UniformMargins { rho: f64 },
}

impl Base {
    pub fn dims(&self) -> (usize, usize) {
        match *self {
            Base::Multinormal { x_dim, y_dim, .. } | Base::Student { x_dim, y_dim, .. } => (x_dim, y_dim),
            _ => (1, 1),
        }
    }

    fn validate(&self) -> Result<(), TaskError> {
        let rho_ok = |rho: f64| {
            if rho.is_finite() && rho.abs() < 1.0 {
                Ok(())
            } else {
                Err(TaskError::Invalid(format!("correlation {rho} outside (−1, 1)")))
            }
        };
        match self {
            Base::Multinormal { x_dim, y_dim, cov } => cov.covariance(*x_dim, *y_dim).map(|_| ()),
            Base::Student {
                x_dim,
                y_dim,
                dof,
                dispersion,
            } => {
                student_correction(*dof, *x_dim, *y_dim)?;
                dispersion.covariance(*x_dim, *y_dim).map(|_| ())
            }
            Base::BivariateNormal { rho } | Base::Bimodal { rho } | Base::UniformMargins { rho } => rho_ok(*rho),
            Base::UniformAdditive { epsilon } => {
                if *epsilon > 0.0 && epsilon.is_finite() {
                    Ok(())
                } else {
                    Err(TaskError::Invalid(format!("noise half-width {epsilon} must be positive")))
                }
            }
        }
    }

    fn ground_truth(&self) -> Result<(f64, Derivation), TaskError> {
        self.validate()?;
        Ok(match self {
            Base::Multinormal { x_dim, y_dim, cov } => (
                gaussian_mi(&cov.covariance(*x_dim, *y_dim)?, *x_dim, *y_dim)?,
                Derivation::GaussianLogdet,
            ),
            Base::BivariateNormal { rho } => (bivariate_normal_mi(*rho), Derivation::GaussianLogdet),
            Base::Student {
                x_dim,
                y_dim,
                dof,
                dispersion,
            } => (
                student_mi(&dispersion.covariance(*x_dim, *y_dim)?, *dof, *x_dim, *y_dim)?,
                Derivation::StudentCorrection,
            ),
            Base::Bimodal { rho } | Base::UniformMargins { rho } => {
                (bivariate_normal_mi(*rho), Derivation::QuantileInvariant)
            }
            Base::UniformAdditive { epsilon } => (uniform_additive_mi(*epsilon), Derivation::UniformClosedForm),
        })
    }

    /// Row-major draws `(x, y)`.
    fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>), TaskError> {
        self.validate()?;
        match self {
            Base::Multinormal { x_dim, y_dim, cov } => {
                let (mut x, mut y) = cov.sample(*x_dim, *y_dim, count, rng)?;
                unit_scale(&mut x, &mut y, cov, *x_dim, *y_dim)?;
                Ok((x, y))
            }
            Base::Student {
                x_dim,
                y_dim,
                dof,
                dispersion,
            } => {
                let (mut x, mut y) = dispersion.sample(*x_dim, *y_dim, count, rng)?;
                unit_scale(&mut x, &mut y, dispersion, *x_dim, *y_dim)?;
                let chi = ChiSquared::new(*dof).map_err(|e| TaskError::Invalid(e.to_string()))?;
                for i in 0..count {
                    let u: f64 = chi.sample(rng);
                    let s = (dof / u).sqrt();
                    x[i * x_dim..(i + 1) * x_dim].iter_mut().for_each(|v| *v *= s);
                    y[i * y_dim..(i + 1) * y_dim].iter_mut().for_each(|v| *v *= s);
                }
                Ok((x, y))
            }
            Base::BivariateNormal { rho } => Ok(correlated_pair(*rho, count, rng)),
            Base::Bimodal { rho } => {
                let (x, y) = correlated_pair(*rho, count, rng);
                let x = x.into_iter().map(|z| bimodal_x_quantile(phi(z))).collect();
                let y = y.into_iter().map(|z| bimodal_y_quantile(phi(z))).collect();
                Ok((x, y))
            }
            Base::UniformMargins { rho } => {
                let (x, y) = correlated_pair(*rho, count, rng);
                Ok((x.into_iter().map(phi).collect(), y.into_iter().map(phi).collect()))
            }
            Base::UniformAdditive { epsilon } => {
                let noise = Uniform::new(-epsilon, epsilon);
                let x: Vec<f64> = (0..count).map(|_| rng.gen::<f64>()).collect();
                let y = x.iter().map(|v| v + noise.sample(rng)).collect();
                Ok((x, y))
            }
        }
    }
}

// Divides every coordinate by its analytic standard deviation, so the
// transforms see unit-scale inputs (the spiral speed 1/m assumes ‖x‖² ≈ m).
// A fixed diagonal map, so the MI is unchanged.
fn unit_scale(x: &mut [f64], y: &mut [f64], cov: &CovFamily, m: usize, n: usize) -> Result<(), TaskError> {
    let sd: Vec<f64> = cov.covariance(m, n)?.diagonal().iter().map(|v| v.sqrt()).collect();
    x.chunks_mut(m).for_each(|r| r.iter_mut().zip(&sd[..m]).for_each(|(v, s)| *v /= s));
    y.chunks_mut(n).for_each(|r| r.iter_mut().zip(&sd[m..]).for_each(|(v, s)| *v /= s));
    Ok(())
}

fn correlated_pair<R: Rng + ?Sized>(rho: f64, count: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let c = (1.0 - rho * rho).sqrt();
    (0..count)
        .map(|_| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            (a, rho * a + c * b)
        })
        .unzip()
}

pub fn bimodal_x_cdf(x: f64) -> f64 {
    0.3 * phi(x) + 0.7 * phi(x - 5.0)
}

pub fn bimodal_y_cdf(y: f64) -> f64 {
    0.5 * phi(y + 1.0) + 0.5 * phi(y - 3.0)
}

/// Inverts a CDF by bisection on `[−20, 20]` to `1e−10`.
pub fn invert_cdf(cdf: impl Fn(f64) -> f64, u: f64) -> f64 {
    let (mut lo, mut hi) = (-20.0, 20.0);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn bimodal_x_quantile(u: f64) -> f64 {
    invert_cdf(bimodal_x_cdf, u)
}

pub fn bimodal_y_quantile(u: f64) -> f64 {
    invert_cdf(bimodal_y_cdf, u)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Derivation {
    GaussianLogdet,
    StudentCorrection,
    UniformClosedForm,
    TransformInvariant,
    QuantileInvariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Nats.
    pub mi: f64,
    pub derivation: Derivation,
}

/// A base distribution and the transforms applied to its draws, in order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    /// Display name, as in the benchmark table header.
    pub name: String,
    pub base: Base,
    #[serde(default)]
    pub transforms: Vec<Transform>,
    /// The published ground truth, rounded to 0.1 nats.
    #[serde(default)]
    pub table_gt: Option<f64>,
    #[serde(default)]
    pub note: Option<String>,
}

impl TaskSpec {
    pub fn new(id: impl Into<String>, name: impl Into<String>, base: Base, transforms: Vec<Transform>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            base,
            transforms,
            table_gt: None,
            note: None,
        }
    }

    /// Output dims after the transform chain.
    pub fn dims(&self) -> Result<(usize, usize), TaskError> {
        let (mut m, mut n) = self.base.dims();
        for t in &self.transforms {
            (m, n) = t.output_dims(m, n)?;
        }
        Ok((m, n))
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        self.base.validate()?;
        self.dims().map(|_| ())
    }

    /// Transforms never change the value; only the derivation tag records them.
    pub fn ground_truth(&self) -> Result<GroundTruth, TaskError> {
        self.dims()?;
        let (mi, derivation) = self.base.ground_truth()?;
        let derivation = if self.transforms.is_empty() {
            derivation
        } else {
            Derivation::TransformInvariant
        };
        Ok(GroundTruth { mi, derivation })
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<PairedSamples, TaskError> {
        self.validate()?;
        let (mut m, mut n) = self.base.dims();
        let (mut x, mut y) = self.base.sample(count, rng)?;
        for t in &self.transforms {
            (x, y) = t.apply(x, m, y, n)?;
            (m, n) = t.output_dims(m, n)?;
        }
        Ok(PairedSamples::new(Tensor::matrix(count, m, x)?, Tensor::matrix(count, n, y)?)?)
    }
}
