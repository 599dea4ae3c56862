//! The correlated multivariate normal family and Gaussian mutual information.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::TaskError;

/// Weights of the latent construction
/// `X_l = ε_X E_l + α U_all + β_X U_X + (λ Z_l if l ≤ K else η_X E'_l)`
/// and the mirrored one for `Y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovFamily {
    pub alpha: f64,
    pub beta_x: f64,
    pub beta_y: f64,
    pub lambda: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub eta_x: f64,
    pub eta_y: f64,
    /// Number of interacting `(X_l, Y_l)` pairs.
    pub k: usize,
}

impl CovFamily {
    /// Independent unit-variance coordinates.
    pub fn identity() -> Self {
        Self::dense(0.0, 1.0)
    }

    /// Every distinct pair has correlation `α² / (α² + ε²)`.
    pub fn dense(alpha: f64, eps: f64) -> Self {
        Self {
            alpha,
            beta_x: 0.0,
            beta_y: 0.0,
            lambda: 0.0,
            eps_x: eps,
            eps_y: eps,
            eta_x: 0.0,
            eta_y: 0.0,
            k: 0,
        }
    }

    /// `K` pairs `(X_l, Y_l)` with correlation `λ² / (ε² + λ²)`, all else
    /// uncorrelated and every variance `ε² + λ²`.
    pub fn sparse(k: usize, lambda: f64, eps: f64) -> Self {
        Self {
            alpha: 0.0,
            beta_x: 0.0,
            beta_y: 0.0,
            lambda,
            eps_x: eps,
            eps_y: eps,
            eta_x: lambda,
            eta_y: lambda,
            k,
        }
    }

    fn validate(&self, m: usize, n: usize) -> Result<(), TaskError> {
        if m == 0 || n == 0 {
            return Err(TaskError::Invalid("dimensions must be positive".into()));
        }
        if self.k > m.min(n) {
            return Err(TaskError::Invalid(format!("K = {} exceeds min({m}, {n})", self.k)));
        }
        let w = [
            self.alpha,
            self.beta_x,
            self.beta_y,
            self.lambda,
            self.eps_x,
            self.eps_y,
            self.eta_x,
            self.eta_y,
        ];
        if w.iter().any(|v| !v.is_finite()) {
            return Err(TaskError::Invalid("non-finite covariance weight".into()));
        }
        Ok(())
    }

    /// Analytic covariance of `[X; Y]`, checked positive definite.
    pub fn covariance(&self, m: usize, n: usize) -> Result<DMatrix<f64>, TaskError> {
        self.validate(m, n)?;
        let (a2, l2) = (self.alpha * self.alpha, self.lambda * self.lambda);
        let cov = DMatrix::from_fn(m + n, m + n, |i, j| {
            let (xi, xj) = (i < m, j < m);
            match (xi, xj) {
                (true, true) => {
                    let mut c = a2 + self.beta_x * self.beta_x;
                    if i == j {
                        c += self.eps_x * self.eps_x;
                        c += if i < self.k { l2 } else { self.eta_x * self.eta_x };
                    }
                    c
                }
                (false, false) => {
                    let (i, j) = (i - m, j - m);
                    let mut c = a2 + self.beta_y * self.beta_y;
                    if i == j {
                        c += self.eps_y * self.eps_y;
                        c += if i < self.k { l2 } else { self.eta_y * self.eta_y };
                    }
                    c
                }
                _ => {
                    let (i, j) = if xi { (i, j - m) } else { (j, i - m) };
                    a2 + if i == j && i < self.k { l2 } else { 0.0 }
                }
            }
        });
        if cov.clone().cholesky().is_none() {
            return Err(TaskError::NotPositiveDefinite);
        }
        Ok(cov)
    }

    /// Draws `count` rows via the latent construction itself.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        m: usize,
        n: usize,
        count: usize,
        rng: &mut R,
    ) -> Result<(Vec<f64>, Vec<f64>), TaskError> {
        self.covariance(m, n)?;
        let mut xs = Vec::with_capacity(count * m);
        let mut ys = Vec::with_capacity(count * n);
        let mut z = vec![0.0; self.k];
        for _ in 0..count {
            let mut g = || -> f64 { StandardNormal.sample(rng) };
            let (u_all, u_x, u_y) = (g(), g(), g());
            z.iter_mut().for_each(|v| *v = g());
            for l in 0..m {
                let extra = if l < self.k { self.lambda * z[l] } else { self.eta_x * g() };
                xs.push(self.eps_x * g() + self.alpha * u_all + self.beta_x * u_x + extra);
            }
            for l in 0..n {
                let extra = if l < self.k { self.lambda * z[l] } else { self.eta_y * g() };
                ys.push(self.eps_y * g() + self.alpha * u_all + self.beta_y * u_y + extra);
            }
        }
        Ok((xs, ys))
    }
}

/// `log det` of a positive definite matrix via Cholesky.
pub fn log_det(a: &DMatrix<f64>) -> Result<f64, TaskError> {
    let chol = a.clone().cholesky().ok_or(TaskError::NotPositiveDefinite)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// `½ (log det Σ_X + log det Σ_Y − log det Σ)` for `Σ` of `[X; Y]`.
pub fn gaussian_mi(cov: &DMatrix<f64>, m: usize, n: usize) -> Result<f64, TaskError> {
    if cov.nrows() != m + n || cov.ncols() != m + n || m == 0 || n == 0 {
        return Err(TaskError::Invalid(format!(
            "covariance is {}x{}, expected {}",
            cov.nrows(),
            cov.ncols(),
            m + n
        )));
    }
    let sx = cov.view((0, 0), (m, m)).into_owned();
    let sy = cov.view((m, m), (n, n)).into_owned();
    let mi = 0.5 * (log_det(&sx)? + log_det(&sy)? - log_det(cov)?);
    // exact zeros can come out as -1e-17
    Ok(mi.max(0.0))
}

/// MI of a standard bivariate normal with correlation `rho`.
pub fn bivariate_normal_mi(rho: f64) -> f64 {
    -0.5 * (-rho * rho).ln_1p()
}
