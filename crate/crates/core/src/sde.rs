//! Variance-preserving forward diffusion and the quantities derived from it.
//!
//! The linear SDE `dX = f_t X dt + g_t dW` with `f_t = -β(t)/2`,
//! `g_t = sqrt(β(t))` and `β(t) = β_min + (t/T)(β_max - β_min)` has the
//! Gaussian transition `X_t | X_0 ~ N(k_t X_0, v_t I)` where
//! `k_t = exp(∫_0^t f_s ds)` and `v_t = 1 - k_t²`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SdeError {
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("time {0} must be strictly positive for a conditional score")]
    NonPositiveTime(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("reference standard deviation must be positive, got {0}")]
    InvalidSigma(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VpSchedule {
    pub beta_min: f64,
    pub beta_max: f64,
    /// Time horizon `T`.
    pub horizon: f64,
    /// Lower end of every time integral.
    pub t_eps: f64,
}

impl Default for VpSchedule {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 20.0,
            horizon: 1.0,
            t_eps: 1e-5,
        }
    }
}

/// Mean contraction `k_t` and variance `v_t` of the transition kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionKernel {
    pub k: f64,
    pub v: f64,
}

impl DiffusionKernel {
    /// `χ_t = k_t² σ² + v_t`, the variance of a diffused `N(0, σ² I)`.
    pub fn chi(&self, sigma: f64) -> f64 {
        self.k * self.k * sigma * sigma + self.v
    }
}

impl VpSchedule {
    pub fn new(beta_min: f64, beta_max: f64, horizon: f64, t_eps: f64) -> Result<Self, SdeError> {
        let s = Self {
            beta_min,
            beta_max,
            horizon,
            t_eps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SdeError> {
        let ok = self.beta_min > 0.0
            && self.beta_max > self.beta_min
            && self.horizon > 0.0
            && self.t_eps > 0.0
            && self.t_eps < self.horizon;
        if ok && self.beta_min.is_finite() && self.beta_max.is_finite() {
            Ok(())
        } else {
            Err(SdeError::InvalidSchedule(format!("{self:?}")))
        }
    }

    pub fn beta(&self, t: f64) -> f64 {
        self.beta_min + (t / self.horizon) * (self.beta_max - self.beta_min)
    }

    /// Drift coefficient `f_t = -β(t)/2`.
    pub fn drift(&self, t: f64) -> f64 {
        -0.5 * self.beta(t)
    }

    /// Diffusion coefficient `g_t = sqrt(β(t))`.
    pub fn diffusion(&self, t: f64) -> f64 {
        self.beta(t).sqrt()
    }

    pub fn g2(&self, t: f64) -> f64 {
        self.beta(t)
    }

    /// `log k_t = ∫_0^t f_s ds`.
    pub fn log_k(&self, t: f64) -> f64 {
        -0.25 * t * t * (self.beta_max - self.beta_min) / self.horizon - 0.5 * t * self.beta_min
    }

    pub fn kernel(&self, t: f64) -> Result<DiffusionKernel, SdeError> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(SdeError::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.kernel_unchecked(t))
    }

    pub(crate) fn kernel_unchecked(&self, t: f64) -> DiffusionKernel {
        let log_k = self.log_k(t);
        let k = log_k.exp();
        // 1 - exp(2 log k) without cancellation at small t
        let v = -(2.0 * log_k).exp_m1();
        DiffusionKernel { k, v }
    }

    /// `x_t = k_t x_0 + sqrt(v_t) ε`.
    pub fn perturb(&self, x0: &[f64], t: f64, noise: &[f64]) -> Result<Vec<f64>, SdeError> {
        if x0.len() != noise.len() {
            return Err(SdeError::DimensionMismatch(x0.len(), noise.len()));
        }
        let DiffusionKernel { k, v } = self.kernel(t)?;
        let sd = v.sqrt();
        Ok(x0.iter().zip(noise).map(|(x, e)| k * x + sd * e).collect())
    }

    /// Score of the transition kernel: `-(x_t - k_t x_0) / v_t`.
    pub fn true_conditional_score(&self, xt: &[f64], x0: &[f64], t: f64) -> Result<Vec<f64>, SdeError> {
        if t <= 0.0 {
            return Err(SdeError::NonPositiveTime(t));
        }
        if xt.len() != x0.len() {
            return Err(SdeError::DimensionMismatch(xt.len(), x0.len()));
        }
        let DiffusionKernel { k, v } = self.kernel(t)?;
        Ok(xt.iter().zip(x0).map(|(a, b)| -(a - k * b) / v).collect())
    }

    /// Score of the diffused reference `N(0, σ² I)`: `-x / χ_t`.
    pub fn gaussian_reference_score(&self, x: &[f64], t: f64, sigma: f64) -> Result<Vec<f64>, SdeError> {
        if sigma <= 0.0 {
            return Err(SdeError::InvalidSigma(sigma));
        }
        let chi = self.kernel(t)?.chi(sigma);
        Ok(x.iter().map(|v| -v / chi).collect())
    }

    /// `(N/2)(log χ_T - 1 + 1/χ_T)`: KL between the terminal marginal and the
    /// terminal diffused reference, assuming the former is standard normal.
    pub fn tail_correction(&self, sigma: f64, dim: usize) -> f64 {
        let chi = self.kernel_unchecked(self.horizon).chi(sigma);
        0.5 * dim as f64 * (chi.ln() - 1.0 + 1.0 / chi)
    }
}

/// Gaussian reference `N(0, σ² I)` bound to a schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianReference {
    pub sigma: f64,
    pub schedule: VpSchedule,
}

impl GaussianReference {
    pub fn new(sigma: f64, schedule: VpSchedule) -> Result<Self, SdeError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(SdeError::InvalidSigma(sigma));
        }
        Ok(Self { sigma, schedule })
    }

    pub fn chi(&self, t: f64) -> f64 {
        self.schedule.kernel_unchecked(t).chi(self.sigma)
    }
}

/// Proposal density for the time integral over `[t_eps, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TimeProposal {
    Uniform,
    /// `q(t) ∝ g_t² / v_t`.
    #[default]
    Importance,
}

/// Draws `(t, w)` with `E_q[w h(t)] = ∫_{t_eps}^T h(t) dt`.
///
/// For the importance proposal `q(t) ∝ g_t²/v_t`, the antiderivative of
/// `g²/v` is `log(v_t / k_t²)`, so the CDF and its inverse are closed form:
/// `u ↦ L = L_eps + u (L_T - L_eps)`, `k² = 1/(1 + e^L)`, and `t` solves the
/// quadratic `log k_t = ½ log k²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeSampler {
    schedule: VpSchedule,
    proposal: TimeProposal,
    log_ratio_lo: f64,
    log_ratio_hi: f64,
}

fn log_snr_inverse(schedule: &VpSchedule, t: f64) -> f64 {
    // log(v_t / k_t^2) = log(exp(-2 log k) - 1)
    let a = -2.0 * schedule.log_k(t);
    a.exp_m1().ln()
}

impl TimeSampler {
    pub fn new(schedule: VpSchedule, proposal: TimeProposal) -> Self {
        Self {
            schedule,
            proposal,
            log_ratio_lo: log_snr_inverse(&schedule, schedule.t_eps),
            log_ratio_hi: log_snr_inverse(&schedule, schedule.horizon),
        }
    }

    pub fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }

    pub fn proposal(&self) -> TimeProposal {
        self.proposal
    }

    /// Normaliser `Z = ∫ g²/v dt` of the importance proposal.
    pub fn importance_normaliser(&self) -> f64 {
        self.log_ratio_hi - self.log_ratio_lo
    }

    /// Proposal density at `t`; zero outside the support.
    pub fn density(&self, t: f64) -> f64 {
        let s = &self.schedule;
        if t < s.t_eps || t > s.horizon {
            return 0.0;
        }
        match self.proposal {
            TimeProposal::Uniform => 1.0 / (s.horizon - s.t_eps),
            TimeProposal::Importance => {
                let v = s.kernel_unchecked(t).v;
                s.g2(t) / v / self.importance_normaliser()
            }
        }
    }

    /// Maps a uniform variate to a time via the inverse CDF.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let s = &self.schedule;
        let t = match self.proposal {
            TimeProposal::Uniform => s.t_eps + u * (s.horizon - s.t_eps),
            TimeProposal::Importance => {
                let l = self.log_ratio_lo + u * (self.log_ratio_hi - self.log_ratio_lo);
                // log k = -½ log(1 + e^L), computed stably
                let log_k = -0.5 * softplus(l);
                // a t² + b t + log_k = 0 with a = (β_max-β_min)/(4T), b = β_min/2
                let a = 0.25 * (s.beta_max - s.beta_min) / s.horizon;
                let b = 0.5 * s.beta_min;
                let c = -log_k;
                // positive root, written to avoid cancellation
                2.0 * c / (b + (b * b + 4.0 * a * c).sqrt())
            }
        };
        t.clamp(s.t_eps, s.horizon)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let u: f64 = rng.gen();
        let t = self.inverse_cdf(u);
        (t, 1.0 / self.density(t))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// One diffused batch: per-row times, weights, kernels, noise and `x_t`.
#[derive(Clone, Debug)]
pub struct DiffusedBatch {
    pub t: Vec<f64>,
    pub weight: Vec<f64>,
    pub k: Vec<f64>,
    pub v: Vec<f64>,
    pub noise: Tensor,
    pub xt: Tensor,
}

/// Samples one time per row of `x0` and diffuses it.
pub fn diffuse_batch<R: Rng + ?Sized>(sampler: &TimeSampler, x0: &Tensor, rng: &mut R) -> DiffusedBatch {
    let n = x0.rows();
    let mut t = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    for _ in 0..n {
        let (ti, wi) = sampler.sample(rng);
        t.push(ti);
        weight.push(wi);
    }
    diffuse_at(sampler.schedule(), x0, t, weight, rng)
}

/// Diffuses each row of `x0` to the supplied time.
pub fn diffuse_at<R: Rng + ?Sized>(
    schedule: &VpSchedule,
    x0: &Tensor,
    t: Vec<f64>,
    weight: Vec<f64>,
    rng: &mut R,
) -> DiffusedBatch {
    let (n, d) = (x0.rows(), x0.cols());
    let noise_data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    let mut xt = vec![0.0; n * d];
    let mut k = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for i in 0..n {
        let ker = schedule.kernel_unchecked(t[i]);
        let sd = ker.v.sqrt();
        for j in 0..d {
            xt[i * d + j] = ker.k * x0.data()[i * d + j] + sd * noise_data[i * d + j];
        }
        k.push(ker.k);
        v.push(ker.v);
    }
    DiffusedBatch {
        t,
        weight,
        k,
        v,
        noise: Tensor::new(x0.shape().to_vec(), noise_data).expect("noise shape"),
        xt: Tensor::new(x0.shape().to_vec(), xt).expect("xt shape"),
    }
}
