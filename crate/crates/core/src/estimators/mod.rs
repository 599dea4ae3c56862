//! Score-difference estimators of KL divergence, entropy and mutual
//! information.
//!
//! Every estimate is a Monte Carlo average of
//! `w (g_t² / 2) × (score expression)` over test points, with one diffusion
//! time `t ~ q` and importance weight `w = 1 / q(t)` per point and run.

mod gaussian;
mod oracle;

pub use gaussian::{apply_rows, check_orthogonal, GaussianOracle, GaussianPairOracle, OrthogonalMap};
pub use oracle::{ConditionalOracle, JointOracle, OracleKind, ScoreOracle};

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::PairedSamples;
use crate::nn::{NnError, Tensor};
use crate::score::ScoreError;
use crate::sde::{diffuse_batch, DiffusedBatch, SdeError, TimeProposal, TimeSampler, VpSchedule};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("no samples supplied")]
    Empty,
    #[error("variant {0} requires sigma")]
    SigmaRequired(EstimatorVariant),
    #[error("variant {0} does not take sigma")]
    SigmaNotAccepted(EstimatorVariant),
    #[error("variant {0} does not match this model flavor")]
    WrongVariant(EstimatorVariant),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("map is not orthogonal (max |QᵀQ - I| = {0:.2e})")]
    NotOrthogonal(f64),
    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),
    #[error("oracles use different schedules")]
    ScheduleMismatch,
    #[error("invalid Monte Carlo config: {0}")]
    Config(String),
    #[error("non-finite integrand")]
    NonFinite,
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sde(#[from] SdeError),
}

/// The four mutual information formulations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorVariant {
    /// Conditional model, entropy difference against a Gaussian reference.
    CondSigma,
    /// Conditional model, score difference inside the norm.
    Cond,
    /// Joint model, entropy differences against a Gaussian reference.
    JointSigma,
    /// Joint model, score difference inside the norm.
    Joint,
}

impl EstimatorVariant {
    pub const ALL: [EstimatorVariant; 4] = [Self::Cond, Self::CondSigma, Self::Joint, Self::JointSigma];

    pub fn needs_sigma(self) -> bool {
        matches!(self, Self::CondSigma | Self::JointSigma)
    }

    pub fn is_joint(self) -> bool {
        matches!(self, Self::Joint | Self::JointSigma)
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::CondSigma => "MINDE-c(σ)",
            Self::Cond => "MINDE-c",
            Self::JointSigma => "MINDE-j(σ)",
            Self::Joint => "MINDE-j",
        }
    }

    /// Stable identifier used in file names and CSV columns.
    pub fn id(self) -> &'static str {
        match self {
            Self::CondSigma => "cond-sigma",
            Self::Cond => "cond",
            Self::JointSigma => "joint-sigma",
            Self::Joint => "joint",
        }
    }

    pub fn from_id(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.id() == s)
    }

    /// Rejects a missing σ for the reference variants and any σ otherwise.
    pub fn check_sigma(self, sigma: Option<f64>) -> Result<Option<f64>, EstimatorError> {
        match (self.needs_sigma(), sigma) {
            (true, None) => Err(EstimatorError::SigmaRequired(self)),
            (false, Some(_)) => Err(EstimatorError::SigmaNotAccepted(self)),
            (true, Some(s)) if !(s > 0.0 && s.is_finite()) => Err(EstimatorError::InvalidSigma(s)),
            (_, s) => Ok(s),
        }
    }
}

impl fmt::Display for EstimatorVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Monte Carlo settings: every point receives `runs` independent time draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McConfig {
    pub runs: usize,
    pub proposal: TimeProposal,
    /// Use at most this many test points (all when `None`).
    pub max_points: Option<usize>,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            proposal: TimeProposal::Importance,
            max_points: None,
        }
    }
}

impl McConfig {
    pub fn with_runs(runs: usize) -> Self {
        Self {
            runs,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), EstimatorError> {
        if self.runs == 0 {
            return Err(EstimatorError::Config("runs must be positive".into()));
        }
        if self.max_points == Some(0) {
            return Err(EstimatorError::Config("max_points must be positive".into()));
        }
        Ok(())
    }
}

/// Mean and standard error of a Monte Carlo estimate, in nats.
///
/// `std_error` is the standard deviation of the per-point values (each the
/// average over its `n_time_samples` draws) divided by `sqrt(n_points)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_points: usize,
    pub n_time_samples: usize,
    pub variant: Option<EstimatorVariant>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
    pub oracle: OracleKind,
    /// Mean of each run over all points.
    pub run_means: Vec<f64>,
    /// Set when the two variables look identical, where MI diverges.
    pub degenerate: bool,
}

/// Streaming mean and variance (Welford).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. parallel combination.
    pub fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

fn sq_norm_rows(a: &Tensor, shift: Option<(&Tensor, &[f64])>) -> Vec<f64> {
    let m = a.cols();
    (0..a.rows())
        .map(|i| {
            let row = &a.data()[i * m..(i + 1) * m];
            match shift {
                None => row.iter().map(|v| v * v).sum(),
                Some((x, chi)) => row.iter().zip(x.row(i)).map(|(s, xv)| (s + xv / chi[i]).powi(2)).sum(),
            }
        })
        .collect()
}

fn diff_sq_rows(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let m = a.cols();
    a.data()
        .chunks(m)
        .zip(b.data().chunks(m))
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y).powi(2)).sum())
        .collect()
}

/// `w g_t² / 2` per row.
fn time_factor(schedule: &VpSchedule, batch: &DiffusedBatch) -> Vec<f64> {
    batch.t.iter().zip(&batch.weight).map(|(&t, &w)| 0.5 * w * schedule.g2(t)).collect()
}

fn truncate(x: &Tensor, mc: &McConfig) -> Result<Tensor, EstimatorError> {
    match mc.max_points {
        Some(m) if m < x.rows() => Ok(x.slice_rows(0, m)?),
        _ => Ok(x.clone()),
    }
}

/// Runs `mc.runs` passes of `integrand` over the same points and folds the
/// per-point averages into an estimate.
fn monte_carlo<R, F>(
    schedule: &VpSchedule,
    x0: &Tensor,
    mc: &McConfig,
    rng: &mut R,
    mut integrand: F,
) -> Result<(RunningStats, Vec<f64>), EstimatorError>
where
    R: Rng + ?Sized,
    F: FnMut(&DiffusedBatch) -> Result<Vec<f64>, EstimatorError>,
{
    mc.validate()?;
    let n = x0.rows();
    if n == 0 {
        return Err(EstimatorError::Empty);
    }
    let sampler = TimeSampler::new(*schedule, mc.proposal);
    let mut per_point = vec![0.0; n];
    let mut run_means = Vec::with_capacity(mc.runs);
    for _ in 0..mc.runs {
        let batch = diffuse_batch(&sampler, x0, rng);
        let vals = integrand(&batch)?;
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::NonFinite);
        }
        run_means.push(vals.iter().sum::<f64>() / n as f64);
        per_point.iter_mut().zip(&vals).for_each(|(p, v)| *p += v);
    }
    let stats = per_point.iter().map(|p| p / mc.runs as f64).collect();
    Ok((stats, run_means))
}

fn finish(
    stats: RunningStats,
    offset: f64,
    run_means: Vec<f64>,
    n_points: usize,
    mc: &McConfig,
    oracle: OracleKind,
) -> MiEstimate {
    MiEstimate {
        mean: stats.mean() + offset,
        std_error: stats.std_error(),
        n_points,
        n_time_samples: mc.runs,
        variant: None,
        sigma: None,
        seed: None,
        oracle,
        run_means: run_means.into_iter().map(|m| m + offset).collect(),
        degenerate: false,
    }
}

fn combined_kind(a: OracleKind, b: OracleKind) -> OracleKind {
    if a == OracleKind::Analytic && b == OracleKind::Analytic {
        OracleKind::Analytic
    } else {
        OracleKind::Learned
    }
}

/// `e(μ_A, μ_B) = ∫ (g_t²/2) E_{ν_t^A} ‖s_A − s_B‖² dt` with `samples ~ μ_A`;
/// the terminal KL term is taken as zero.
pub fn kl_divergence<A, B, R>(
    oracle_a: &A,
    oracle_b: &B,
    samples: &Tensor,
    mc: &McConfig,
    rng: &mut R,
) -> Result<MiEstimate, EstimatorError>
where
    A: ScoreOracle + ?Sized,
    B: ScoreOracle + ?Sized,
    R: Rng + ?Sized,
{
    let d = oracle_a.dim();
    for got in [oracle_b.dim(), samples.cols()] {
        if got != d {
            return Err(EstimatorError::Dimension { expected: d, got });
        }
    }
    if oracle_a.schedule() != oracle_b.schedule() {
        return Err(EstimatorError::ScheduleMismatch);
    }
    let schedule = *oracle_a.schedule();
    let x0 = truncate(samples, mc)?;
    let (stats, runs) = monte_carlo(&schedule, &x0, mc, rng, |b| {
        let sa = oracle_a.score(&b.xt, &b.t)?;
        let sb = oracle_b.score(&b.xt, &b.t)?;
        let f = time_factor(&schedule, b);
        Ok(diff_sq_rows(&sa, &sb).iter().zip(&f).map(|(d, f)| d * f).collect())
    })?;
    let est = finish(stats, 0.0, runs, x0.rows(), mc, combined_kind(oracle_a.kind(), oracle_b.kind()));
    Ok(est)
}

/// Entropy in nats:
/// `(N/2) log(2πσ²) + Ê‖X_0‖²/(2σ²) − e(μ_A, N_σ) − tail(σ, N)`.
pub fn entropy<O, R>(
    oracle: &O,
    samples: &Tensor,
    sigma: f64,
    mc: &McConfig,
    rng: &mut R,
) -> Result<MiEstimate, EstimatorError>
where
    O: ScoreOracle + ?Sized,
    R: Rng + ?Sized,
{
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(EstimatorError::InvalidSigma(sigma));
    }
    let d = oracle.dim();
    if samples.cols() != d {
        return Err(EstimatorError::Dimension {
            expected: d,
            got: samples.cols(),
        });
    }
    let schedule = *oracle.schedule();
    let x0 = truncate(samples, mc)?;
    let second: Vec<f64> = sq_norm_rows(&x0, None);
    let (stats, runs) = monte_carlo(&schedule, &x0, mc, rng, |b| {
        let s = oracle.score(&b.xt, &b.t)?;
        let chi: Vec<f64> = b.k.iter().zip(&b.v).map(|(k, v)| k * k * sigma * sigma + v).collect();
        let f = time_factor(&schedule, b);
        let e = sq_norm_rows(&s, Some((&b.xt, &chi)));
        Ok(e.iter()
            .zip(&f)
            .zip(&second)
            .map(|((e, f), m2)| m2 / (2.0 * sigma * sigma) - f * e)
            .collect())
    })?;
    let offset = 0.5 * d as f64 * (2.0 * std::f64::consts::PI * sigma * sigma).ln() - schedule.tail_correction(sigma, d);
    let mut est = finish(stats, offset, runs, x0.rows(), mc, oracle.kind());
    est.sigma = Some(sigma);
    Ok(est)
}

/// True when `x` and `y` coincide, the case where MI is infinite.
pub fn looks_degenerate(x: &Tensor, y: &Tensor) -> bool {
    x.cols() == y.cols()
        && x.rows() == y.rows()
        && x.data().iter().zip(y.data()).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()))
}

fn check_pairs(samples: &PairedSamples, x_dim: usize, y_dim: usize) -> Result<(), EstimatorError> {
    if samples.is_empty() {
        return Err(EstimatorError::Empty);
    }
    if samples.x_dim() != x_dim {
        return Err(EstimatorError::Dimension {
            expected: x_dim,
            got: samples.x_dim(),
        });
    }
    if samples.y_dim() != y_dim {
        return Err(EstimatorError::Dimension {
            expected: y_dim,
            got: samples.y_dim(),
        });
    }
    Ok(())
}

fn flag_degenerate(est: &mut MiEstimate, x: &Tensor, y: &Tensor) {
    if looks_degenerate(x, y) {
        log::warn!("B equals A: mutual information is infinite, reporting the finite Monte Carlo value");
        est.degenerate = true;
    }
}

/// MINDE-c. `Cond` integrates `‖s_A − s_{A|y0}‖²`; `CondSigma` integrates
/// `‖s_{A|y0} + x_t/χ_t‖² − ‖s_A + x_t/χ_t‖²`, i.e. `H(A) − H(A|B)` through
/// two entropy estimates.
pub fn mi_minde_c<O, R>(
    oracle: &O,
    samples: &PairedSamples,
    variant: EstimatorVariant,
    sigma: Option<f64>,
    mc: &McConfig,
    rng: &mut R,
) -> Result<MiEstimate, EstimatorError>
where
    O: ConditionalOracle + ?Sized,
    R: Rng + ?Sized,
{
    if variant.is_joint() {
        return Err(EstimatorError::WrongVariant(variant));
    }
    let sigma = variant.check_sigma(sigma)?;
    check_pairs(samples, oracle.x_dim(), oracle.y_dim())?;
    let schedule = *oracle.schedule();
    let x0 = truncate(&samples.x, mc)?;
    let y0 = truncate(&samples.y, mc)?;
    let (stats, runs) = monte_carlo(&schedule, &x0, mc, rng, |b| {
        let marginal = oracle.marginal(&b.xt, &b.t)?;
        let conditional = oracle.conditional(&b.xt, &y0, &b.t)?;
        let f = time_factor(&schedule, b);
        let core = match sigma {
            None => diff_sq_rows(&marginal, &conditional),
            Some(s) => {
                let chi: Vec<f64> = b.k.iter().zip(&b.v).map(|(k, v)| k * k * s * s + v).collect();
                let c = sq_norm_rows(&conditional, Some((&b.xt, &chi)));
                let m = sq_norm_rows(&marginal, Some((&b.xt, &chi)));
                c.iter().zip(&m).map(|(c, m)| c - m).collect()
            }
        };
        Ok(core.iter().zip(&f).map(|(c, f)| c * f).collect())
    })?;
    let mut est = finish(stats, 0.0, runs, x0.rows(), mc, oracle.kind());
    est.variant = Some(variant);
    est.sigma = sigma;
    flag_degenerate(&mut est, &x0, &y0);
    Ok(est)
}

/// MINDE-j. `Joint` integrates `‖s_C − [s_{A|y0}, s_{B|x0}]‖²`;
/// `JointSigma` integrates `‖s_{A|y0} + x_t/χ‖² + ‖s_{B|x0} + y_t/χ‖²
/// − ‖s_C + [x_t, y_t]/χ‖²`, i.e. `H(A,B) − H(A|B) − H(B|A)`.
pub fn mi_minde_j<O, R>(
    oracle: &O,
    samples: &PairedSamples,
    variant: EstimatorVariant,
    sigma: Option<f64>,
    mc: &McConfig,
    rng: &mut R,
) -> Result<MiEstimate, EstimatorError>
where
    O: JointOracle + ?Sized,
    R: Rng + ?Sized,
{
    if !variant.is_joint() {
        return Err(EstimatorError::WrongVariant(variant));
    }
    let sigma = variant.check_sigma(sigma)?;
    let (dx, dy) = (oracle.x_dim(), oracle.y_dim());
    check_pairs(samples, dx, dy)?;
    let schedule = *oracle.schedule();
    let x0 = truncate(&samples.x, mc)?;
    let y0 = truncate(&samples.y, mc)?;
    let c0 = Tensor::hcat(&[&x0, &y0])?;
    let (stats, runs) = monte_carlo(&schedule, &c0, mc, rng, |b| {
        let xt = b.xt.slice_cols(0, dx)?;
        let yt = b.xt.slice_cols(dx, dx + dy)?;
        let joint = oracle.joint(&xt, &yt, &b.t)?;
        let sx = oracle.cond_x(&xt, &y0, &b.t)?;
        let sy = oracle.cond_y(&x0, &yt, &b.t)?;
        let f = time_factor(&schedule, b);
        let core: Vec<f64> = match sigma {
            None => diff_sq_rows(&joint, &Tensor::hcat(&[&sx, &sy])?),
            Some(s) => {
                let chi: Vec<f64> = b.k.iter().zip(&b.v).map(|(k, v)| k * k * s * s + v).collect();
                let j = sq_norm_rows(&joint, Some((&b.xt, &chi)));
                let a = sq_norm_rows(&sx, Some((&xt, &chi)));
                let c = sq_norm_rows(&sy, Some((&yt, &chi)));
                (0..j.len()).map(|i| a[i] + c[i] - j[i]).collect()
            }
        };
        Ok(core.iter().zip(&f).map(|(c, f)| c * f).collect())
    })?;
    let mut est = finish(stats, 0.0, runs, x0.rows(), mc, oracle.kind());
    est.variant = Some(variant);
    est.sigma = sigma;
    flag_degenerate(&mut est, &x0, &y0);
    Ok(est)
}

/// KL estimates before and after mapping both measures through `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceCheck {
    pub original: MiEstimate,
    pub mapped: MiEstimate,
    /// `|mapped − original|`.
    pub discrepancy: f64,
    /// `sqrt(se_original² + se_mapped²)`.
    pub combined_std_error: f64,
}

/// Estimates `KL(A‖B)` and `KL(QA‖QB)` from the same draws (`samples ~ A`,
/// mapped by `Q` for the second estimate) and reports the gap.
pub fn kl_linear_invariance_check<A, B, R>(
    oracle_a: &A,
    oracle_b: &B,
    samples: &Tensor,
    q: &nalgebra::DMatrix<f64>,
    mc: &McConfig,
    rng: &mut R,
) -> Result<InvarianceCheck, EstimatorError>
where
    A: ScoreOracle + Clone,
    B: ScoreOracle + Clone,
    R: Rng + ?Sized,
{
    check_orthogonal(q, oracle_a.dim())?;
    let original = kl_divergence(oracle_a, oracle_b, samples, mc, rng)?;
    let qa = OrthogonalMap::new(oracle_a.clone(), q.clone())?;
    let qb = OrthogonalMap::new(oracle_b.clone(), q.clone())?;
    let mapped = kl_divergence(&qa, &qb, &apply_rows(q, samples), mc, rng)?;
    Ok(InvarianceCheck {
        discrepancy: (mapped.mean - original.mean).abs(),
        combined_std_error: original.std_error.hypot(mapped.std_error),
        original,
        mapped,
    })
}

/// Gap between estimates driven by analytic and learned scores on the same
/// draws (common random numbers): a direct read of the score-error term.
pub fn score_error_diagnostic<A, L, R>(
    analytic: &A,
    learned: &L,
    samples: &PairedSamples,
    mc: &McConfig,
    rng: &mut R,
) -> Result<f64, EstimatorError>
where
    A: ConditionalOracle + ?Sized,
    L: ConditionalOracle + ?Sized,
    R: Rng + ?Sized,
{
    if analytic.kind() != OracleKind::Analytic {
        return Err(EstimatorError::Config("diagnostic needs an analytic reference".into()));
    }
    let seed: u64 = rng.gen();
    let mut ra = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let mut rl = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
    let a = mi_minde_c(analytic, samples, EstimatorVariant::Cond, None, mc, &mut ra)?;
    let l = mi_minde_c(learned, samples, EstimatorVariant::Cond, None, mc, &mut rl)?;
    Ok(a.mean - l.mean)
}
