use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{Flavor, ScoreArch, ScoreNet};
use super::ScoreError;
use crate::nn::{ParamStore, Tensor};
use crate::sde::{diffuse_batch, TimeSampler, VpSchedule};

/// Diffusion mask `(α, β)` of the joint model; `(0, 0)` is not representable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    /// `(1, 1)`: both blocks diffuse; joint score.
    Both,
    /// `(1, 0)`: only `x` diffuses; score of `x` given clean `y`.
    XOnly,
    /// `(0, 1)`: only `y` diffuses; score of `y` given clean `x`.
    YOnly,
}

impl Mask {
    pub fn from_flags(alpha: bool, beta: bool) -> Result<Self, ScoreError> {
        match (alpha, beta) {
            (true, true) => Ok(Mask::Both),
            (true, false) => Ok(Mask::XOnly),
            (false, true) => Ok(Mask::YOnly),
            (false, false) => Err(ScoreError::InvalidMask),
        }
    }

    pub fn flag_index(self) -> usize {
        match self {
            Mask::Both => 0,
            Mask::XOnly => 1,
            Mask::YOnly => 2,
        }
    }

    pub fn diffuses_x(self) -> bool {
        matches!(self, Mask::Both | Mask::XOnly)
    }

    pub fn diffuses_y(self) -> bool {
        matches!(self, Mask::Both | Mask::YOnly)
    }
}

/// Everything a denoising score-matching step needs for one mini-batch.
///
/// `target` holds the injected noise on diffused columns; `mask` is 1 on
/// diffused columns and 0 on clean ones. `row_weight` is `w g_t² / (2 v_t)`,
/// the factor that turns squared noise error into the weighted score error
/// `w (g_t²/2) ‖s̃ − ∇log p(x_t | x_0)‖²`.
#[derive(Clone, Debug)]
pub struct LossBatch {
    pub input: Tensor,
    pub t: Vec<f64>,
    pub weight: Vec<f64>,
    pub v: Vec<f64>,
    pub flags: Vec<usize>,
    pub target: Tensor,
    pub mask: Tensor,
    pub row_weight: Vec<f64>,
}

impl LossBatch {
    /// Weighted squared error of a noise prediction against this batch.
    pub fn loss_of(&self, prediction: &Tensor) -> f64 {
        let m = self.target.cols();
        let mut total = 0.0;
        for i in 0..self.target.rows() {
            let mut sq = 0.0;
            for j in 0..m {
                let d = prediction.get(i, j) - self.target.get(i, j);
                sq += self.mask.get(i, j) * d * d;
            }
            total += self.row_weight[i] * sq;
        }
        total / self.target.rows() as f64
    }
}

fn row_weights(schedule: &VpSchedule, t: &[f64], w: &[f64], v: &[f64]) -> Vec<f64> {
    t.iter()
        .zip(w)
        .zip(v)
        .map(|((&ti, &wi), &vi)| wi * schedule.g2(ti) / (2.0 * vi))
        .collect()
}

/// Score network for `x` with optional context `y`.
#[derive(Clone, Debug)]
pub struct CondScoreModel {
    pub(crate) net: ScoreNet,
    pub(crate) params: ParamStore,
    pub(crate) schedule: VpSchedule,
    pub(crate) seed: u64,
    pub(crate) iterations: u64,
}

/// Masked joint score network over `[x, y]`.
#[derive(Clone, Debug)]
pub struct JointScoreModel {
    pub(crate) net: ScoreNet,
    pub(crate) params: ParamStore,
    pub(crate) schedule: VpSchedule,
    pub(crate) seed: u64,
    pub(crate) iterations: u64,
}

/// Shared surface of both flavors, used by the trainer and checkpointing.
pub trait ScoreModel: Clone {
    fn net(&self) -> &ScoreNet;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn schedule(&self) -> &VpSchedule;
    fn seed(&self) -> u64;
    fn iterations(&self) -> u64;
    fn set_iterations(&mut self, it: u64);

    /// Draws the randomized training batch: branch choice, time, noise.
    fn loss_batch<R: Rng + ?Sized>(
        &self,
        x0: &Tensor,
        y0: &Tensor,
        sampler: &TimeSampler,
        branch_prob: f64,
        rng: &mut R,
    ) -> Result<LossBatch, ScoreError>;

    fn arch(&self) -> &ScoreArch {
        self.net().arch()
    }
}

fn build(arch: ScoreArch, schedule: VpSchedule, seed: u64) -> Result<(ScoreNet, ParamStore), ScoreError> {
    schedule.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(ScoreNet::new(arch, &mut rng)?)
}

fn check_dims(arch: &ScoreArch, x: &Tensor, y: &Tensor) -> Result<(), ScoreError> {
    if x.cols() != arch.x_dim || y.cols() != arch.y_dim || x.rows() != y.rows() {
        return Err(ScoreError::Dimension {
            expected: (arch.x_dim, arch.y_dim),
            got: (x.cols(), y.cols()),
        });
    }
    Ok(())
}

fn noise_to_score(noise: &Tensor, v: &[f64]) -> Tensor {
    let m = noise.cols();
    let mut out = noise.clone();
    for (row, &vi) in out.data_mut().chunks_mut(m).zip(v) {
        let s = -1.0 / vi.sqrt();
        row.iter_mut().for_each(|e| *e *= s);
    }
    out
}

fn variances(schedule: &VpSchedule, t: &[f64]) -> Result<Vec<f64>, ScoreError> {
    t.iter()
        .map(|&ti| {
            if ti < schedule.t_eps || ti > schedule.horizon {
                return Err(ScoreError::Time(ti));
            }
            Ok(schedule.kernel_unchecked(ti).v)
        })
        .collect()
}

impl CondScoreModel {
    pub fn new(arch: ScoreArch, schedule: VpSchedule, seed: u64) -> Result<Self, ScoreError> {
        if arch.flavor != Flavor::Conditional {
            return Err(ScoreError::WrongFlavor);
        }
        let (net, params) = build(arch, schedule, seed)?;
        Ok(Self {
            net,
            params,
            schedule,
            seed,
            iterations: 0,
        })
    }

    /// Network noise prediction; `context = None` selects the marginal
    /// branch (flag 0, context zeroed).
    pub fn predict_noise(&self, xt: &Tensor, context: Option<&Tensor>, t: &[f64]) -> Result<Tensor, ScoreError> {
        let arch = self.net.arch();
        let n = xt.rows();
        let zeros;
        let (ctx, flag) = match context {
            Some(y) => (y, 1),
            None => {
                zeros = Tensor::zeros(&[n, arch.y_dim]);
                (&zeros, 0)
            }
        };
        check_dims(arch, xt, ctx)?;
        let input = Tensor::hcat(&[xt, ctx])?;
        Ok(self.net.predict(&self.params, &input, t, &vec![flag; n])?)
    }

    /// Score estimate `−ε̂ / sqrt(v_t)`; marginal when `context` is `None`,
    /// conditional on `context` otherwise.
    pub fn predict_score(&self, xt: &Tensor, context: Option<&Tensor>, t: &[f64]) -> Result<Tensor, ScoreError> {
        let v = variances(&self.schedule, t)?;
        Ok(noise_to_score(&self.predict_noise(xt, context, t)?, &v))
    }
}

impl ScoreModel for CondScoreModel {
    fn net(&self) -> &ScoreNet {
        &self.net
    }
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn iterations(&self) -> u64 {
        self.iterations
    }
    fn set_iterations(&mut self, it: u64) {
        self.iterations = it;
    }

    /// Per row: with probability `branch_prob` the context branch (flag 1,
    /// context `y0`), otherwise the marginal branch (flag 0, zero context).
    fn loss_batch<R: Rng + ?Sized>(
        &self,
        x0: &Tensor,
        y0: &Tensor,
        sampler: &TimeSampler,
        branch_prob: f64,
        rng: &mut R,
    ) -> Result<LossBatch, ScoreError> {
        let arch = self.net.arch();
        check_dims(arch, x0, y0)?;
        let (n, dx, dy) = (x0.rows(), arch.x_dim, arch.y_dim);
        let flags: Vec<usize> = (0..n).map(|_| usize::from(rng.gen::<f64>() < branch_prob)).collect();
        let diff = diffuse_batch(sampler, x0, rng);
        let mut input = Vec::with_capacity(n * (dx + dy));
        for i in 0..n {
            input.extend_from_slice(diff.xt.row(i));
            if flags[i] == 1 {
                input.extend_from_slice(y0.row(i));
            } else {
                input.extend(std::iter::repeat(0.0).take(dy));
            }
        }
        let row_weight = row_weights(&self.schedule, &diff.t, &diff.weight, &diff.v);
        Ok(LossBatch {
            input: Tensor::matrix(n, dx + dy, input)?,
            t: diff.t,
            weight: diff.weight,
            v: diff.v,
            flags,
            mask: Tensor::filled(&[n, dx], 1.0),
            target: diff.noise,
            row_weight,
        })
    }
}

impl JointScoreModel {
    pub fn new(arch: ScoreArch, schedule: VpSchedule, seed: u64) -> Result<Self, ScoreError> {
        if arch.flavor != Flavor::Joint {
            return Err(ScoreError::WrongFlavor);
        }
        let (net, params) = build(arch, schedule, seed)?;
        Ok(Self {
            net,
            params,
            schedule,
            seed,
            iterations: 0,
        })
    }

    /// Noise prediction for the full `[x, y]` output under `mask`. Frozen
    /// blocks are passed at their clean values by the caller.
    pub fn predict_noise(&self, x: &Tensor, y: &Tensor, t: &[f64], mask: Mask) -> Result<Tensor, ScoreError> {
        check_dims(self.net.arch(), x, y)?;
        let input = Tensor::hcat(&[x, y])?;
        Ok(self
            .net
            .predict(&self.params, &input, t, &vec![mask.flag_index(); x.rows()])?)
    }

    /// Score over `[x, y]`; under `XOnly`/`YOnly` only the diffused block is
    /// meaningful and callers must ignore the other.
    pub fn predict_score(&self, x: &Tensor, y: &Tensor, t: &[f64], mask: Mask) -> Result<Tensor, ScoreError> {
        let v = variances(&self.schedule, t)?;
        Ok(noise_to_score(&self.predict_noise(x, y, t, mask)?, &v))
    }
}

impl ScoreModel for JointScoreModel {
    fn net(&self) -> &ScoreNet {
        &self.net
    }
    fn params(&self) -> &ParamStore {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }
    fn schedule(&self) -> &VpSchedule {
        &self.schedule
    }
    fn seed(&self) -> u64 {
        self.seed
    }
    fn iterations(&self) -> u64 {
        self.iterations
    }
    fn set_iterations(&mut self, it: u64) {
        self.iterations = it;
    }

    /// Per row: with probability `branch_prob` both blocks diffuse (mask
    /// `(1,1)`); otherwise one block, chosen uniformly, diffuses while the
    /// other stays clean. The loss covers diffused blocks only.
    fn loss_batch<R: Rng + ?Sized>(
        &self,
        x0: &Tensor,
        y0: &Tensor,
        sampler: &TimeSampler,
        branch_prob: f64,
        rng: &mut R,
    ) -> Result<LossBatch, ScoreError> {
        let arch = self.net.arch();
        check_dims(arch, x0, y0)?;
        let (n, dx, dy) = (x0.rows(), arch.x_dim, arch.y_dim);
        let masks: Vec<Mask> = (0..n)
            .map(|_| {
                if rng.gen::<f64>() < branch_prob {
                    Mask::Both
                } else if rng.gen::<bool>() {
                    Mask::XOnly
                } else {
                    Mask::YOnly
                }
            })
            .collect();
        let clean = Tensor::hcat(&[x0, y0])?;
        let diff = diffuse_batch(sampler, &clean, rng);
        let width = dx + dy;
        let mut input = Vec::with_capacity(n * width);
        let mut target = Vec::with_capacity(n * width);
        let mut mask = Vec::with_capacity(n * width);
        for (i, m) in masks.iter().enumerate() {
            for j in 0..width {
                let diffused = if j < dx { m.diffuses_x() } else { m.diffuses_y() };
                if diffused {
                    input.push(diff.xt.get(i, j));
                    target.push(diff.noise.get(i, j));
                    mask.push(1.0);
                } else {
                    input.push(clean.get(i, j));
                    target.push(0.0);
                    mask.push(0.0);
                }
            }
        }
        let row_weight = row_weights(&self.schedule, &diff.t, &diff.weight, &diff.v);
        Ok(LossBatch {
            input: Tensor::matrix(n, width, input)?,
            t: diff.t,
            weight: diff.weight,
            v: diff.v,
            flags: masks.iter().map(|m| m.flag_index()).collect(),
            target: Tensor::matrix(n, width, target)?,
            mask: Tensor::matrix(n, width, mask)?,
            row_weight,
        })
    }
}
