use std::collections::VecDeque;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::models::{LossBatch, ScoreModel};
use super::ScoreError;
use crate::data::PairedSamples;
use crate::nn::{Adam, AdamConfig, EmaShadow, NnError, ParamStore, Tape, Tensor};
use crate::sde::{TimeProposal, TimeSampler};

const RUNNING_WINDOW: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Probability of the context branch (conditional) or of diffusing both
    /// blocks (joint).
    pub branch_prob: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: u64,
    pub ema_momentum: f64,
    pub seed: u64,
    /// Fraction of the training set held out for loss monitoring.
    pub validation_fraction: f64,
    pub proposal: TimeProposal,
    /// Iterations between history records and validation evaluations.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            branch_prob: 0.5,
            learning_rate: 1e-3,
            batch_size: 128,
            iterations: 50_000,
            ema_momentum: 0.999,
            seed: 0,
            validation_fraction: 0.05,
            proposal: TimeProposal::Importance,
            eval_every: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: &str| Err(ScoreError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.branch_prob) {
            return bad("branch probability must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.ema_momentum) {
            return bad("EMA momentum must lie in [0, 1)");
        }
        if !(0.0..0.5).contains(&self.validation_fraction) {
            return bad("validation fraction must lie in [0, 0.5)");
        }
        if self.eval_every == 0 {
            return bad("eval_every must be positive");
        }
        Ok(())
    }
}

/// Training trace. `history` holds `(iteration, running mean of the last
/// 1000 batch losses)`; validation losses are on a fixed held-out batch.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: u64,
    pub history: Vec<(u64, f64)>,
    pub validation: Vec<(u64, f64)>,
    pub final_validation_ema: Option<f64>,
    pub final_validation_raw: Option<f64>,
}

/// Divergence carries the EMA weights as of the last finite step.
pub struct TrainError<M> {
    pub error: ScoreError,
    pub last_good: Option<Box<M>>,
}

impl<M> fmt::Debug for TrainError<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainError")
            .field("error", &self.error)
            .field("has_last_good", &self.last_good.is_some())
            .finish()
    }
}

impl<M> fmt::Display for TrainError<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.error.fmt(f)
    }
}

impl<M> std::error::Error for TrainError<M> {}

impl<M> From<ScoreError> for TrainError<M> {
    fn from(error: ScoreError) -> Self {
        Self { error, last_good: None }
    }
}

impl<M> From<NnError> for TrainError<M> {
    fn from(e: NnError) -> Self {
        ScoreError::from(e).into()
    }
}

/// Records `mean_i row_weight_i ‖mask_i ⊙ (ε̂_i − ε_i)‖²` on the tape.
pub fn weighted_noise_loss(tape: &mut Tape, pred: crate::nn::Var, batch: &LossBatch) -> Result<crate::nn::Var, NnError> {
    let target = tape.input(batch.target.clone())?;
    let mask = tape.input(batch.mask.clone())?;
    let rw = tape.input(Tensor::matrix(batch.row_weight.len(), 1, batch.row_weight.clone())?)?;
    let diff = tape.sub(pred, target)?;
    let diff = tape.mul(diff, mask)?;
    let sq = tape.square(diff)?;
    let rows = tape.sum_cols(sq)?;
    let weighted = tape.scale_rows(rows, rw)?;
    tape.mean(weighted)
}

fn eval_loss<M: ScoreModel>(model: &M, params: &ParamStore, batch: &LossBatch) -> Result<f64, ScoreError> {
    let pred = model.net().predict(params, &batch.input, &batch.t, &batch.flags)?;
    Ok(batch.loss_of(&pred))
}

fn divergence(iteration: u64, loss: f64, batch: &LossBatch) -> ScoreError {
    let t_min = batch.t.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = batch.t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let input_norm = batch.input.data().iter().map(|v| v * v).sum::<f64>().sqrt();
    ScoreError::Diverged {
        iteration,
        loss,
        t_min,
        t_max,
        input_norm,
    }
}

/// Adam on the denoising objective with an EMA shadow; returns the model
/// carrying the EMA weights.
pub fn train<M: ScoreModel>(
    mut model: M,
    data: &PairedSamples,
    config: &TrainConfig,
) -> Result<(M, TrainReport), TrainError<M>> {
    config.validate()?;
    if data.len() < 2 {
        return Err(ScoreError::Config("need at least two samples".into()).into());
    }
    let sampler = TimeSampler::new(*model.schedule(), config.proposal);
    let mut split_rng = ChaCha8Rng::seed_from_u64(config.seed);
    split_rng.set_stream(1);
    let (train_set, val_set) = if config.validation_fraction > 0.0 {
        let (a, b) = data.split(config.validation_fraction, &mut split_rng)?;
        (a, Some(b))
    } else {
        (data.clone(), None)
    };
    let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed);
    val_rng.set_stream(2);
    let val_batch = match &val_set {
        Some(v) => Some(model.loss_batch(&v.x, &v.y, &sampler, config.branch_prob, &mut val_rng)?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(3);

    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate), model.params());
    let mut ema = EmaShadow::new(model.params(), config.ema_momentum);
    let mut report = TrainReport::default();
    let mut window: VecDeque<f64> = VecDeque::with_capacity(RUNNING_WINDOW);
    let mut window_sum = 0.0;
    let n = train_set.len();
    let bs = config.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let start = model.iterations();

    for it in 0..config.iterations {
        if cursor + bs > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + bs];
        cursor += bs;
        let x0 = train_set.x.select_rows(idx)?;
        let y0 = train_set.y.select_rows(idx)?;
        let batch = model.loss_batch(&x0, &y0, &sampler, config.branch_prob, &mut rng)?;

        let mut tape = Tape::new();
        let step = (|| -> Result<(f64, crate::nn::Gradients), NnError> {
            let pred = model.net().forward(&mut tape, model.params(), &batch.input, &batch.t, &batch.flags)?;
            let loss = weighted_noise_loss(&mut tape, pred, &batch)?;
            let value = tape.value(loss).data()[0];
            let grads = tape.backward(loss, model.params())?;
            Ok((value, grads))
        })();
        let diverged = |loss: f64, model: &M, ema: &EmaShadow| {
            let mut good = model.clone();
            // Shadow shapes always match the live store.
            ema.write_to(good.params_mut()).ok();
            good.set_iterations(start + it);
            TrainError {
                error: divergence(start + it, loss, &batch),
                last_good: Some(Box::new(good)),
            }
        };
        let (loss, grads) = match step {
            Ok(v) if v.0.is_finite() => v,
            Ok(v) => return Err(diverged(v.0, &model, &ema)),
            Err(NnError::NonFinite { .. }) | Err(NnError::NonFiniteGradient { .. }) => {
                return Err(diverged(f64::NAN, &model, &ema))
            }
            Err(e) => return Err(e.into()),
        };
        if !grads.is_finite() {
            return Err(diverged(loss, &model, &ema));
        }
        adam.step(model.params_mut(), &grads)?;
        ema.update(model.params())?;

        if window.len() == RUNNING_WINDOW {
            window_sum -= window.pop_front().unwrap_or(0.0);
        }
        window.push_back(loss);
        window_sum += loss;
        let done = it + 1;
        if done % config.eval_every == 0 || done == config.iterations {
            report.history.push((start + done, window_sum / window.len() as f64));
            if let Some(vb) = &val_batch {
                let mut shadow = model.params().clone();
                ema.write_to(&mut shadow)?;
                report.validation.push((start + done, eval_loss(&model, &shadow, vb)?));
            }
        }
        log::trace!("iteration {} loss {loss:.5}", start + done);
    }

    if let Some(vb) = &val_batch {
        report.final_validation_raw = Some(eval_loss(&model, model.params(), vb)?);
    }
    ema.write_to(model.params_mut())?;
    if let Some(vb) = &val_batch {
        report.final_validation_ema = Some(eval_loss(&model, model.params(), vb)?);
    }
    model.set_iterations(start + config.iterations);
    report.iterations = model.iterations();
    Ok((model, report))
}
