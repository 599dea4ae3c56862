use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BaselineError, BaselineEstimate, BaselineVariant};
use crate::data::PairedSamples;
use crate::nn::{Activation, Adam, AdamConfig, Mlp, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CriticConfig {
    pub hidden_layers: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// InfoNCE scores all `B²` pairs of a batch, so it uses a smaller one.
    pub infonce_batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    /// Evaluations without a new best validation bound before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub mine_ema: f64,
    pub seed: u64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 3,
            width: 64,
            learning_rate: 5e-4,
            batch_size: 128,
            infonce_batch_size: 64,
            max_steps: 20_000,
            eval_every: 250,
            patience: 20,
            validation_fraction: 0.1,
            mine_ema: 0.99,
            seed: 0,
        }
    }
}

impl CriticConfig {
    fn validate(&self) -> Result<(), BaselineError> {
        let bad = |m: &str| Err(BaselineError::Config(m.into()));
        if self.hidden_layers == 0 || self.width == 0 {
            return bad("critic needs at least one hidden layer of positive width");
        }
        if self.batch_size < 2 || self.infonce_batch_size < 2 {
            return bad("batch sizes must be at least 2");
        }
        if self.eval_every == 0 || self.max_steps == 0 {
            return bad("max_steps and eval_every must be positive");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must lie in (0, 1)");
        }
        if !(self.mine_ema > 0.0 && self.mine_ema < 1.0) {
            return bad("mine_ema must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Scalar ReLU MLP on the concatenation `[x, y]`.
#[derive(Clone, Debug)]
pub struct Critic {
    mlp: Mlp,
    params: ParamStore,
    x_dim: usize,
    y_dim: usize,
    infonce_batch: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticReport {
    pub steps: usize,
    pub best_step: usize,
    pub best_validation: f64,
    /// `(step, validation bound)` at every evaluation.
    pub validation: Vec<(usize, f64)>,
    pub stopped_early: bool,
}

fn pairs(x: &Tensor, y: &Tensor, yi: impl Iterator<Item = usize>) -> Result<Tensor, BaselineError> {
    let (m, n) = (x.cols(), y.cols());
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, j) in yi.enumerate() {
        data.extend_from_slice(x.row(i));
        data.extend_from_slice(y.row(j));
        rows += 1;
    }
    Ok(Tensor::matrix(rows, m + n, data)?)
}

/// All `B²` rows `[x_i, y_j]`, row `i·B + j`.
fn all_pairs(x: &Tensor, y: &Tensor) -> Result<Tensor, BaselineError> {
    let b = x.rows();
    let (m, n) = (x.cols(), y.cols());
    let mut data = Vec::with_capacity(b * b * (m + n));
    for i in 0..b {
        for j in 0..b {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(j));
        }
    }
    Ok(Tensor::matrix(b * b, m + n, data)?)
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mx + (v.iter().map(|a| (a - mx).exp()).sum::<f64>() / v.len() as f64).ln()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
}

impl Critic {
    pub fn new(x_dim: usize, y_dim: usize, config: &CriticConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut params = ParamStore::new();
        let widths = vec![config.width; config.hidden_layers];
        let mlp = Mlp::new(&mut params, "critic", x_dim + y_dim, &widths, 1, Activation::Relu, rng);
        Self {
            mlp,
            params,
            x_dim,
            y_dim,
            infonce_batch: config.infonce_batch_size,
        }
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    fn record(&self, tape: &mut Tape, input: Tensor) -> Result<Var, BaselineError> {
        let x = tape.input(input)?;
        Ok(self.mlp.forward(tape, &self.params, x)?)
    }

    /// Critic values on rows `[x, y]`, evaluated in chunks without gradients.
    pub fn values(&self, input: &Tensor) -> Result<Vec<f64>, BaselineError> {
        const CHUNK: usize = 8192;
        let mut out = Vec::with_capacity(input.rows());
        let mut start = 0;
        while start < input.rows() {
            let end = (start + CHUNK).min(input.rows());
            let mut tape = Tape::new();
            let v = self.record(&mut tape, input.slice_rows(start, end)?)?;
            out.extend_from_slice(tape.value(v).data());
            start = end;
        }
        Ok(out)
    }

    fn check(&self, data: &PairedSamples) -> Result<(), BaselineError> {
        if data.x_dim() != self.x_dim || data.y_dim() != self.y_dim {
            return Err(BaselineError::Config(format!(
                "critic expects dims ({}, {}), got ({}, {})",
                self.x_dim,
                self.y_dim,
                data.x_dim(),
                data.y_dim()
            )));
        }
        if data.len() < 2 {
            return Err(BaselineError::Config("need at least two evaluation points".into()));
        }
        Ok(())
    }

    /// The bound on a whole data set with its standard error. Product-of-
    /// marginals pairs are `(x_i, y_{i+1})`, a fixed derangement.
    fn bound(&self, variant: BaselineVariant, data: &PairedSamples) -> Result<(f64, f64), BaselineError> {
        self.check(data)?;
        let n = data.len();
        if variant == BaselineVariant::InfoNce {
            let b = self.infonce_batch.min(n);
            let mut chunks = Vec::new();
            let mut start = 0;
            while start + b <= n {
                let (x, y) = (data.x.slice_rows(start, start + b)?, data.y.slice_rows(start, start + b)?);
                let f = self.values(&all_pairs(&x, &y)?)?;
                let v: f64 = f
                    .chunks(b)
                    .enumerate()
                    .map(|(i, row)| row[i] - log_mean_exp(row))
                    .sum::<f64>()
                    / b as f64;
                chunks.push(v);
                start += b;
            }
            let (m, var) = mean_var(&chunks);
            return Ok((m, (var / chunks.len() as f64).sqrt()));
        }
        let fp = self.values(&pairs(&data.x, &data.y, 0..n)?)?;
        let fq = self.values(&pairs(&data.x, &data.y, (0..n).map(|i| (i + 1) % n))?)?;
        let (mp, vp) = mean_var(&fp);
        match variant {
            BaselineVariant::Nwj => {
                let e: Vec<f64> = fq.iter().map(|f| (f - 1.0).exp()).collect();
                let (me, ve) = mean_var(&e);
                Ok((mp - me, ((vp + ve) / n as f64).sqrt()))
            }
            _ => {
                // delta method on log of the mean, scaled by the max for stability
                let lme = log_mean_exp(&fq);
                let e: Vec<f64> = fq.iter().map(|f| (f - lme).exp()).collect();
                let (_, ve) = mean_var(&e);
                Ok((mp - lme, ((vp + ve) / n as f64).sqrt()))
            }
        }
    }
}

/// Bound value on held-out data.
pub fn estimate(
    variant: BaselineVariant,
    critic: Option<&Critic>,
    test: &PairedSamples,
) -> Result<BaselineEstimate, BaselineError> {
    if !variant.is_neural() {
        return Err(BaselineError::NotNeural { variant });
    }
    let critic = critic.ok_or(BaselineError::MissingCritic { variant })?;
    let (mean, std_error) = critic.bound(variant, test)?;
    Ok(BaselineEstimate {
        variant,
        mean,
        std_error,
        n_points: test.len(),
    })
}

struct Step {
    loss: Var,
    /// `log mean exp` of the marginal scores, for the MINE average.
    log_partition: Option<f64>,
}

fn dv_parts(
    critic: &Critic,
    tape: &mut Tape,
    x: &Tensor,
    y: &Tensor,
    perm: &[usize],
) -> Result<(Var, Var, usize), BaselineError> {
    let b = x.rows();
    let mut input = pairs(x, y, 0..b)?;
    input = Tensor::new(
        vec![2 * b, input.cols()],
        [input.into_data(), pairs(x, y, perm.iter().copied())?.into_data()].concat(),
    )?;
    let f = critic.record(tape, input)?;
    let idx: Vec<usize> = (0..b).collect();
    let fp = tape.gather(f, &idx)?;
    let idx: Vec<usize> = (b..2 * b).collect();
    let fq = tape.gather(f, &idx)?;
    Ok((fp, fq, b))
}

fn step_loss(
    variant: BaselineVariant,
    critic: &Critic,
    tape: &mut Tape,
    x: &Tensor,
    y: &Tensor,
    perm: &[usize],
    log_ema: Option<f64>,
    alpha: f64,
) -> Result<Step, BaselineError> {
    match variant {
        BaselineVariant::InfoNce => {
            let b = x.rows();
            let f = critic.record(tape, all_pairs(x, y)?)?;
            let diag: Vec<usize> = (0..b).map(|i| i * b + i).collect();
            let d = tape.gather(f, &diag)?;
            let s = tape.reshape(f, vec![b, b])?;
            let lse = tape.logsumexp_rows(s)?;
            let gap = tape.sub(lse, d)?;
            let loss = tape.mean(gap)?;
            Ok(Step {
                loss,
                log_partition: None,
            })
        }
        BaselineVariant::Nwj => {
            let (fp, fq, _) = dv_parts(critic, tape, x, y, perm)?;
            let shifted = tape.add_scalar(fq, -1.0)?;
            let e = tape.exp(shifted)?;
            let me = tape.mean(e)?;
            let mp = tape.mean(fp)?;
            let loss = tape.sub(me, mp)?;
            Ok(Step {
                loss,
                log_partition: None,
            })
        }
        BaselineVariant::Dv => {
            let (fp, fq, b) = dv_parts(critic, tape, x, y, perm)?;
            let row = tape.reshape(fq, vec![1, b])?;
            let lse = tape.logsumexp_rows(row)?;
            let lse = tape.reshape(lse, vec![1])?;
            let mp = tape.mean(fp)?;
            let loss = tape.sub(lse, mp)?;
            Ok(Step {
                loss,
                log_partition: None,
            })
        }
        BaselineVariant::Mine => {
            let (fp, fq, _) = dv_parts(critic, tape, x, y, perm)?;
            let lme = log_mean_exp(tape.value(fq).data());
            let log_ema = match log_ema {
                None => lme,
                Some(prev) => log_add_exp(prev + alpha.ln(), lme + (1.0 - alpha).ln()),
            };
            // gradient of mean(e^f) / ema, i.e. the bias-corrected DV gradient
            let shifted = tape.add_scalar(fq, -log_ema)?;
            let e = tape.exp(shifted)?;
            let me = tape.mean(e)?;
            let mp = tape.mean(fp)?;
            let loss = tape.sub(me, mp)?;
            Ok(Step {
                loss,
                log_partition: Some(log_ema),
            })
        }
        BaselineVariant::Ksg { .. } => Err(BaselineError::NotNeural { variant }),
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Adam on the variant's bound with early stopping on a validation split;
/// returns the critic at its best validation bound.
pub fn train_critic(
    variant: BaselineVariant,
    data: &PairedSamples,
    config: &CriticConfig,
) -> Result<(Critic, CriticReport), BaselineError> {
    if !variant.is_neural() {
        return Err(BaselineError::NotNeural { variant });
    }
    config.validate()?;
    if data.len() < 4 {
        return Err(BaselineError::Config("need at least four training samples".into()));
    }
    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(config.seed);
        r.set_stream(s);
        r
    };
    let (train_set, val_set) = data.split(config.validation_fraction, &mut stream(1))?;
    let mut critic = Critic::new(data.x_dim(), data.y_dim(), config, &mut stream(2));
    let mut rng = stream(3);

    let bs = match variant {
        BaselineVariant::InfoNce => config.infonce_batch_size,
        _ => config.batch_size,
    }
    .min(train_set.len());
    let mut adam = Adam::new(AdamConfig::with_lr(config.learning_rate), &critic.params);
    let mut report = CriticReport {
        best_validation: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut best: Option<ParamStore> = None;
    let mut since_best = 0;
    let mut log_ema = None;
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut cursor = n;
    let mut perm: Vec<usize> = (0..bs).collect();

    for step in 1..=config.max_steps {
        if cursor + bs > n {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..cursor + bs];
        cursor += bs;
        let (x, y) = (train_set.x.select_rows(idx)?, train_set.y.select_rows(idx)?);
        perm.shuffle(&mut rng);

        let mut tape = Tape::new();
        let s = step_loss(variant, &critic, &mut tape, &x, &y, &perm, log_ema, config.mine_ema)?;
        let finite = tape.value(s.loss).data()[0].is_finite();
        let grads = if finite {
            Some(tape.backward(s.loss, &critic.params)?)
        } else {
            None
        };
        match grads {
            Some(g) if g.is_finite() => adam.step(&mut critic.params, &g)?,
            _ => {
                if best.is_none() {
                    return Err(BaselineError::Diverged { step });
                }
                log::warn!("{variant} critic diverged at step {step}; keeping the best validation state");
                report.stopped_early = true;
                break;
            }
        }
        log_ema = s.log_partition;
        report.steps = step;

        if step % config.eval_every == 0 || step == config.max_steps {
            let (v, _) = critic.bound(variant, &val_set)?;
            report.validation.push((step, v));
            if v.is_finite() && v > report.best_validation {
                report.best_validation = v;
                report.best_step = step;
                best = Some(critic.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience {
                    report.stopped_early = true;
                    break;
                }
            }
        }
    }
    if let Some(p) = best {
        critic.params = p;
    }
    Ok((critic, report))
}
