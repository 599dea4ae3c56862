use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, Linear, NnError, ParamId, ParamStore, ResidualBlock, Tape, Tensor, Var};

/// Which conditioning scheme the network serves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    /// Scores `x` with `y` as context (flag 1) or a zeroed context (flag 0).
    Conditional,
    /// Scores the concatenation `[x, y]` under a diffusion mask.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreArch {
    pub flavor: Flavor,
    pub x_dim: usize,
    pub y_dim: usize,
    pub width: usize,
    pub blocks: usize,
    pub time_embed_dim: usize,
}

impl ScoreArch {
    /// Width 64, time embedding 64, three residual blocks.
    pub fn small(flavor: Flavor, x_dim: usize, y_dim: usize) -> Self {
        Self {
            flavor,
            x_dim,
            y_dim,
            width: 64,
            blocks: 3,
            time_embed_dim: 64,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.x_dim + self.y_dim
    }

    pub fn output_dim(&self) -> usize {
        match self.flavor {
            Flavor::Conditional => self.x_dim,
            Flavor::Joint => self.x_dim + self.y_dim,
        }
    }

    pub fn flag_count(&self) -> usize {
        match self.flavor {
            Flavor::Conditional => 2,
            Flavor::Joint => 3,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [self.x_dim, self.y_dim, self.width, self.time_embed_dim];
        if dims.contains(&0) || self.time_embed_dim % 2 != 0 {
            return Err(NnError::InvalidShape(dims.to_vec()));
        }
        Ok(())
    }
}

const TIME_SCALE: f64 = 1000.0;
const MAX_PERIOD: f64 = 10_000.0;

/// Sinusoidal features `[sin(s f_i), cos(s f_i)]` of `s = 1000 t`.
pub fn time_embedding(t: &[f64], dim: usize) -> Tensor {
    let half = dim / 2;
    let freqs: Vec<f64> = (0..half)
        .map(|i| (-(MAX_PERIOD.ln()) * i as f64 / half as f64).exp())
        .collect();
    let mut data = Vec::with_capacity(t.len() * dim);
    for &ti in t {
        let s = TIME_SCALE * ti;
        data.extend(freqs.iter().map(|f| (s * f).sin()));
        data.extend(freqs.iter().map(|f| (s * f).cos()));
    }
    Tensor::matrix(t.len(), dim, data).expect("time embedding shape")
}

/// Residual MLP noise predictor.
///
/// `h = W_in [x, y] + silu(W_t emb(t)) + E[flag]`, then `blocks` residual
/// blocks, then a zero-initialised linear head on `silu(h)`.
#[derive(Clone, Debug)]
pub struct ScoreNet {
    arch: ScoreArch,
    input: Linear,
    time: Linear,
    flags: ParamId,
    blocks: Vec<ResidualBlock>,
    head: Linear,
}

impl ScoreNet {
    pub fn new<R: Rng + ?Sized>(arch: ScoreArch, rng: &mut R) -> Result<(Self, ParamStore), NnError> {
        arch.validate()?;
        let mut store = ParamStore::new();
        let input = Linear::new(&mut store, "input", arch.input_dim(), arch.width, rng);
        let time = Linear::new(&mut store, "time", arch.time_embed_dim, arch.width, rng);
        let bound = (6.0 / arch.width as f64).sqrt();
        let table: Vec<f64> = (0..arch.flag_count() * arch.width)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let flags = store.register("flags", Tensor::matrix(arch.flag_count(), arch.width, table)?);
        let blocks = (0..arch.blocks)
            .map(|i| ResidualBlock::new(&mut store, &format!("block{i}"), arch.width, Activation::Silu, rng))
            .collect();
        let head = Linear::zeros(&mut store, "head", arch.width, arch.output_dim());
        Ok((
            Self {
                arch,
                input,
                time,
                flags,
                blocks,
                head,
            },
            store,
        ))
    }

    pub fn arch(&self) -> &ScoreArch {
        &self.arch
    }

    /// Records the forward pass. `input` is `[n, x_dim + y_dim]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        input: &Tensor,
        t: &[f64],
        flags: &[usize],
    ) -> Result<Var, NnError> {
        let n = input.rows();
        if input.cols() != self.arch.input_dim() || t.len() != n || flags.len() != n {
            return Err(NnError::ShapeMismatch {
                op: "score_forward",
                left: input.shape().to_vec(),
                right: vec![t.len(), flags.len(), self.arch.input_dim()],
            });
        }
        let x = tape.input(input.clone())?;
        let emb = tape.input(time_embedding(t, self.arch.time_embed_dim))?;
        let h_in = self.input.forward(tape, store, x)?;
        let h_t = self.time.forward(tape, store, emb)?;
        let h_t = tape.silu(h_t)?;
        let table = tape.param(store, self.flags)?;
        let h_f = tape.gather(table, flags)?;
        let mut h = tape.add(h_in, h_t)?;
        h = tape.add(h, h_f)?;
        for block in &self.blocks {
            h = block.forward(tape, store, h)?;
        }
        let h = tape.silu(h)?;
        self.head.forward(tape, store, h)
    }

    /// Forward pass without keeping a tape, evaluated in row chunks.
    pub fn predict(&self, store: &ParamStore, input: &Tensor, t: &[f64], flags: &[usize]) -> Result<Tensor, NnError> {
        const CHUNK: usize = 4096;
        let n = input.rows();
        if n <= CHUNK {
            let mut tape = Tape::new();
            let out = self.forward(&mut tape, store, input, t, flags)?;
            return Ok(tape.value(out).clone());
        }
        let mut data = Vec::with_capacity(n * self.arch.output_dim());
        let mut start = 0;
        while start < n {
            let end = (start + CHUNK).min(n);
            let chunk = input.slice_rows(start, end)?;
            let mut tape = Tape::new();
            let out = self.forward(&mut tape, store, &chunk, &t[start..end], &flags[start..end])?;
            data.extend_from_slice(tape.value(out).data());
            start = end;
        }
        Tensor::matrix(n, self.arch.output_dim(), data)
    }
}
