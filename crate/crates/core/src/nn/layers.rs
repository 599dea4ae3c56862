use rand::Rng;

use super::{NnError, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Relu,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var, NnError> {
        match self {
            Activation::Silu => tape.silu(x),
            Activation::Relu => tape.relu(x),
        }
    }
}

/// Affine map `x W + b` with `W: [in, out]`.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    /// Fan-in scaled uniform weights in `±sqrt(6 / fan_in)`, zero bias.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let bound = (6.0 / fan_in as f64).sqrt();
        let w: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        let weight = store.register(
            format!("{name}.weight"),
            Tensor::matrix(fan_in, fan_out, w).expect("linear weight shape"),
        );
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[1, fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    /// Same layout with all weights and biases zero.
    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        let weight = store.register(format!("{name}.weight"), Tensor::zeros(&[fan_in, fan_out]));
        let bias = store.register(format!("{name}.bias"), Tensor::zeros(&[1, fan_out]));
        Self {
            weight,
            bias,
            fan_in,
            fan_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let w = tape.param(store, self.weight)?;
        let b = tape.param(store, self.bias)?;
        let xw = tape.matmul(x, w)?;
        tape.add_bias(xw, b)
    }
}

/// Pre-activation residual block `h + L2(act(L1(act(h))))`; preserves width.
#[derive(Clone, Copy, Debug)]
pub struct ResidualBlock {
    pub first: Linear,
    pub second: Linear,
    pub activation: Activation,
}

impl ResidualBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        Self {
            first: Linear::new(store, &format!("{name}.0"), width, width, rng),
            second: Linear::new(store, &format!("{name}.1"), width, width, rng),
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, h: Var) -> Result<Var, NnError> {
        let a = self.activation.apply(tape, h)?;
        let a = self.first.forward(tape, store, a)?;
        let a = self.activation.apply(tape, a)?;
        let a = self.second.forward(tape, store, a)?;
        tape.add(h, a)
    }
}

/// Plain feed-forward stack: hidden layers with activation, linear head.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Vec<Linear>,
    pub head: Linear,
    pub activation: Activation,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        widths: &[usize],
        output: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let mut hidden = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for (i, &w) in widths.iter().enumerate() {
            hidden.push(Linear::new(store, &format!("{name}.{i}"), fan_in, w, rng));
            fan_in = w;
        }
        let head = Linear::new(store, &format!("{name}.head"), fan_in, output, rng);
        Self {
            hidden,
            head,
            activation,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var, NnError> {
        let mut h = x;
        for layer in &self.hidden {
            h = layer.forward(tape, store, h)?;
            h = self.activation.apply(tape, h)?;
        }
        self.head.forward(tape, store, h)
    }
}
