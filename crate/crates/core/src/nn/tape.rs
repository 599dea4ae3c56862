//! Reverse-mode differentiation over a linear tape of recorded primitives.
//!
//! A [`Tape`] is built fresh for every forward pass. Constants enter through
//! [`Tape::input`] and never receive gradients; parameters enter through
//! [`Tape::param`] and are the only leaves reported by [`Tape::backward`].
//! Nodes are appended in evaluation order, so the tape is always a valid
//! topological order and the backward sweep is a single reverse scan.

use super::{NnError, ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// Keeps `sigmoid(x)` for the backward pass.
    Silu(Var, Vec<f64>),
    Relu(Var),
    Exp(Var),
    Square(Var),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    SumAll(Var),
    MeanAll(Var),
    SumCols(Var),
    LogSumExpRows(Var),
    Reshape(Var),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::AddBias(..) => "add_bias",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::ScaleRows(..) => "scale_rows",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Silu(..) => "silu",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Square(..) => "square",
            Op::Concat(..) => "concat",
            Op::Gather(..) => "gather",
            Op::SumAll(..) => "sum",
            Op::MeanAll(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::LogSumExpRows(..) => "logsumexp_rows",
            Op::Reshape(..) => "reshape",
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients of a scalar with respect to every parameter of a [`ParamStore`].
///
/// Parameters that did not take part in the recorded computation get zeros.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Tensor::is_finite)
    }

    /// Euclidean norm over all gradient entries.
    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data().iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: Vec<Option<Var>>,
    consumed: bool,
}

fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_strides: (isize, isize),
    b: &[f64],
    b_strides: (isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the slices hold at least the accessed extents asserted above,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op) -> Result<Var, NnError> {
        if !value.is_finite() {
            return Err(NnError::NonFinite { op: op.name() });
        }
        let needs_grad = match &op {
            Op::Input => false,
            Op::Param(_) => true,
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::ScaleRows(a, b) => self.needs(*a) || self.needs(*b),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Silu(a, _)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Square(a)
            | Op::Gather(a, _)
            | Op::SumAll(a)
            | Op::MeanAll(a)
            | Op::SumCols(a)
            | Op::LogSumExpRows(a)
            | Op::Reshape(a) => self.needs(*a),
            Op::Concat(parts) => parts.iter().any(|p| self.needs(*p)),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records a constant. Constants never receive gradients.
    pub fn input(&mut self, value: Tensor) -> Result<Var, NnError> {
        self.push(value, Op::Input)
    }

    /// Records a parameter leaf. Repeated calls for the same id share a node,
    /// so gradients from every use accumulate.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var, NnError> {
        if self.param_nodes.len() <= id.index() {
            self.param_nodes.resize(id.index() + 1, None);
        }
        if let Some(v) = self.param_nodes[id.index()] {
            return Ok(v);
        }
        let v = self.push(store.get(id).clone(), Op::Param(id))?;
        self.param_nodes[id.index()] = Some(v);
        Ok(v)
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> NnError {
        NnError::ShapeMismatch {
            op,
            left: self.value(a).shape().to_vec(),
            right: self.value(b).shape().to_vec(),
        }
    }

    fn require_matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize), NnError> {
        let t = self.value(v);
        if t.rank() != 2 {
            return Err(NnError::ShapeMismatch {
                op,
                left: t.shape().to_vec(),
                right: vec![0, 0],
            });
        }
        Ok((t.rows(), t.cols()))
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (n, k) = self.require_matrix("matmul", a)?;
        let (k2, m) = self.require_matrix("matmul", b)?;
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = vec![0.0; n * m];
        gemm(
            n,
            k,
            m,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (m as isize, 1),
            &mut out,
            0.0,
        );
        self.push(Tensor::matrix(n, m, out)?, Op::MatMul(a, b))
    }

    /// Adds a bias row (`[m]` or `[1, m]`) to every row of `[n, m]`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NnError> {
        let m = self.value(a).cols();
        if self.value(bias).len() != m {
            return Err(self.mismatch("add_bias", a, bias));
        }
        let b = self.value(bias).data();
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(m) {
            row.iter_mut().zip(b).for_each(|(o, bv)| *o += bv);
        }
        self.push(out, Op::AddBias(a, bias))
    }

    fn zip_same(
        &mut self,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(self.mismatch(op.name(), a, b));
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_same(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_same(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip_same(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Multiplies row `i` of `[n, m]` by entry `i` of `[n, 1]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Result<Var, NnError> {
        let (n, m) = (self.value(a).rows(), self.value(a).cols());
        if self.value(s).len() != n {
            return Err(self.mismatch("scale_rows", a, s));
        }
        let mut out = self.value(a).clone();
        let sv = self.value(s).data();
        for (row, &k) in out.data_mut().chunks_mut(m).zip(sv) {
            row.iter_mut().for_each(|o| *o *= k);
        }
        self.push(out, Op::ScaleRows(a, s))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var, NnError> {
        let out = self.value(a).map(|x| c * x);
        self.push(out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var, NnError> {
        let out = self.value(a).map(|x| x + c);
        self.push(out, Op::AddScalar(a))
    }

    /// `x * sigmoid(x)`.
    pub fn silu(&mut self, a: Var) -> Result<Var, NnError> {
        let x = self.value(a);
        let sig: Vec<f64> = x.data().iter().map(|&v| sigmoid(v)).collect();
        let data = x.data().iter().zip(&sig).map(|(v, s)| v * s).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        self.push(out, Op::Silu(a, sig))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var, NnError> {
        let out = self.value(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let tensors: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
        let out = Tensor::hcat(&tensors)?;
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Row lookup `table[idx[i]]`, the embedding primitive.
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Result<Var, NnError> {
        let rows = self.value(table).rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(NnError::ShapeMismatch {
                op: "gather",
                left: self.value(table).shape().to_vec(),
                right: vec![bad],
            });
        }
        let out = self.value(table).select_rows(idx)?;
        self.push(out, Op::Gather(table, idx.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, NnError> {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NnError> {
        let t = self.value(a);
        let out = Tensor::scalar(t.sum() / t.len() as f64);
        self.push(out, Op::MeanAll(a))
    }

    /// Row sums `[n, m] -> [n, 1]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, NnError> {
        let t = self.value(a);
        let m = t.cols();
        let data: Vec<f64> = t.data().chunks(m).map(|r| r.iter().sum()).collect();
        let out = Tensor::matrix(t.rows(), 1, data)?;
        self.push(out, Op::SumCols(a))
    }

    /// Row-wise `log(sum(exp(x)))`, computed after subtracting the row max.
    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var, NnError> {
        let t = self.value(a);
        let m = t.cols();
        let data: Vec<f64> = t
            .data()
            .chunks(m)
            .map(|r| {
                let mx = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                mx + r.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
            })
            .collect();
        let out = Tensor::matrix(t.rows(), 1, data)?;
        self.push(out, Op::LogSumExpRows(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, NnError> {
        let out = self.value(a).clone().reshape(shape)?;
        self.push(out, Op::Reshape(a))
    }

    /// Reverse sweep from a scalar output. The tape can be swept only once.
    pub fn backward(&mut self, output: Var, store: &ParamStore) -> Result<Gradients, NnError> {
        if self.consumed {
            return Err(NnError::TapeConsumed);
        }
        if self.value(output).len() != 1 {
            return Err(NnError::NotScalar(self.value(output).shape().to_vec()));
        }
        self.consumed = true;

        let mut result = Gradients::zeros_like(store);
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::filled(self.value(output).shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let emit = |v: Var, delta: Tensor, grads: &mut Vec<Option<Tensor>>| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc
                        .data_mut()
                        .iter_mut()
                        .zip(delta.data())
                        .for_each(|(a, d)| *a += d),
                    slot => *slot = Some(delta),
                }
            };
            match &node.op {
                Op::Input => {}
                Op::Param(id) => {
                    result.grads[id.index()] = g;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (n, k, m) = (ta.rows(), ta.cols(), tb.cols());
                    if self.needs(*a) {
                        // dA = G · Bᵀ
                        let mut da = vec![0.0; n * k];
                        gemm(n, m, k, g.data(), (m as isize, 1), tb.data(), (1, m as isize), &mut da, 0.0);
                        emit(*a, Tensor::matrix(n, k, da)?, &mut grads);
                    }
                    if self.needs(*b) {
                        // dB = Aᵀ · G
                        let mut db = vec![0.0; k * m];
                        gemm(k, n, m, ta.data(), (1, k as isize), g.data(), (m as isize, 1), &mut db, 0.0);
                        emit(*b, Tensor::matrix(k, m, db)?, &mut grads);
                    }
                }
                Op::AddBias(a, b) => {
                    if self.needs(*b) {
                        let m = g.cols();
                        let mut db = vec![0.0; m];
                        for row in g.data().chunks(m) {
                            db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                        }
                        let shape = self.value(*b).shape().to_vec();
                        emit(*b, Tensor::new(shape, db)?, &mut grads);
                    }
                    emit(*a, g, &mut grads);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        emit(*b, g.clone(), &mut grads);
                    }
                    emit(*a, g, &mut grads);
                }
                Op::Sub(a, b) => {
                    if self.needs(*b) {
                        emit(*b, g.map(|v| -v), &mut grads);
                    }
                    emit(*a, g, &mut grads);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.needs(*a) {
                        let d = g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
                        emit(*a, Tensor::new(g.shape().to_vec(), d)?, &mut grads);
                    }
                    if self.needs(*b) {
                        let d = g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect();
                        emit(*b, Tensor::new(g.shape().to_vec(), d)?, &mut grads);
                    }
                }
                Op::ScaleRows(a, s) => {
                    let (ta, ts) = (self.value(*a), self.value(*s));
                    let m = ta.cols();
                    if self.needs(*s) {
                        let ds: Vec<f64> = g
                            .data()
                            .chunks(m)
                            .zip(ta.data().chunks(m))
                            .map(|(gr, ar)| gr.iter().zip(ar).map(|(x, y)| x * y).sum())
                            .collect();
                        emit(*s, Tensor::new(ts.shape().to_vec(), ds)?, &mut grads);
                    }
                    if self.needs(*a) {
                        let mut da = g;
                        for (row, &k) in da.data_mut().chunks_mut(m).zip(ts.data()) {
                            row.iter_mut().for_each(|v| *v *= k);
                        }
                        emit(*a, da, &mut grads);
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    emit(*a, g.map(|v| c * v), &mut grads);
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    emit(*a, g.reshape(shape)?, &mut grads);
                }
                Op::Silu(a, sig) => {
                    let x = self.value(*a);
                    let d = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .zip(sig)
                        .map(|((gv, &xv), &s)| gv * s * (1.0 + xv * (1.0 - s)))
                        .collect();
                    emit(*a, Tensor::new(g.shape().to_vec(), d)?, &mut grads);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let d = g
                        .data()
                        .iter()
                        .zip(x.data())
                        .map(|(gv, &xv)| if xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    emit(*a, Tensor::new(g.shape().to_vec(), d)?, &mut grads);
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    let d = g.data().iter().zip(y.data()).map(|(gv, yv)| gv * yv).collect();
                    emit(*a, Tensor::new(g.shape().to_vec(), d)?, &mut grads);
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    let d = g.data().iter().zip(x.data()).map(|(gv, xv)| 2.0 * gv * xv).collect();
                    emit(*a, Tensor::new(g.shape().to_vec(), d)?, &mut grads);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = self.value(*p).cols();
                        if self.needs(*p) {
                            emit(*p, g.slice_cols(start, start + w)?, &mut grads);
                        }
                        start += w;
                    }
                }
                Op::Gather(table, idx) => {
                    let tt = self.value(*table);
                    let mut d = Tensor::zeros(tt.shape());
                    for (r, &i) in idx.iter().enumerate() {
                        d.row_mut(i).iter_mut().zip(g.row(r)).for_each(|(a, b)| *a += b);
                    }
                    emit(*table, d, &mut grads);
                }
                Op::SumAll(a) => {
                    let gv = g.data()[0];
                    emit(*a, Tensor::filled(self.value(*a).shape(), gv), &mut grads);
                }
                Op::MeanAll(a) => {
                    let t = self.value(*a);
                    let gv = g.data()[0] / t.len() as f64;
                    emit(*a, Tensor::filled(t.shape(), gv), &mut grads);
                }
                Op::SumCols(a) => {
                    let t = self.value(*a);
                    let m = t.cols();
                    let mut d = Tensor::zeros(t.shape());
                    for (row, &gv) in d.data_mut().chunks_mut(m).zip(g.data()) {
                        row.iter_mut().for_each(|v| *v = gv);
                    }
                    emit(*a, d, &mut grads);
                }
                Op::LogSumExpRows(a) => {
                    let x = self.value(*a);
                    let m = x.cols();
                    let mut d = Tensor::zeros(x.shape());
                    for ((drow, xrow), (&lse, &gv)) in d
                        .data_mut()
                        .chunks_mut(m)
                        .zip(x.data().chunks(m))
                        .zip(node.value.data().iter().zip(g.data()))
                    {
                        drow.iter_mut()
                            .zip(xrow)
                            .for_each(|(dv, &xv)| *dv = gv * (xv - lse).exp());
                    }
                    emit(*a, d, &mut grads);
                }
            }
        }
        if !result.is_finite() {
            return Err(NnError::NonFinite { op: "backward" });
        }
        Ok(result)
    }
}
