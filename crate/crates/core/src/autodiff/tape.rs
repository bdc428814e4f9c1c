//! Define-by-run tape for reverse-mode differentiation.
//!
//! Every operation appends a node holding its forward value and enough
//! saved state to run its vector-Jacobian product. Nodes only reference
//! earlier nodes, so walking the tape backwards is a valid reverse
//! topological order.

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise unary operations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Sigmoid,
    Tanh,
    /// Negative-side slope.
    LeakyRelu(f64),
    Exp,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Unary(Unary, Var),
    Binary(Binary, Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Conv1d {
        x: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
    },
    TimeStep(Var, usize),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    RowSum(Var),
    SoftmaxRows(Var),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Bce(Var, Vec<f64>),
    MeanAbsRelErr(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Clamp applied to probabilities inside the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

/// Append-only record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when `v` does not require grad or is unreachable from the loss.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros shaped like `like` when it has none.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

fn dims2(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    t.dims2().ok_or_else(|| Error::InvalidShape {
        shape: t.shape().to_vec(),
        reason: format!("{op} expects a matrix"),
    })
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
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

impl Unary {
    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sigmoid => sigmoid(x),
            Unary::Tanh => x.tanh(),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Exp => x.exp(),
            Unary::Scale(s) => s * x,
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Tanh => 1.0 - y * y,
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Exp => y,
            Unary::Scale(s) => s,
        }
    }
}

// out[m×n] += a[m×k] · b[k×n]
fn gemm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
}

// out[m×n] += a[m×k] · b[n×k]ᵀ
fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let dot: f64 = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            out[i * n + j] += dot;
        }
    }
}

// out[m×n] += a[k×m]ᵀ · b[k×n]
fn gemm_tn(a: &[f64], b: &[f64], k: usize, m: usize, n: usize, out: &mut [f64]) {
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
}

/// Shape bookkeeping for conv1d: (batch, len, channels, batched).
fn conv_input_dims(x: &Tensor) -> Result<(usize, usize, usize, bool)> {
    match *x.shape() {
        [l, c] => Ok((1, l, c, false)),
        [b, l, c] => Ok((b, l, c, true)),
        _ => Err(Error::InvalidShape {
            shape: x.shape().to_vec(),
            reason: "conv1d expects [L, C] or [B, L, C]".into(),
        }),
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn unary(&mut self, op: Unary, x: Var) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&a| op.apply(a)).collect();
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(x);
        self.push(value, Op::Unary(op, x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(Unary::Sigmoid, x)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(Unary::Tanh, x)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(Unary::LeakyRelu(slope), x)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(Unary::Exp, x)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(Unary::Scale(s), x)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let value = if av.shape() == bv.shape() {
            let data = av
                .data()
                .iter()
                .zip(bv.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::from_parts(av.shape().to_vec(), data)
        } else if bv.is_scalar() {
            let y = bv.data()[0];
            let data = av.data().iter().map(|&x| f(x, y)).collect();
            Tensor::from_parts(av.shape().to_vec(), data)
        } else if av.is_scalar() {
            let x = av.data()[0];
            let data = bv.data().iter().map(|&y| f(x, y)).collect();
            Tensor::from_parts(bv.shape().to_vec(), data)
        } else {
            return Err(mismatch(name, av, bv));
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Binary(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    /// `x[m×n] + bias[n]`, broadcasting the bias over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let (m, n) = dims2(xv, "add_row")?;
        if bv.len() != n {
            return Err(mismatch("add_row", xv, bv));
        }
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let value = Tensor::from_parts(vec![m, n], data);
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddRow(x, bias), rg))
    }

    /// `x[m×n] ⊙ col[m]`, scaling each row by one entry.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var> {
        let (xv, cv) = (self.value(x), self.value(col));
        let (m, n) = dims2(xv, "mul_col")?;
        if cv.len() != m {
            return Err(mismatch("mul_col", xv, cv));
        }
        let mut data = xv.data().to_vec();
        for (row, &c) in data.chunks_mut(n).zip(cv.data()) {
            row.iter_mut().for_each(|o| *o *= c);
        }
        let value = Tensor::from_parts(vec![m, n], data);
        let rg = self.rg(x) || self.rg(col);
        Ok(self.push(value, Op::MulCol(x, col), rg))
    }

    /// `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = dims2(av, "matmul")?;
        let (k2, n) = dims2(bv, "matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", av, bv));
        }
        let mut out = vec![0.0; m * n];
        gemm_nn(av.data(), bv.data(), m, k, n, &mut out);
        let value = Tensor::from_parts(vec![m, n], out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    /// `a[m×k] · b[n×k]ᵀ`; weights stored as `[out, in]` use this.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let (m, k) = dims2(av, "matmul_nt")?;
        let (n, k2) = dims2(bv, "matmul_nt")?;
        if k != k2 {
            return Err(mismatch("matmul_nt", av, bv));
        }
        let mut out = vec![0.0; m * n];
        gemm_nt(av.data(), bv.data(), m, k, n, &mut out);
        let value = Tensor::from_parts(vec![m, n], out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMulNt(a, b), rg))
    }

    /// Valid (unpadded) 1-D convolution along the sequence axis.
    ///
    /// `x` is `[L, C]` or `[B, L, C]`, `kernels` is `[F, K, C]`, `bias` is
    /// `[F]`. Output is `[L_out, F]` (or `[B, L_out, F]`) with
    /// `L_out = (L - K) / stride + 1`.
    pub fn conv1d(&mut self, x: Var, kernels: Var, bias: Var, stride: usize) -> Result<Var> {
        let (xv, kv, bv) = (self.value(x), self.value(kernels), self.value(bias));
        let (batch, len, ch, batched) = conv_input_dims(xv)?;
        let &[filters, k, kc] = kv.shape() else {
            return Err(Error::InvalidShape {
                shape: kv.shape().to_vec(),
                reason: "conv1d kernels must be [F, K, C]".into(),
            });
        };
        if kc != ch {
            return Err(mismatch("conv1d", xv, kv));
        }
        if bv.len() != filters {
            return Err(mismatch("conv1d", kv, bv));
        }
        if stride == 0 {
            return Err(Error::InvalidConfig("conv1d stride must be >= 1".into()));
        }
        if len < k {
            return Err(Error::SequenceShorterThanKernel { len, kernel: k });
        }
        let out_len = (len - k) / stride + 1;
        let window = k * ch;
        let mut out = vec![0.0; batch * out_len * filters];
        for b in 0..batch {
            let xb = &xv.data()[b * len * ch..(b + 1) * len * ch];
            for t in 0..out_len {
                let patch = &xb[t * stride * ch..t * stride * ch + window];
                for f in 0..filters {
                    let w = &kv.data()[f * window..(f + 1) * window];
                    let dot: f64 = patch.iter().zip(w).map(|(p, q)| p * q).sum();
                    out[(b * out_len + t) * filters + f] = dot + bv.data()[f];
                }
            }
        }
        let shape = if batched {
            vec![batch, out_len, filters]
        } else {
            vec![out_len, filters]
        };
        let value = Tensor::from_parts(shape, out);
        let rg = self.rg(x) || self.rg(kernels) || self.rg(bias);
        Ok(self.push(
            value,
            Op::Conv1d {
                x,
                kernels,
                bias,
                stride,
            },
            rg,
        ))
    }

    /// Slice `[B, T, C] -> [B, C]` at time `t`.
    pub fn time_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let xv = self.value(x);
        let &[b, steps, c] = xv.shape() else {
            return Err(Error::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: "time_step expects [B, T, C]".into(),
            });
        };
        if t >= steps {
            return Err(Error::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: format!("time index {t} out of range"),
            });
        }
        let mut out = Vec::with_capacity(b * c);
        for bi in 0..b {
            let start = (bi * steps + t) * c;
            out.extend_from_slice(&xv.data()[start..start + c]);
        }
        let value = Tensor::from_parts(vec![b, c], out);
        let rg = self.rg(x);
        Ok(self.push(value, Op::TimeStep(x, t), rg))
    }

    /// Columns `start..start + width` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = dims2(xv, "slice_cols")?;
        if width == 0 || start + width > n {
            return Err(Error::InvalidShape {
                shape: xv.shape().to_vec(),
                reason: format!("column slice {start}..{} out of range", start + width),
            });
        }
        let mut out = Vec::with_capacity(m * width);
        for row in xv.data().chunks(n) {
            out.extend_from_slice(&row[start..start + width]);
        }
        let value = Tensor::from_parts(vec![m, width], out);
        let rg = self.rg(x);
        Ok(self.push(value, Op::SliceCols(x, start), rg))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(Error::EmptySequence)?;
        let (m, _) = dims2(self.value(first), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = dims2(self.value(p), "concat_cols")?;
            if pm != m {
                return Err(mismatch("concat_cols", self.value(first), self.value(p)));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::from_parts(vec![m, total], out);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Per-row sum, `[m, n] -> [m, 1]`.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = dims2(xv, "row_sum")?;
        let out = xv.data().chunks(n).map(|r| r.iter().sum()).collect();
        let value = Tensor::from_parts(vec![m, 1], out);
        let rg = self.rg(x);
        Ok(self.push(value, Op::RowSum(x), rg))
    }

    /// Numerically stable softmax along each row.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (m, n) = dims2(xv, "softmax_rows")?;
        let mut out = Vec::with_capacity(m * n);
        for row in xv.data().chunks(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            out.extend(exps.iter().map(|e| e / z));
        }
        let value = Tensor::from_parts(vec![m, n], out);
        let rg = self.rg(x);
        Ok(self.push(value, Op::SoftmaxRows(x), rg))
    }

    /// Inverted dropout: survivors are scaled by `1 / (1 - p)` so that
    /// inference is the identity. Returns `x` itself when inactive.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - p);
        let xv = self.value(x);
        let mask: Vec<f64> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::from_parts(xv.shape().to_vec(), data);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Dropout(x, mask), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let value = Tensor::scalar(xv.sum() / xv.len() as f64);
        let rg = self.rg(x);
        self.push(value, Op::Mean(x), rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// Mean binary cross-entropy of probabilities `p` against 0/1 targets,
    /// with `p` clamped to `[BCE_EPS, 1 - BCE_EPS]`.
    pub fn bce(&mut self, p: Var, targets: &[f64]) -> Result<Var> {
        let pv = self.value(p);
        if pv.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "bce",
                lhs: pv.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let n = targets.len() as f64;
        let total: f64 = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| {
                let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                y * pc.ln() + (1.0 - y) * (1.0 - pc).ln()
            })
            .sum();
        let value = Tensor::scalar(-total / n);
        let rg = self.rg(p);
        Ok(self.push(value, Op::Bce(p, targets.to_vec()), rg))
    }

    /// `mean(|pred - y| / y)`; targets must be positive.
    pub fn mean_abs_rel_err(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        let pv = self.value(pred);
        if pv.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "mean_abs_rel_err",
                lhs: pv.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        if let Some(bad) = targets.iter().find(|&&y| !(y > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "relative error needs positive targets, got {bad}"
            )));
        }
        let n = targets.len() as f64;
        let total: f64 = pv
            .data()
            .iter()
            .zip(targets)
            .map(|(p, y)| (p - y).abs() / y)
            .sum();
        let value = Tensor::scalar(total / n);
        let rg = self.rg(pred);
        Ok(self.push(value, Op::MeanAbsRelErr(pred, targets.to_vec()), rg))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if self.rg(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                g.filter(|_| self.nodes[i].requires_grad)
                    .map(|d| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), d))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        if !self.rg(v) {
            return None;
        }
        let n = self.nodes[v.0].value.len();
        Some(
            grads[v.0]
                .get_or_insert_with(|| vec![0.0; n])
                .as_mut_slice(),
        )
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Unary(op, x) => {
                let xv = self.value(*x);
                if let Some(s) = self.slot(grads, *x) {
                    for (((s, &gi), &xi), &yi) in s.iter_mut().zip(g).zip(xv.data()).zip(out.data())
                    {
                        *s += gi * op.derivative(xi, yi);
                    }
                }
            }
            Op::Binary(kind, a, b) => self.propagate_binary(*kind, *a, *b, g, grads),
            Op::AddRow(x, bias) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, gi)| *s += gi);
                }
                let n = self.value(*bias).len();
                if let Some(s) = self.slot(grads, *bias) {
                    for row in g.chunks(n) {
                        s.iter_mut().zip(row).for_each(|(s, gi)| *s += gi);
                    }
                }
            }
            Op::MulCol(x, col) => {
                let (xv, cv) = (self.value(*x), self.value(*col));
                let n = xv.len() / cv.len();
                if let Some(s) = self.slot(grads, *x) {
                    for ((srow, grow), &c) in s.chunks_mut(n).zip(g.chunks(n)).zip(cv.data()) {
                        srow.iter_mut().zip(grow).for_each(|(s, gi)| *s += gi * c);
                    }
                }
                if let Some(s) = self.slot(grads, *col) {
                    for ((sc, grow), xrow) in s.iter_mut().zip(g.chunks(n)).zip(xv.data().chunks(n))
                    {
                        *sc += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2().unwrap();
                let (_, n) = bv.dims2().unwrap();
                if let Some(s) = self.slot(grads, *a) {
                    gemm_nt(g, bv.data(), m, n, k, s);
                }
                if let Some(s) = self.slot(grads, *b) {
                    gemm_tn(av.data(), g, m, k, n, s);
                }
            }
            Op::MatMulNt(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = av.dims2().unwrap();
                let (n, _) = bv.dims2().unwrap();
                if let Some(s) = self.slot(grads, *a) {
                    gemm_nn(g, bv.data(), m, n, k, s);
                }
                if let Some(s) = self.slot(grads, *b) {
                    gemm_tn(g, av.data(), m, n, k, s);
                }
            }
            Op::Conv1d {
                x,
                kernels,
                bias,
                stride,
            } => self.propagate_conv(*x, *kernels, *bias, *stride, g, grads),
            Op::TimeStep(x, t) => {
                let &[b, steps, c] = self.value(*x).shape() else {
                    unreachable!()
                };
                if let Some(s) = self.slot(grads, *x) {
                    for bi in 0..b {
                        let start = (bi * steps + t) * c;
                        s[start..start + c]
                            .iter_mut()
                            .zip(&g[bi * c..(bi + 1) * c])
                            .for_each(|(s, gi)| *s += gi);
                    }
                }
            }
            Op::SliceCols(x, start) => {
                let (_, n) = self.value(*x).dims2().unwrap();
                let (_, w) = out.dims2().unwrap();
                if let Some(s) = self.slot(grads, *x) {
                    for (srow, grow) in s.chunks_mut(n).zip(g.chunks(w)) {
                        srow[*start..start + w]
                            .iter_mut()
                            .zip(grow)
                            .for_each(|(s, gi)| *s += gi);
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (_, total) = out.dims2().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let (_, w) = self.value(p).dims2().unwrap();
                    if let Some(s) = self.slot(grads, p) {
                        for (srow, grow) in s.chunks_mut(w).zip(g.chunks(total)) {
                            srow.iter_mut()
                                .zip(&grow[offset..offset + w])
                                .for_each(|(s, gi)| *s += gi);
                        }
                    }
                    offset += w;
                }
            }
            Op::RowSum(x) => {
                let (_, n) = self.value(*x).dims2().unwrap();
                if let Some(s) = self.slot(grads, *x) {
                    for (srow, &gi) in s.chunks_mut(n).zip(g) {
                        srow.iter_mut().for_each(|s| *s += gi);
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let (_, n) = out.dims2().unwrap();
                if let Some(s) = self.slot(grads, *x) {
                    for ((srow, grow), yrow) in
                        s.chunks_mut(n).zip(g.chunks(n)).zip(out.data().chunks(n))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((s, gi), yi) in srow.iter_mut().zip(grow).zip(yrow) {
                            *s += yi * (gi - dot);
                        }
                    }
                }
            }
            Op::Dropout(x, mask) => {
                if let Some(s) = self.slot(grads, *x) {
                    for ((s, gi), m) in s.iter_mut().zip(g).zip(mask) {
                        *s += gi * m;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::Mean(x) => {
                let n = self.value(*x).len() as f64;
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().for_each(|s| *s += g[0] / n);
                }
            }
            Op::Reshape(x) => {
                if let Some(s) = self.slot(grads, *x) {
                    s.iter_mut().zip(g).for_each(|(s, gi)| *s += gi);
                }
            }
            Op::Bce(p, targets) => {
                let pv = self.value(*p);
                let n = targets.len() as f64;
                if let Some(s) = self.slot(grads, *p) {
                    for ((s, &pi), &y) in s.iter_mut().zip(pv.data()).zip(targets) {
                        if (BCE_EPS..=1.0 - BCE_EPS).contains(&pi) {
                            *s += g[0] * (-(y / pi) + (1.0 - y) / (1.0 - pi)) / n;
                        }
                    }
                }
            }
            Op::MeanAbsRelErr(pred, targets) => {
                let pv = self.value(*pred);
                let n = targets.len() as f64;
                if let Some(s) = self.slot(grads, *pred) {
                    for ((s, &p), &y) in s.iter_mut().zip(pv.data()).zip(targets) {
                        let sign = if p > y {
                            1.0
                        } else if p < y {
                            -1.0
                        } else {
                            0.0
                        };
                        *s += g[0] * sign / (y * n);
                    }
                }
            }
        }
    }

    fn propagate_binary(
        &self,
        kind: Binary,
        a: Var,
        b: Var,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (av, bv) = (self.value(a), self.value(b));
        // Each operand's local derivative, indexed by output position.
        let da = |j: usize| match kind {
            Binary::Add | Binary::Sub => 1.0,
            Binary::Mul => bv.data()[if bv.is_scalar() { 0 } else { j }],
        };
        let db = |j: usize| match kind {
            Binary::Add => 1.0,
            Binary::Sub => -1.0,
            Binary::Mul => av.data()[if av.is_scalar() { 0 } else { j }],
        };
        let broadcast_a = av.len() != g.len();
        let broadcast_b = bv.len() != g.len();
        if let Some(s) = self.slot(grads, a) {
            if broadcast_a {
                s[0] += g.iter().enumerate().map(|(j, gi)| gi * da(j)).sum::<f64>();
            } else {
                s.iter_mut()
                    .enumerate()
                    .for_each(|(j, s)| *s += g[j] * da(j));
            }
        }
        if let Some(s) = self.slot(grads, b) {
            if broadcast_b {
                s[0] += g.iter().enumerate().map(|(j, gi)| gi * db(j)).sum::<f64>();
            } else {
                s.iter_mut()
                    .enumerate()
                    .for_each(|(j, s)| *s += g[j] * db(j));
            }
        }
    }

    fn propagate_conv(
        &self,
        x: Var,
        kernels: Var,
        bias: Var,
        stride: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
    ) {
        let (xv, kv) = (self.value(x), self.value(kernels));
        let (batch, len, ch, _) = conv_input_dims(xv).expect("validated in forward");
        let &[filters, k, _] = kv.shape() else {
            unreachable!()
        };
        let out_len = (len - k) / stride + 1;
        let window = k * ch;
        if let Some(s) = self.slot(grads, x) {
            for b in 0..batch {
                for t in 0..out_len {
                    let base = b * len * ch + t * stride * ch;
                    let patch = &mut s[base..base + window];
                    for f in 0..filters {
                        let gi = g[(b * out_len + t) * filters + f];
                        let w = &kv.data()[f * window..(f + 1) * window];
                        patch.iter_mut().zip(w).for_each(|(p, wv)| *p += gi * wv);
                    }
                }
            }
        }
        if let Some(s) = self.slot(grads, kernels) {
            for b in 0..batch {
                for t in 0..out_len {
                    let base = b * len * ch + t * stride * ch;
                    let patch = &xv.data()[base..base + window];
                    for f in 0..filters {
                        let gi = g[(b * out_len + t) * filters + f];
                        s[f * window..(f + 1) * window]
                            .iter_mut()
                            .zip(patch)
                            .for_each(|(w, p)| *w += gi * p);
                    }
                }
            }
        }
        if let Some(s) = self.slot(grads, bias) {
            for row in g.chunks(filters) {
                s.iter_mut().zip(row).for_each(|(s, gi)| *s += gi);
            }
        }
    }
}
