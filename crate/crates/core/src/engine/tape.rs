//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Tape`] records every operation applied to its variables. Leaves are
//! either parameters (identified by [`ParamId`], gradients are reported for
//! them) or constants. Calling [`Tape::backward`] consumes the tape and walks
//! the record from the loss back to the leaves exactly once.

use super::{EngineError, Gradients, ParamId, ParamSet, Tensor};
use crate::scalar::{sigmoid, Scalar};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op<S> {
    Leaf(Option<ParamId>),
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    /// `scale * x + shift`
    ScaleShift(Var, S),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    SliceRows { input: Var, start: usize },
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    Bce { probs: Var, targets: Vec<S> },
    Clamp { input: Var, lo: S, hi: S },
}

#[derive(Debug, Clone)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Record of a forward computation.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self { nodes: Vec::new() }
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        // Ops on constants keep only their value.
        let op = if requires_grad { op } else { Op::Leaf(None) };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf(None), false)
    }

    /// A trainable leaf whose gradient is reported under `id`.
    pub fn param(&mut self, id: ParamId, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf(Some(id)), true)
    }

    /// Registers every tensor of `params`, either as trainable leaves or, when
    /// `trainable` is false, as constants.
    pub fn params(&mut self, params: &ParamSet<S>, trainable: bool) -> Vec<Var> {
        params
            .iter()
            .map(|(id, _, t)| {
                if trainable {
                    self.param(id, t.clone())
                } else {
                    self.constant(t.clone())
                }
            })
            .collect()
    }

    fn dims2(&self, v: Var) -> Result<(usize, usize), EngineError> {
        let s = self.value(v).shape();
        if s.len() != 2 {
            return Err(EngineError::RankMismatch {
                expected: 2,
                shape: s.to_vec(),
            });
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), EngineError> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(EngineError::ShapeMismatch {
                op,
                left: sa.to_vec(),
                right: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        let (m, k) = self.dims2(a)?;
        let (k2, n) = self.dims2(b)?;
        if k != k2 {
            return Err(EngineError::ShapeMismatch {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let mut out = vec![S::zero(); m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, EngineError> {
        let (m, n) = self.dims2(a)?;
        let out = transpose(self.value(a).data(), m, n);
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::from_parts(vec![n, m], out), Op::Transpose(a), rg))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(S, S) -> S, op: Op<S>) -> Var {
        let va = self.value(a);
        let out = va
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = va.shape().to_vec();
        let rg = self.any_grad(&[a, b]);
        self.push(Tensor::from_parts(shape, out), op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, EngineError> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    /// Adds the `1 × n` row `bias` to every row of the `m × n` matrix `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, EngineError> {
        let (m, n) = self.dims2(a)?;
        let (br, bn) = self.dims2(bias)?;
        if br != 1 || bn != n {
            return Err(EngineError::ShapeMismatch {
                op: "add_row",
                left: vec![m, n],
                right: vec![br, bn],
            });
        }
        let b = self.value(bias).data();
        let out = self
            .value(a)
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&x, &y)| x + y))
            .collect();
        let rg = self.any_grad(&[a, bias]);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::AddRow(a, bias), rg))
    }

    /// `x W + b` for a row-batch `x`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, EngineError> {
        let xw = self.matmul(x, w)?;
        self.add_row(xw, b)
    }

    /// `scale * a + shift`, elementwise with constant coefficients.
    pub fn scale_shift(&mut self, a: Var, scale: S, shift: S) -> Var {
        let va = self.value(a);
        let out = va.data().iter().map(|&x| scale * x + shift).collect();
        let shape = va.shape().to_vec();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::from_parts(shape, out), Op::ScaleShift(a, scale), rg)
    }

    pub fn scale(&mut self, a: Var, scale: S) -> Var {
        self.scale_shift(a, scale, S::zero())
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.scale_shift(a, -S::one(), S::one())
    }

    fn map(&mut self, a: Var, f: impl Fn(S) -> S, op: Op<S>) -> Var {
        let va = self.value(a);
        let out = va.data().iter().map(|&x| f(x)).collect();
        let shape = va.shape().to_vec();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::from_parts(shape, out), op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, S::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > S::zero() { x } else { S::zero() }, Op::Relu(a))
    }

    /// Clamps entries into `[lo, hi]`; the gradient is zero where clamping bites.
    pub fn clamp(&mut self, a: Var, lo: S, hi: S) -> Var {
        self.map(a, |x| x.max(lo).min(hi), Op::Clamp { input: a, lo, hi })
    }

    /// Concatenates 2-D tensors along `axis` (0 = rows, 1 = columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, EngineError> {
        let first = *inputs.first().ok_or(EngineError::EmptyConcat)?;
        let (mut rows, mut cols) = self.dims2(first)?;
        for &v in &inputs[1..] {
            let (r, c) = self.dims2(v)?;
            let ok = match axis {
                0 => c == cols,
                1 => r == rows,
                _ => return Err(EngineError::InvalidAxis(axis)),
            };
            if !ok {
                return Err(EngineError::ShapeMismatch {
                    op: "concat",
                    left: vec![rows, cols],
                    right: vec![r, c],
                });
            }
        }
        let mut out = Vec::new();
        match axis {
            0 => {
                rows = 0;
                for &v in inputs {
                    rows += self.value(v).rows();
                    out.extend_from_slice(self.value(v).data());
                }
            }
            1 => {
                cols = inputs.iter().map(|&v| self.value(v).cols()).sum();
                out.reserve(rows * cols);
                for r in 0..rows {
                    for &v in inputs {
                        out.extend_from_slice(self.value(v).row_slice(r));
                    }
                }
            }
            _ => return Err(EngineError::InvalidAxis(axis)),
        }
        let rg = self.any_grad(inputs);
        let op = Op::Concat {
            inputs: inputs.to_vec(),
            axis,
        };
        Ok(self.push(Tensor::from_parts(vec![rows, cols], out), op, rg))
    }

    /// Rows `start .. start + len` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, EngineError> {
        let (m, n) = self.dims2(a)?;
        if len == 0 || start + len > m {
            return Err(EngineError::SliceOutOfRange { start, len, rows: m });
        }
        let out = self.value(a).data()[start * n..(start + len) * n].to_vec();
        let rg = self.any_grad(&[a]);
        Ok(self.push(
            Tensor::from_parts(vec![len, n], out),
            Op::SliceRows { input: a, start },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: S = self.value(a).data().iter().copied().sum();
        let rg = self.any_grad(&[a]);
        self.push(Tensor::from_parts(vec![1, 1], vec![s]), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let s: S = va.data().iter().copied().sum::<S>() / S::of(va.numel() as f64);
        let rg = self.any_grad(&[a]);
        self.push(Tensor::from_parts(vec![1, 1], vec![s]), Op::Mean(a), rg)
    }

    /// Column means of an `m × n` batch, giving `1 × n`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var, EngineError> {
        let (m, n) = self.dims2(a)?;
        let mut out = vec![S::zero(); n];
        for row in self.value(a).data().chunks(n) {
            for (o, &x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        let inv = S::one() / S::of(m as f64);
        out.iter_mut().for_each(|o| *o *= inv);
        let rg = self.any_grad(&[a]);
        Ok(self.push(Tensor::from_parts(vec![1, n], out), Op::MeanRows(a), rg))
    }

    /// Elementwise binary cross-entropy `-(y ln p + (1-y) ln(1-p))`.
    ///
    /// Every probability must lie strictly inside `(0, 1)`.
    pub fn bce(&mut self, probs: Var, targets: &[S]) -> Result<Var, EngineError> {
        let vp = self.value(probs);
        if vp.numel() != targets.len() {
            return Err(EngineError::ShapeMismatch {
                op: "bce",
                left: vp.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if let Some((index, &p)) = vp
            .data()
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > S::zero() && p < S::one()))
        {
            return Err(EngineError::ProbabilityDomain {
                index,
                value: p.as_f64(),
            });
        }
        let out = vp
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &y)| -(y * p.ln() + (S::one() - y) * (S::one() - p).ln()))
            .collect();
        let shape = vp.shape().to_vec();
        let rg = self.any_grad(&[probs]);
        let op = Op::Bce {
            probs,
            targets: targets.to_vec(),
        };
        Ok(self.push(Tensor::from_parts(shape, out), op, rg))
    }

    /// Back-propagates from the scalar `loss`, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<S>, EngineError> {
        if self.nodes.is_empty() {
            return Err(EngineError::EmptyTape);
        }
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(EngineError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        let mut grads = Gradients::default();
        if !self.nodes[loss.0].requires_grad {
            return Ok(grads);
        }
        let mut adj: Vec<Option<Vec<S>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf(Some(id)) => {
                    grads.insert(*id, Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                Op::Leaf(None) => {}
                Op::MatMul(a, b) => {
                    let (m, k) = dims(self.value(*a));
                    let n = self.value(*b).cols();
                    if self.requires_grad(*a) {
                        // dA = dC · Bᵀ
                        let bt = transpose(self.value(*b).data(), k, n);
                        let mut da = vec![S::zero(); m * k];
                        matmul_acc(&g, &bt, &mut da, m, n, k);
                        accumulate(&mut adj, *a, da);
                    }
                    if self.requires_grad(*b) {
                        // dB = Aᵀ · dC
                        let at = transpose(self.value(*a).data(), m, k);
                        let mut db = vec![S::zero(); k * n];
                        matmul_acc(&at, &g, &mut db, k, m, n);
                        accumulate(&mut adj, *b, db);
                    }
                }
                Op::Transpose(a) => {
                    let (m, n) = dims(self.value(*a));
                    accumulate(&mut adj, *a, transpose(&g, n, m));
                }
                Op::Add(a, b) => {
                    if self.requires_grad(*a) {
                        accumulate(&mut adj, *a, g.clone());
                    }
                    if self.requires_grad(*b) {
                        accumulate(&mut adj, *b, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.requires_grad(*a) {
                        accumulate(&mut adj, *a, g.clone());
                    }
                    if self.requires_grad(*b) {
                        accumulate(&mut adj, *b, g.into_iter().map(|x| -x).collect());
                    }
                }
                Op::Mul(a, b) => {
                    if self.requires_grad(*a) {
                        let d = zip(&g, self.value(*b).data(), |x, y| x * y);
                        accumulate(&mut adj, *a, d);
                    }
                    if self.requires_grad(*b) {
                        let d = zip(&g, self.value(*a).data(), |x, y| x * y);
                        accumulate(&mut adj, *b, d);
                    }
                }
                Op::AddRow(a, bias) => {
                    let n = self.value(*bias).cols();
                    if self.requires_grad(*bias) {
                        let mut db = vec![S::zero(); n];
                        for row in g.chunks(n) {
                            for (o, &x) in db.iter_mut().zip(row) {
                                *o += x;
                            }
                        }
                        accumulate(&mut adj, *bias, db);
                    }
                    if self.requires_grad(*a) {
                        accumulate(&mut adj, *a, g);
                    }
                }
                Op::ScaleShift(a, scale) => {
                    let s = *scale;
                    accumulate(&mut adj, *a, g.into_iter().map(|x| x * s).collect());
                }
                Op::Sigmoid(a) => {
                    let d = zip(&g, node.value.data(), |x, y| x * y * (S::one() - y));
                    accumulate(&mut adj, *a, d);
                }
                Op::Tanh(a) => {
                    let d = zip(&g, node.value.data(), |x, y| x * (S::one() - y * y));
                    accumulate(&mut adj, *a, d);
                }
                Op::Relu(a) => {
                    let d = zip(&g, node.value.data(), |x, y| {
                        if y > S::zero() {
                            x
                        } else {
                            S::zero()
                        }
                    });
                    accumulate(&mut adj, *a, d);
                }
                Op::Clamp { input, lo, hi } => {
                    let d = zip(&g, self.value(*input).data(), |x, v| {
                        if v >= *lo && v <= *hi {
                            x
                        } else {
                            S::zero()
                        }
                    });
                    accumulate(&mut adj, *input, d);
                }
                Op::Concat { inputs, axis } => match axis {
                    0 => {
                        let mut offset = 0;
                        for &v in inputs {
                            let len = self.value(v).numel();
                            if self.requires_grad(v) {
                                accumulate(&mut adj, v, g[offset..offset + len].to_vec());
                            }
                            offset += len;
                        }
                    }
                    _ => {
                        let total = node.value.cols();
                        let mut col = 0;
                        for &v in inputs {
                            let c = self.value(v).cols();
                            if self.requires_grad(v) {
                                let d = g
                                    .chunks(total)
                                    .flat_map(|row| row[col..col + c].iter().copied())
                                    .collect();
                                accumulate(&mut adj, v, d);
                            }
                            col += c;
                        }
                    }
                },
                Op::SliceRows { input, start } => {
                    let src = self.value(*input);
                    let n = src.cols();
                    let mut d = vec![S::zero(); src.numel()];
                    d[start * n..start * n + g.len()].copy_from_slice(&g);
                    accumulate(&mut adj, *input, d);
                }
                Op::Sum(a) => {
                    let n = self.value(*a).numel();
                    accumulate(&mut adj, *a, vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.value(*a).numel();
                    accumulate(&mut adj, *a, vec![g[0] / S::of(n as f64); n]);
                }
                Op::MeanRows(a) => {
                    let (m, _) = dims(self.value(*a));
                    let inv = S::one() / S::of(m as f64);
                    let d = (0..m).flat_map(|_| g.iter().map(|&x| x * inv)).collect();
                    accumulate(&mut adj, *a, d);
                }
                Op::Bce { probs, targets } => {
                    // d/dp = (p - y) / (p (1 - p))
                    let p = self.value(*probs).data();
                    let d = g
                        .iter()
                        .zip(p)
                        .zip(targets)
                        .map(|((&x, &p), &y)| x * (p - y) / (p * (S::one() - p)))
                        .collect();
                    accumulate(&mut adj, *probs, d);
                }
            }
        }
        Ok(grads)
    }
}

fn dims<S: Scalar>(t: &Tensor<S>) -> (usize, usize) {
    (t.rows(), t.cols())
}

fn accumulate<S: Scalar>(adj: &mut [Option<Vec<S>>], v: Var, d: Vec<S>) {
    match &mut adj[v.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(d) {
                *a += b;
            }
        }
        slot => *slot = Some(d),
    }
}

fn zip<S: Scalar>(a: &[S], b: &[S], f: impl Fn(S, S) -> S) -> Vec<S> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// `out += A (m×k) · B (k×n)`
fn matmul_acc<S: Scalar>(a: &[S], b: &[S], out: &mut [S], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == S::zero() {
                continue;
            }
            for (o, &y) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += x * y;
            }
        }
    }
}

fn transpose<S: Scalar>(a: &[S], m: usize, n: usize) -> Vec<S> {
    let mut out = vec![S::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}
