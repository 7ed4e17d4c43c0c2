//! Reverse-mode differentiation over a Wengert tape.
//!
//! A [`Tape`] records every forward operation in construction order; since
//! each operation only consumes already-recorded nodes, the recording order
//! is a topological order and [`Tape::backward`] is a single reverse sweep
//! that visits each node exactly once.

use crate::error::{OmniBindError, Result};
use crate::tensor::{
    self, l2_normalize_rows, rowwise_softmax, Tensor, NORM_FLOOR, PROB_FLOOR,
};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    SoftmaxRows(Var, f64),
    L2NormalizeRows(Var),
    Gelu(Var),
    MeanRows(Var),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    KlRows(Var, Var),
    CrossEntropyRows {
        logits: Var,
        temperature: f64,
        targets: Vec<usize>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if any was accumulated.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }
}

/// Operation recorder with reverse-mode gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input. Gradients flow into it only when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Record a constant input (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, value: Tensor, op: Op, parent: Var) -> Var {
        let rg = self.nodes[parent.0].requires_grad;
        self.push(value, op, rg)
    }

    fn push_binary(&mut self, value: Tensor, op: Op, a: Var, b: Var) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push_binary(value, Op::Matmul(a, b), a, b))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push_unary(value, Op::Transpose(x), x)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push_binary(value, Op::Add(a, b), a, b))
    }

    /// Matrix plus broadcast 1xC bias row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let value = self.value(x).add_bias(self.value(bias))?;
        Ok(self.push_binary(value, Op::AddBias(x, bias), x, bias))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push_binary(value, Op::Hadamard(a, b), a, b))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).scale(factor);
        self.push_unary(value, Op::Scale(x, factor), x)
    }

    pub fn rowwise_softmax(&mut self, x: Var, temperature: f64) -> Result<Var> {
        let value = rowwise_softmax(self.value(x), temperature)?;
        Ok(self.push_unary(value, Op::SoftmaxRows(x, temperature), x))
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let value = l2_normalize_rows(self.value(x))?;
        Ok(self.push_unary(value, Op::L2NormalizeRows(x), x))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(tensor::gelu);
        self.push_unary(value, Op::Gelu(x), x)
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let value = self.value(x).mean_rows();
        self.push_unary(value, Op::MeanRows(x), x)
    }

    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var> {
        let blocks: Vec<&Tensor> = xs.iter().map(|v| self.value(*v)).collect();
        let value = Tensor::concat_cols(&blocks)?;
        let rg = xs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, Op::ConcatCols(xs.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(x).reshape(rows, cols)?;
        Ok(self.push_unary(value, Op::Reshape(x), x))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::from_vec(1, 1, vec![self.value(x).sum()]).unwrap();
        self.push_unary(value, Op::Sum(x), x)
    }

    /// Mean over rows of KL(p_row || q_row), as a 1x1 node. Both inputs must
    /// be row-stochastic; see [`tensor::kl_rows`] for the conventions.
    pub fn kl_rows(&mut self, p: Var, q: Var) -> Result<Var> {
        let value = tensor::kl_rows(self.value(p), self.value(q))?;
        let value = Tensor::from_vec(1, 1, vec![value]).unwrap();
        Ok(self.push_binary(value, Op::KlRows(p, q), p, q))
    }

    /// Mean over rows of the temperature-scaled cross entropy
    /// `logsumexp(logits[i]/τ) − logits[i][targets[i]]/τ`, as a 1x1 node.
    ///
    /// This is the InfoNCE shape: with `targets = 0..k` on a k×k similarity
    /// matrix it is the matched-pair contrastive loss; with a single row and
    /// target 0 it scores one positive against a negative set.
    pub fn cross_entropy_rows(
        &mut self,
        logits: Var,
        temperature: f64,
        targets: &[usize],
    ) -> Result<Var> {
        if !(temperature > 0.0) {
            return Err(OmniBindError::InvalidTemperature { temperature });
        }
        let l = self.value(logits);
        if targets.len() != l.rows() {
            return Err(OmniBindError::DimensionMismatch {
                what: "cross_entropy_rows targets",
                expected: l.rows(),
                got: targets.len(),
            });
        }
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t >= l.cols() {
                return Err(OmniBindError::DimensionMismatch {
                    what: "cross_entropy_rows target column",
                    expected: l.cols(),
                    got: t,
                });
            }
            let row = l.row(i);
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let lse: f64 = row
                .iter()
                .map(|&v| ((v - max) / temperature).exp())
                .sum::<f64>()
                .ln()
                + max / temperature;
            total += lse - row[t] / temperature;
        }
        let value = Tensor::from_vec(1, 1, vec![total / l.rows() as f64]).unwrap();
        Ok(self.push_unary(
            value,
            Op::CrossEntropyRows {
                logits,
                temperature,
                targets: targets.to_vec(),
            },
            logits,
        ))
    }

    /// Reverse sweep from a scalar loss node. Returns the gradient of the
    /// loss with respect to every node that requires grad.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if !loss_node.value.is_scalar() {
            return Err(OmniBindError::NonScalarLoss {
                shape: loss_node.value.shape(),
            });
        }
        if !loss_node.requires_grad {
            return Err(OmniBindError::DetachedGraph);
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..=loss.0).rev() {
            let Some(out_grad) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &out_grad, &mut grads)?;
            grads[idx] = Some(out_grad);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, delta: Tensor) -> Result<()> {
        if !self.nodes[var.0].requires_grad {
            return Ok(());
        }
        match &mut grads[var.0] {
            Some(existing) => {
                *existing = existing.add(&delta)?;
            }
            slot @ None => *slot = Some(delta),
        }
        Ok(())
    }

    fn propagate(
        &self,
        idx: usize,
        out_grad: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let bt = self.value(*b).transpose();
                self.accumulate(grads, *a, out_grad.matmul(&bt)?)?;
                let at = self.value(*a).transpose();
                self.accumulate(grads, *b, at.matmul(out_grad)?)?;
            }
            Op::Transpose(x) => {
                self.accumulate(grads, *x, out_grad.transpose())?;
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, out_grad.clone())?;
                self.accumulate(grads, *b, out_grad.clone())?;
            }
            Op::AddBias(x, bias) => {
                self.accumulate(grads, *x, out_grad.clone())?;
                // Bias gradient is the column sum of the upstream gradient.
                let mut bias_grad = Tensor::zeros(1, out_grad.cols());
                for i in 0..out_grad.rows() {
                    for (g, &v) in bias_grad.as_mut_slice().iter_mut().zip(out_grad.row(i)) {
                        *g += v;
                    }
                }
                self.accumulate(grads, *bias, bias_grad)?;
            }
            Op::Hadamard(a, b) => {
                self.accumulate(grads, *a, out_grad.hadamard(self.value(*b))?)?;
                self.accumulate(grads, *b, out_grad.hadamard(self.value(*a))?)?;
            }
            Op::Scale(x, factor) => {
                self.accumulate(grads, *x, out_grad.scale(*factor))?;
            }
            Op::SoftmaxRows(x, temperature) => {
                // dx_row = (s ∘ (g − <g, s>)) / τ, with s the softmax output.
                let s = &self.nodes[idx].value;
                let mut dx = Tensor::zeros(s.rows(), s.cols());
                for i in 0..s.rows() {
                    let gs = tensor::dot(out_grad.row(i), s.row(i));
                    for (d, (&sv, &gv)) in dx
                        .row_mut(i)
                        .iter_mut()
                        .zip(s.row(i).iter().zip(out_grad.row(i)))
                    {
                        *d = sv * (gv - gs) / temperature;
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::L2NormalizeRows(x) => {
                // dx_row = (g − <g, y> y) / ||x||, with y the unit output.
                let y = &self.nodes[idx].value;
                let input = self.value(*x);
                let mut dx = Tensor::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let n = tensor::norm(input.row(i)).max(NORM_FLOOR);
                    let gy = tensor::dot(out_grad.row(i), y.row(i));
                    for (d, (&yv, &gv)) in dx
                        .row_mut(i)
                        .iter_mut()
                        .zip(y.row(i).iter().zip(out_grad.row(i)))
                    {
                        *d = (gv - gy * yv) / n;
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::Gelu(x) => {
                let input = self.value(*x);
                let mut dx = out_grad.clone();
                for (d, &v) in dx.as_mut_slice().iter_mut().zip(input.as_slice()) {
                    *d *= tensor::gelu_prime(v);
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::MeanRows(x) => {
                let input = self.value(*x);
                let inv = 1.0 / input.rows() as f64;
                let mut dx = Tensor::zeros(input.rows(), input.cols());
                for i in 0..input.rows() {
                    for (d, &g) in dx.row_mut(i).iter_mut().zip(out_grad.row(0)) {
                        *d = g * inv;
                    }
                }
                self.accumulate(grads, *x, dx)?;
            }
            Op::ConcatCols(xs) => {
                let mut offset = 0;
                for v in xs {
                    let block = self.value(*v);
                    let mut dx = Tensor::zeros(block.rows(), block.cols());
                    for i in 0..block.rows() {
                        dx.row_mut(i)
                            .copy_from_slice(&out_grad.row(i)[offset..offset + block.cols()]);
                    }
                    offset += block.cols();
                    self.accumulate(grads, *v, dx)?;
                }
            }
            Op::Reshape(x) => {
                let (r, c) = self.value(*x).shape();
                self.accumulate(grads, *x, out_grad.reshape(r, c)?)?;
            }
            Op::Sum(x) => {
                let g = out_grad.scalar();
                let input = self.value(*x);
                let dx = Tensor::zeros(input.rows(), input.cols()).map(|_| g);
                self.accumulate(grads, *x, dx)?;
            }
            Op::KlRows(p, q) => {
                let g = out_grad.scalar();
                let pv = self.value(*p);
                let qv = self.value(*q);
                let inv_rows = 1.0 / pv.rows() as f64;
                if self.nodes[p.0].requires_grad {
                    let mut dp = Tensor::zeros(pv.rows(), pv.cols());
                    for i in 0..pv.rows() {
                        for (d, (&pe, &qe)) in dp
                            .row_mut(i)
                            .iter_mut()
                            .zip(pv.row(i).iter().zip(qv.row(i)))
                        {
                            *d = g * inv_rows
                                * ((pe.max(PROB_FLOOR) / qe.max(PROB_FLOOR)).ln() + 1.0);
                        }
                    }
                    self.accumulate(grads, *p, dp)?;
                }
                if self.nodes[q.0].requires_grad {
                    let mut dq = Tensor::zeros(qv.rows(), qv.cols());
                    for i in 0..qv.rows() {
                        for (d, (&pe, &qe)) in dq
                            .row_mut(i)
                            .iter_mut()
                            .zip(pv.row(i).iter().zip(qv.row(i)))
                        {
                            *d = -g * inv_rows * pe / qe.max(PROB_FLOOR);
                        }
                    }
                    self.accumulate(grads, *q, dq)?;
                }
            }
            Op::CrossEntropyRows {
                logits,
                temperature,
                targets,
            } => {
                let g = out_grad.scalar();
                let l = self.value(*logits);
                let scale = g / (l.rows() as f64 * temperature);
                let mut dl = rowwise_softmax(l, *temperature).expect("validated on record");
                for (i, &t) in targets.iter().enumerate() {
                    dl.row_mut(i)[t] -= 1.0;
                }
                self.accumulate(grads, *logits, dl.scale(scale))?;
            }
        }
        Ok(())
    }
}
