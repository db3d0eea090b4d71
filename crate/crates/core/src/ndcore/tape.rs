//! Tensor-level reverse-mode differentiation.
//!
//! A [`GradTape`] records every primitive applied to [`Var`] handles in
//! execution order, so node ids are already a topological order and
//! [`GradTape::backward`] is a single reverse sweep. With tracing disabled the
//! tape still stores forward values (computed by exactly the same kernels) but
//! records no operations.

use std::collections::HashMap;

use super::tensor::{gemm, Tensor};
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking a logarithm.
pub const LOG_CLAMP: f64 = 1e-12;

/// Handle to a node on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Sum,
    Mean,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `[M, N] + [1, N]`, bias broadcast over rows.
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    /// `[M, N] * [1, N]`, row vector broadcast over rows.
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Abs(Var),
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    NllProbs {
        probs: Var,
        targets: Vec<usize>,
        reduction: Reduction,
    },
    Mse {
        pred: Var,
        target: Vec<f64>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax of a 2-D tensor with max subtraction.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let (rows, cols) = x.dims2();
    let mut out = x.data().to_vec();
    for r in 0..rows {
        let row = &mut out[r * cols..(r + 1) * cols];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    Tensor::new(x.shape().to_vec(), out).expect("same shape")
}

/// Gradients of a scalar with respect to every leaf that requires them.
#[derive(Debug, Default)]
pub struct Gradients {
    grads: HashMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v)
    }

    /// Gradient for `v`, panicking if `v` was not a differentiable leaf.
    pub fn wrt(&self, v: Var) -> &Tensor {
        self.grads
            .get(&v)
            .unwrap_or_else(|| panic!("no gradient recorded for {v:?}"))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.remove(&v)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Ordered record of primitive operations.
pub struct GradTape {
    nodes: Vec<Node>,
    tracing: bool,
}

impl Default for GradTape {
    fn default() -> Self {
        Self::new()
    }
}

impl GradTape {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            tracing: true,
        }
    }

    /// A tape that only evaluates; `backward` on it is an error.
    pub fn no_grad() -> Self {
        Self {
            nodes: Vec::new(),
            tracing: false,
        }
    }

    pub fn is_tracing(&self) -> bool {
        self.tracing
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

    /// Differentiable input (a parameter or anything we want ∂/∂ of).
    pub fn param(&mut self, value: Tensor) -> Var {
        let rg = self.tracing;
        self.push(value, Op::Leaf, rg)
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        let (op, requires_grad) = if self.tracing && requires_grad {
            (op, true)
        } else {
            (Op::Leaf, false)
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(id)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (rows, cols) = self.value(a).dims2();
        assert_eq!(self.value(bias).len(), cols, "add_row bias width");
        let b = self.value(bias).data();
        let mut out = self.value(a).data().to_vec();
        for r in 0..rows {
            for (o, bv) in out[r * cols..(r + 1) * cols].iter_mut().zip(b) {
                *o += bv;
            }
        }
        let out = Tensor::matrix(rows, cols, out).expect("shape");
        let rg = self.rg(a) || self.rg(bias);
        self.push(out, Op::AddRow(a, bias), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub shapes");
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// Multiply each row of `a` element-wise by the row vector `r`.
    pub fn mul_row(&mut self, a: Var, r: Var) -> Var {
        let (rows, cols) = self.value(a).dims2();
        assert_eq!(self.value(r).len(), cols, "mul_row width");
        let rv = self.value(r).data();
        let mut out = self.value(a).data().to_vec();
        for i in 0..rows {
            for (o, m) in out[i * cols..(i + 1) * cols].iter_mut().zip(rv) {
                *o *= m;
            }
        }
        let out = Tensor::new(self.value(a).shape().to_vec(), out).expect("shape");
        let rg = self.rg(a) || self.rg(r);
        self.push(out, Op::MulRow(a, r), rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        let rg = self.rg(a);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::abs);
        let rg = self.rg(a);
        self.push(out, Op::Abs(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let out = Tensor::scalar(v.sum() / v.len() as f64);
        let rg = self.rg(a);
        self.push(out, Op::Mean(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = softmax_rows(self.value(a));
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Cross-entropy of row-wise probabilities against class ids, with the
    /// probability floored at [`LOG_CLAMP`] before the logarithm.
    pub fn nll_probs(&mut self, probs: Var, targets: &[usize], reduction: Reduction) -> Var {
        let p = self.value(probs);
        let (rows, cols) = p.dims2();
        assert_eq!(targets.len(), rows, "nll targets length");
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            assert!(t < cols, "class id {t} out of range {cols}");
            loss -= p.at(r, t).max(LOG_CLAMP).ln();
        }
        if reduction == Reduction::Mean {
            loss /= rows as f64;
        }
        let rg = self.rg(probs);
        self.push(
            Tensor::scalar(loss),
            Op::NllProbs {
                probs,
                targets: targets.to_vec(),
                reduction,
            },
            rg,
        )
    }

    /// Mean squared error of a `[B, 1]` (or `[B]`) prediction.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Var {
        let p = self.value(pred);
        assert_eq!(p.len(), target.len(), "mse length");
        let loss = p
            .data()
            .iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / target.len() as f64;
        let rg = self.rg(pred);
        self.push(
            Tensor::scalar(loss),
            Op::Mse {
                pred,
                target: target.to_vec(),
            },
            rg,
        )
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.tracing {
            return Err(Error::Contract("backward on a tape with tracing disabled".into()));
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![1.0]).expect("scalar"));
        let mut out = Gradients::default();

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                if matches!(node.op, Op::Leaf) {
                    out.grads.insert(Var(id), Tensor::zeros(node.value.shape()));
                }
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    out.grads.insert(Var(id), g);
                }
                Op::MatMul(a, b) => {
                    if self.rg(*a) {
                        let ga = gemm(&g, false, self.value(*b), true);
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.rg(*b) {
                        let gb = gemm(self.value(*a), true, &g, false);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::AddRow(a, bias) => {
                    if self.rg(*bias) {
                        let (rows, cols) = g.dims2();
                        let mut gb = vec![0.0; cols];
                        for r in 0..rows {
                            for (acc, v) in gb.iter_mut().zip(g.row_slice(r)) {
                                *acc += v;
                            }
                        }
                        let shape = self.value(*bias).shape().to_vec();
                        accumulate(&mut grads, *bias, Tensor::new(shape, gb).expect("shape"));
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.map(|v| -v));
                    }
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g);
                    }
                }
                Op::Mul(a, b) => {
                    if self.rg(*a) {
                        accumulate(&mut grads, *a, g.zip_map(self.value(*b), |x, y| x * y));
                    }
                    if self.rg(*b) {
                        accumulate(&mut grads, *b, g.zip_map(self.value(*a), |x, y| x * y));
                    }
                }
                Op::MulRow(a, r) => {
                    let av = self.value(*a);
                    let rv = self.value(*r);
                    let (rows, cols) = av.dims2();
                    if self.rg(*r) {
                        let mut gr = vec![0.0; cols];
                        for i in 0..rows {
                            let gi = g.row_slice(i);
                            let ai = av.row_slice(i);
                            for j in 0..cols {
                                gr[j] += gi[j] * ai[j];
                            }
                        }
                        let shape = rv.shape().to_vec();
                        accumulate(&mut grads, *r, Tensor::new(shape, gr).expect("shape"));
                    }
                    if self.rg(*a) {
                        let mut ga = g.into_data();
                        for i in 0..rows {
                            for (v, m) in ga[i * cols..(i + 1) * cols].iter_mut().zip(rv.data()) {
                                *v *= m;
                            }
                        }
                        let shape = av.shape().to_vec();
                        accumulate(&mut grads, *a, Tensor::new(shape, ga).expect("shape"));
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|v| v * c));
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, g),
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |v, x| if x > 0.0 { v } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |v, y| v * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Abs(a) => {
                    let ga = g.zip_map(self.value(*a), |v, x| {
                        if x > 0.0 {
                            v
                        } else if x < 0.0 {
                            -v
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let s = g.item();
                    accumulate(&mut grads, *a, Tensor::full(self.value(*a).shape(), s));
                }
                Op::Mean(a) => {
                    let av = self.value(*a);
                    let s = g.item() / av.len() as f64;
                    accumulate(&mut grads, *a, Tensor::full(av.shape(), s));
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let (rows, cols) = y.dims2();
                    let mut ga = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for c in 0..cols {
                            ga[r * cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::new(y.shape().to_vec(), ga).expect("shape"));
                }
                Op::NllProbs {
                    probs,
                    targets,
                    reduction,
                } => {
                    let p = self.value(*probs);
                    let (rows, cols) = p.dims2();
                    let mut scale = g.item();
                    if *reduction == Reduction::Mean {
                        scale /= rows as f64;
                    }
                    let mut gp = vec![0.0; rows * cols];
                    for (r, &t) in targets.iter().enumerate() {
                        let pt = p.at(r, t);
                        if pt >= LOG_CLAMP {
                            gp[r * cols + t] = -scale / pt;
                        }
                    }
                    accumulate(&mut grads, *probs, Tensor::new(p.shape().to_vec(), gp).expect("shape"));
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred);
                    let k = 2.0 * g.item() / target.len() as f64;
                    let gp: Vec<f64> = p.data().iter().zip(target).map(|(a, b)| k * (a - b)).collect();
                    accumulate(&mut grads, *pred, Tensor::new(p.shape().to_vec(), gp).expect("shape"));
                }
            }
        }
        // Differentiable leaves that never received a gradient.
        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if node.requires_grad && matches!(node.op, Op::Leaf) {
                out.grads
                    .entry(Var(id))
                    .or_insert_with(|| Tensor::zeros(node.value.shape()));
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut t = GradTape::new();
        let x = t.param(Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap());
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(x), &Tensor::full(&[2, 3], 1.0));
    }

    #[test]
    fn square_gradient_at_three_is_six() {
        let mut t = GradTape::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.mul(x, x);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 6.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = GradTape::new();
        let x = t.param(Tensor::zeros(&[2, 2]));
        let y = t.relu(x);
        assert!(matches!(t.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn backward_without_tracing_is_rejected() {
        let mut t = GradTape::no_grad();
        let x = t.param(Tensor::scalar(1.0));
        let y = t.mul(x, x);
        assert!(t.backward(y).is_err());
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut t = GradTape::new();
        let x = t.param(Tensor::scalar(2.0));
        let unused = t.param(Tensor::zeros(&[3]));
        let y = t.scale(x, 4.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.wrt(x).item(), 4.0);
        assert_eq!(g.wrt(unused), &Tensor::zeros(&[3]));
    }

    #[test]
    fn constant_gets_no_gradient() {
        let mut t = GradTape::new();
        let x = t.param(Tensor::scalar(2.0));
        let c = t.constant(Tensor::scalar(5.0));
        let y = t.mul(x, c);
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.wrt(x).item(), 5.0);
    }

    #[test]
    fn nll_clamp_never_produces_nan() {
        let mut t = GradTape::new();
        let p = t.param(Tensor::from_rows(&[&[1.0, 0.0]]));
        let l = t.nll_probs(p, &[1], Reduction::Sum);
        assert!((t.value(l).item() - (-LOG_CLAMP.ln())).abs() < 1e-9);
        let g = t.backward(l).unwrap();
        assert!(g.wrt(p).all_finite());
    }

    #[test]
    fn stable_sigmoid_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_rows(&[&[1000.0, 0.0, -1000.0], &[0.1, 0.2, 0.3]]);
        let y = softmax_rows(&x);
        for r in 0..2 {
            assert!((y.row_slice(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
