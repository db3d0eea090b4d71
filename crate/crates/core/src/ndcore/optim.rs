use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Update rule applied by [`OptimState::step`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimKind {
    /// `p ← p − η·g`.
    Plain,
    /// Bias-corrected adaptive moments.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimKind {
    pub fn adam() -> Self {
        OptimKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for OptimKind {
    fn default() -> Self {
        Self::adam()
    }
}

/// One parameter together with its gradient for a single update.
pub struct ParamGrad<'a> {
    pub name: &'a str,
    pub param: &'a mut Tensor,
    pub grad: &'a Tensor,
}

/// Optimizer state for one parameter group sharing a learning rate.
#[derive(Clone, Debug)]
pub struct OptimState {
    kind: OptimKind,
    lr: f64,
    step: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl OptimState {
    pub fn new(kind: OptimKind, lr: f64) -> Self {
        Self {
            kind,
            lr,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn plain(lr: f64) -> Self {
        Self::new(OptimKind::Plain, lr)
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Apply one update to every parameter in `group`. The group must list
    /// parameters in the same order on every call.
    pub fn step(&mut self, group: &mut [ParamGrad<'_>]) -> Result<()> {
        for pg in group.iter() {
            if pg.param.shape() != pg.grad.shape() {
                return Err(Error::Shape {
                    op: "optimizer_step",
                    lhs: pg.param.shape().to_vec(),
                    rhs: pg.grad.shape().to_vec(),
                });
            }
            if !pg.grad.all_finite() {
                return Err(Error::NonFiniteGradient(pg.name.to_string()));
            }
        }
        self.step += 1;
        match self.kind {
            OptimKind::Plain => {
                for pg in group.iter_mut() {
                    let lr = self.lr;
                    for (p, g) in pg.param.data_mut().iter_mut().zip(pg.grad.data()) {
                        *p -= lr * g;
                    }
                }
            }
            OptimKind::Adam { beta1, beta2, eps } => {
                if self.first.is_empty() {
                    self.first = group.iter().map(|pg| Tensor::zeros(pg.param.shape())).collect();
                    self.second = self.first.clone();
                }
                assert_eq!(self.first.len(), group.len(), "parameter group changed size");
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (i, pg) in group.iter_mut().enumerate() {
                    let m = self.first[i].data_mut();
                    let v = self.second[i].data_mut();
                    for (((p, g), mi), vi) in pg
                        .param
                        .data_mut()
                        .iter_mut()
                        .zip(pg.grad.data())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * g;
                        *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *p -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
