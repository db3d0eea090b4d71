//! The learnable embedding, the masking network and the task network.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{GradTape, Tensor, Var};
use crate::rng::Rng;

/// What the task network predicts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskKind {
    Classification { n_classes: usize },
    Regression,
}

impl TaskKind {
    pub fn output_width(self) -> usize {
        match self {
            TaskKind::Classification { n_classes } => n_classes,
            TaskKind::Regression => 1,
        }
    }

    pub fn is_classification(self) -> bool {
        matches!(self, TaskKind::Classification { .. })
    }
}

/// Layer widths of both networks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub embed_dim: usize,
    pub mask_hidden: Vec<usize>,
    pub task_hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            embed_dim: 32,
            mask_hidden: vec![256],
            task_hidden: vec![256, 256],
        }
    }
}

/// Fully connected layer, `y = x·W + b` with `W` of shape `[in, out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weight: Tensor::new(vec![fan_in, fan_out], data).expect("shape"),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Tape handles of one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    pub weight: Var,
    pub bias: Var,
}

fn register_layers(tape: &mut GradTape, layers: &[Linear]) -> Vec<LinearVars> {
    layers
        .iter()
        .map(|l| LinearVars {
            weight: tape.param(l.weight.clone()),
            bias: tape.param(l.bias.clone()),
        })
        .collect()
}

/// Dense stack with ReLU between layers and a linear last layer.
fn mlp_forward(tape: &mut GradTape, layers: &[LinearVars], x: Var) -> Result<Var> {
    let mut h = x;
    for (i, l) in layers.iter().enumerate() {
        let z = tape.matmul(h, l.weight)?;
        h = tape.add_row(z, l.bias);
        if i + 1 < layers.len() {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

fn build_stack(input: usize, hidden: &[usize], output: usize, rng: &mut Rng) -> Vec<Linear> {
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(input);
    widths.extend_from_slice(hidden);
    widths.push(output);
    widths.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect()
}

fn layer_params<'a>(prefix: &str, layers: &'a mut [Linear]) -> Vec<(String, &'a mut Tensor)> {
    let mut out = Vec::with_capacity(layers.len() * 2);
    for (i, l) in layers.iter_mut().enumerate() {
        out.push((format!("{prefix}.{i}.weight"), &mut l.weight));
        out.push((format!("{prefix}.{i}.bias"), &mut l.bias));
    }
    out
}

/// Embedding `e` and the network `f` producing one logit per feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskingModel {
    pub embedding: Tensor,
    pub layers: Vec<Linear>,
}

/// Tape handles for a [`MaskingModel`].
#[derive(Clone, Debug)]
pub struct MaskVars {
    pub embedding: Var,
    pub layers: Vec<LinearVars>,
}

impl MaskingModel {
    pub fn n_features(&self) -> usize {
        self.layers.last().map_or(0, Linear::fan_out)
    }

    pub fn register(&self, tape: &mut GradTape) -> MaskVars {
        MaskVars {
            embedding: tape.param(self.embedding.clone()),
            layers: register_layers(tape, &self.layers),
        }
    }

    /// Logits `[1, D]` on the tape.
    pub fn logits_on(tape: &mut GradTape, vars: &MaskVars) -> Result<Var> {
        mlp_forward(tape, &vars.layers, vars.embedding)
    }

    /// Per-feature logits `w = f(e)`; the same for every sample.
    pub fn mask_logits(&self) -> Vec<f64> {
        let mut tape = GradTape::no_grad();
        let vars = self.register(&mut tape);
        let w = Self::logits_on(&mut tape, &vars).expect("layer shapes are consistent by construction");
        tape.value(w).data().to_vec()
    }

    /// Parameters in a fixed order: embedding first, then layers.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = vec![("embedding".to_string(), &mut self.embedding)];
        out.extend(layer_params("mask", &mut self.layers));
        out
    }
}

/// Predictor consuming masked inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub task: TaskKind,
    pub layers: Vec<Linear>,
}

impl TaskModel {
    /// Fresh task-shaped network, used alone for downstream evaluation.
    pub fn init(n_features: usize, task: TaskKind, hidden: &[usize], rng: &mut Rng) -> Result<Self> {
        check_dims(n_features, task)?;
        Ok(Self {
            task,
            layers: build_stack(n_features, hidden, task.output_width(), rng),
        })
    }

    pub fn n_features(&self) -> usize {
        self.layers.first().map_or(0, Linear::fan_in)
    }

    pub fn register(&self, tape: &mut GradTape) -> Vec<LinearVars> {
        register_layers(tape, &self.layers)
    }

    /// Class probabilities `[B, C]` or regression outputs `[B, 1]`.
    pub fn forward_on(&self, tape: &mut GradTape, vars: &[LinearVars], x: Var) -> Result<Var> {
        let (_, cols) = tape.value(x).dims2();
        if cols != self.n_features() {
            return Err(Error::Shape {
                op: "task_forward",
                lhs: tape.value(x).shape().to_vec(),
                rhs: vec![self.n_features(), self.task.output_width()],
            });
        }
        let out = mlp_forward(tape, vars, x)?;
        Ok(match self.task {
            TaskKind::Classification { .. } => tape.softmax_rows(out),
            TaskKind::Regression => out,
        })
    }

    pub fn task_forward(&self, x_masked: &Tensor) -> Result<Tensor> {
        let mut tape = GradTape::no_grad();
        let vars = self.register(&mut tape);
        let x = tape.constant(x_masked.clone());
        let out = self.forward_on(&mut tape, &vars, x)?;
        Ok(tape.value(out).clone())
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        layer_params("task", &mut self.layers)
    }
}

fn check_dims(n_features: usize, task: TaskKind) -> Result<()> {
    if n_features == 0 {
        return Err(Error::EmptyDataset);
    }
    if let TaskKind::Classification { n_classes } = task {
        if n_classes < 2 {
            return Err(Error::Contract(format!("classification needs at least 2 classes, got {n_classes}")));
        }
    }
    Ok(())
}

/// Build both networks for `n_features` inputs.
pub fn init_models(
    n_features: usize,
    task: TaskKind,
    config: &NetConfig,
    rng: &mut Rng,
) -> Result<(MaskingModel, TaskModel)> {
    check_dims(n_features, task)?;
    if config.embed_dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    if config.mask_hidden.contains(&0) || config.task_hidden.contains(&0) {
        return Err(Error::Config("hidden widths must be positive".into()));
    }
    let embedding: Vec<f64> = (0..config.embed_dim)
        .map(|_| 0.1 * Distribution::<f64>::sample(&StandardNormal, rng))
        .collect();
    let mask = MaskingModel {
        embedding: Tensor::row(embedding),
        layers: build_stack(config.embed_dim, &config.mask_hidden, n_features, rng),
    };
    let task_model = TaskModel::init(n_features, task, &config.task_hidden, rng)?;
    Ok((mask, task_model))
}
