use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::ndcore::{GradTape, OptimKind, OptimState, ParamGrad, Reduction, Tensor};
use crate::networks::TaskModel;
use crate::rng::{self, Stream};
use crate::trainer::{task_loss_on, BatchTargets};

/// Training settings of the downstream predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            epochs: 30,
            batch_size: 128,
            lr: 1e-3,
            seed: 0,
        }
    }
}

/// Train a task-shaped network directly on `train` (no mask).
pub fn fit_task_model(train: &Dataset, config: &EvalConfig) -> Result<TaskModel> {
    let (n, d) = train.x.dims2();
    if d == 0 {
        return Err(Error::EmptySelection);
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if config.epochs == 0 || config.batch_size == 0 {
        return Err(Error::Config("evaluation needs positive epochs and batch size".into()));
    }
    let mut model = TaskModel::init(d, train.task(), &config.hidden, &mut rng::stream(config.seed, Stream::Eval))?;
    let mut opt = OptimState::new(OptimKind::adam(), config.lr);
    let mut shuffle = rng::stream(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle);
        for rows in order.chunks(config.batch_size) {
            let mut tape = GradTape::new();
            let vars = model.register(&mut tape);
            let x = tape.constant(train.x.select_rows(rows));
            let preds = model.forward_on(&mut tape, &vars, x)?;
            let loss = task_loss_on(&mut tape, preds, &BatchTargets::from_rows(&train.y, rows), Reduction::Mean)?;
            let mut grads = tape.backward(loss)?;
            let taken: Vec<Tensor> = vars
                .iter()
                .flat_map(|l| [l.weight, l.bias])
                .map(|v| grads.take(v).expect("parameter gradient"))
                .collect();
            let (names, params): (Vec<String>, Vec<&mut Tensor>) = model.params_mut().into_iter().unzip();
            let mut group: Vec<ParamGrad<'_>> = names
                .iter()
                .zip(params)
                .zip(&taken)
                .map(|((name, param), grad)| ParamGrad { name, param, grad })
                .collect();
            opt.step(&mut group)?;
        }
    }
    Ok(model)
}

/// Model outputs on every row of `ds`.
pub fn predict(model: &TaskModel, ds: &Dataset) -> Result<Tensor> {
    model.task_forward(&ds.x)
}

/// Accuracy (classification) or negative MSE (regression) on `test` of a
/// fresh network trained on `train`; larger is better in both cases.
pub fn downstream_eval(train: &Dataset, test: &Dataset, config: &EvalConfig) -> Result<f64> {
    if test.n_features() != train.n_features() {
        return Err(Error::Shape {
            op: "downstream_eval",
            lhs: train.x.shape().to_vec(),
            rhs: test.x.shape().to_vec(),
        });
    }
    let model = fit_task_model(train, config)?;
    let out = predict(&model, test)?;
    Ok(match &test.y {
        Targets::Classes { labels, .. } => {
            let correct = labels
                .iter()
                .enumerate()
                .filter(|&(r, &l)| {
                    let row = out.row_slice(r);
                    let best = (0..row.len()).fold(0, |b, c| if row[c] > row[b] { c } else { b });
                    best == l
                })
                .count();
            correct as f64 / labels.len() as f64
        }
        Targets::Real(y) => {
            let mse = y
                .iter()
                .enumerate()
                .map(|(r, t)| (out.at(r, 0) - t).powi(2))
                .sum::<f64>()
                / y.len() as f64;
            -mse
        }
    })
}
