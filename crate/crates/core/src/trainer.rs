//! End-to-end training of the masking and task networks.
//!
//! Each mini-batch computes the logits `w = f(e)`, draws one Gumbel noise
//! vector shared by every row of the batch, forms the soft mask
//! `m = σ((w + g)/τ)`, feeds `x ⊙ m` to the task network and minimizes
//! `task + λ·select`. The embedding and masking network share one learning
//! rate, the task network has its own. The temperature decays once per epoch.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::gumbel::{gumbel_sigmoid_traced, sample_gumbel_noise, AnnealSchedule, RngState};
use crate::ndcore::{
    finite_diff_check_many, sigmoid, GradCheckReport, GradTape, Gradients, OptimKind, OptimState, ParamGrad, Reduction,
    Tensor, Var,
};
use crate::networks::{init_models, LinearVars, MaskVars, MaskingModel, NetConfig, TaskKind, TaskModel};
use crate::rng::{self, Stream};

/// How the mask is penalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SelectMode {
    /// Penalize the (mean) mask mass.
    Sparsity,
    /// Penalize distance of the mask mass from `target_k`.
    Target,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub tau0: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate of the embedding and masking network.
    pub eta1: f64,
    /// Learning rate of the task network.
    pub eta2: f64,
    pub seed: u64,
    pub select_mode: SelectMode,
    pub target_k: Option<usize>,
    /// Divide the select loss by `D` (mean instead of sum of mask entries).
    pub normalize_select: bool,
    /// Batch reduction of the cross-entropy; regression always uses a mean.
    pub ce_reduction: Reduction,
    pub optimizer: OptimKind,
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            tau0: 2.0,
            alpha: 0.997,
            lambda: 1.0,
            epochs: 200,
            batch_size: 128,
            eta1: 1e-2,
            eta2: 1e-3,
            seed: 0,
            select_mode: SelectMode::Sparsity,
            target_k: None,
            normalize_select: true,
            ce_reduction: Reduction::Sum,
            optimizer: OptimKind::adam(),
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        AnnealSchedule::new(self.tau0, self.alpha)?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.eta1 > 0.0 && self.eta2 > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.select_mode == SelectMode::Target {
            match self.target_k {
                None => return Err(Error::Config("target mode requires target_k".into())),
                Some(k) if k == 0 || k > n_features => {
                    return Err(Error::Config(format!("target_k must lie in 1..={n_features}, got {k}")))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Per-epoch record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Temperature after this epoch's annealing step.
    pub tau: f64,
    pub loss_total: f64,
    pub loss_task: f64,
    pub loss_select: f64,
    /// `σ(w_j)` at the end of the epoch.
    pub probabilities: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn temperatures(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.tau).collect()
    }

    /// CSV with columns `epoch,tau,loss_total,loss_task,loss_select,p_0..p_{D-1}`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.epochs.first().map_or(0, |e| e.probabilities.len());
        let mut header: Vec<String> = ["epoch", "tau", "loss_total", "loss_task", "loss_select"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend((0..d).map(|j| format!("p_{j}")));
        w.write_record(&header)?;
        for e in &self.epochs {
            let mut row = vec![
                e.epoch.to_string(),
                e.tau.to_string(),
                e.loss_total.to_string(),
                e.loss_task.to_string(),
                e.loss_select.to_string(),
            ];
            row.extend(e.probabilities.iter().map(|p| p.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub mask: MaskingModel,
    pub task: TaskModel,
    pub history: TrainHistory,
    /// Temperature after the last epoch.
    pub tau: f64,
}

/// Batch targets in the form the losses consume.
#[derive(Clone, Debug)]
pub enum BatchTargets {
    Classes(Vec<usize>),
    Real(Vec<f64>),
}

impl BatchTargets {
    pub fn from_rows(y: &Targets, rows: &[usize]) -> Self {
        match y {
            Targets::Classes { labels, .. } => BatchTargets::Classes(rows.iter().map(|&r| labels[r]).collect()),
            Targets::Real(v) => BatchTargets::Real(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    pub fn all(y: &Targets) -> Self {
        match y {
            Targets::Classes { labels, .. } => BatchTargets::Classes(labels.clone()),
            Targets::Real(v) => BatchTargets::Real(v.clone()),
        }
    }
}

/// Loss nodes of one batch.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub task: Var,
    pub select: Var,
    pub total: Var,
}

/// Task loss: cross-entropy of probabilities or mean squared error.
pub fn task_loss_on(tape: &mut GradTape, preds: Var, targets: &BatchTargets, ce_reduction: Reduction) -> Result<Var> {
    match targets {
        BatchTargets::Classes(t) => Ok(tape.nll_probs(preds, t, ce_reduction)),
        BatchTargets::Real(t) => Ok(tape.mse(preds, t)),
    }
}

/// Select loss on the tape for a `[1, D]` mask.
pub fn select_loss_on(
    tape: &mut GradTape,
    mask: Var,
    mode: SelectMode,
    target_k: Option<usize>,
    normalize: bool,
) -> Result<Var> {
    let d = tape.value(mask).len() as f64;
    let mass = if normalize { tape.mean(mask) } else { tape.sum(mask) };
    match mode {
        SelectMode::Sparsity => Ok(mass),
        SelectMode::Target => {
            let k = target_k.ok_or_else(|| Error::Config("target mode requires target_k".into()))? as f64;
            let goal = if normalize { k / d } else { k };
            let diff = tape.add_scalar(mass, -goal);
            Ok(tape.abs(diff))
        }
    }
}

/// `(1/D)Σ m_j` in sparsity mode, `|(1/D)Σ m_j − k/D|` in target mode.
pub fn select_loss(mask: &[f64], mode: SelectMode, target_k: Option<usize>) -> Result<f64> {
    select_loss_with(mask, mode, target_k, true)
}

/// [`select_loss`] with optional normalization by `D`.
pub fn select_loss_with(mask: &[f64], mode: SelectMode, target_k: Option<usize>, normalize: bool) -> Result<f64> {
    if mask.iter().any(|m| !(0.0..=1.0).contains(m)) {
        return Err(Error::Contract("mask entries must lie in [0, 1]".into()));
    }
    let mut tape = GradTape::no_grad();
    let m = tape.constant(Tensor::row(mask.to_vec()));
    let l = select_loss_on(&mut tape, m, mode, target_k, normalize)?;
    Ok(tape.value(l).item())
}

/// `task + λ·select` for given predictions and mask.
pub fn total_loss(preds: &Tensor, targets: &BatchTargets, mask: &[f64], config: &TrainConfig) -> Result<f64> {
    let mut tape = GradTape::no_grad();
    let p = tape.constant(preds.clone());
    let m = tape.constant(Tensor::row(mask.to_vec()));
    let task = task_loss_on(&mut tape, p, targets, config.ce_reduction)?;
    let select = select_loss_on(&mut tape, m, config.select_mode, config.target_k, config.normalize_select)?;
    let weighted = tape.scale(select, config.lambda);
    let total = tape.add(task, weighted);
    Ok(tape.value(total).item())
}

/// Forward pass of one batch up to the combined loss.
#[allow(clippy::too_many_arguments)]
pub fn batch_loss_on(
    tape: &mut GradTape,
    mask_vars: &MaskVars,
    task_model: &TaskModel,
    task_vars: &[LinearVars],
    x: &Tensor,
    targets: &BatchTargets,
    noise: &[f64],
    tau: f64,
    config: &TrainConfig,
) -> Result<LossVars> {
    let w = MaskingModel::logits_on(tape, mask_vars)?;
    let m = gumbel_sigmoid_traced(tape, w, tau, noise)?;
    let xb = tape.constant(x.clone());
    let xm = tape.mul_row(xb, m);
    let preds = task_model.forward_on(tape, task_vars, xm)?;
    let task = task_loss_on(tape, preds, targets, config.ce_reduction)?;
    let select = select_loss_on(tape, m, config.select_mode, config.target_k, config.normalize_select)?;
    let weighted = tape.scale(select, config.lambda);
    let total = tape.add(task, weighted);
    Ok(LossVars { task, select, total })
}

fn mask_var_list(v: &MaskVars) -> Vec<Var> {
    let mut out = vec![v.embedding];
    for l in &v.layers {
        out.push(l.weight);
        out.push(l.bias);
    }
    out
}

fn task_var_list(v: &[LinearVars]) -> Vec<Var> {
    v.iter().flat_map(|l| [l.weight, l.bias]).collect()
}

fn apply_updates(
    state: &mut OptimState,
    params: Vec<(String, &mut Tensor)>,
    vars: &[Var],
    grads: &mut Gradients,
) -> Result<()> {
    let taken: Vec<Tensor> = vars
        .iter()
        .map(|v| grads.take(*v).expect("every parameter is a differentiable leaf"))
        .collect();
    let (names, tensors): (Vec<String>, Vec<&mut Tensor>) = params.into_iter().unzip();
    let mut group: Vec<ParamGrad<'_>> = names
        .iter()
        .zip(tensors)
        .zip(&taken)
        .map(|((name, param), grad)| ParamGrad { name, param, grad })
        .collect();
    state.step(&mut group)
}

/// Train both networks on `dataset` (which should already be standardized).
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutput> {
    let (n, d) = dataset.x.dims2();
    if n == 0 || d == 0 {
        return Err(Error::EmptyDataset);
    }
    config.validate(d)?;
    let task = dataset.task();
    let mut init_rng = rng::stream(config.seed, Stream::Init);
    let (mut mask, mut task_model) = init_models(d, task, &config.net, &mut init_rng)?;
    let mut noise_rng = RngState::new(config.seed);
    let mut shuffle_rng = rng::stream(config.seed, Stream::Shuffle);
    let mut schedule = AnnealSchedule::new(config.tau0, config.alpha)?;
    let mut opt_mask = OptimState::new(config.optimizer, config.eta1);
    let mut opt_task = OptimState::new(config.optimizer, config.eta2);

    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let tau = schedule.temperature();
        let (mut sum_total, mut sum_task, mut sum_select) = (0.0, 0.0, 0.0);
        let mut batches = 0usize;
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let xb = dataset.x.select_rows(rows);
            let yb = BatchTargets::from_rows(&dataset.y, rows);
            let noise = sample_gumbel_noise(d, &mut noise_rng);

            let mut tape = GradTape::new();
            let mvars = mask.register(&mut tape);
            let tvars = task_model.register(&mut tape);
            let loss = batch_loss_on(&mut tape, &mvars, &task_model, &tvars, &xb, &yb, &noise, tau, config)?;
            let total = tape.value(loss.total).item();
            if !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss: total,
                });
            }
            sum_total += total;
            sum_task += tape.value(loss.task).item();
            sum_select += tape.value(loss.select).item();
            batches += 1;

            let mut grads = tape.backward(loss.total)?;
            apply_updates(&mut opt_mask, mask.params_mut(), &mask_var_list(&mvars), &mut grads)?;
            apply_updates(&mut opt_task, task_model.params_mut(), &task_var_list(&tvars), &mut grads)?;
        }
        let tau_next = schedule.step();
        let k = batches as f64;
        history.epochs.push(EpochRecord {
            epoch,
            tau: tau_next,
            loss_total: sum_total / k,
            loss_task: sum_task / k,
            loss_select: sum_select / k,
            probabilities: mask.mask_logits().into_iter().map(sigmoid).collect(),
        });
    }
    Ok(TrainOutput {
        mask,
        task: task_model,
        history,
        tau: schedule.temperature(),
    })
}

/// Finite-difference check of `∇L_total` with respect to the embedding, the
/// masking network and the task network, with the Gumbel noise held fixed.
#[allow(clippy::too_many_arguments)]
pub fn gradient_check(
    mask: &MaskingModel,
    task_model: &TaskModel,
    x: &Tensor,
    targets: &BatchTargets,
    noise: &[f64],
    tau: f64,
    config: &TrainConfig,
    step: f64,
    max_coords: Option<usize>,
) -> Result<GradCheckReport> {
    let mut points = vec![mask.embedding.clone()];
    for l in &mask.layers {
        points.push(l.weight.clone());
        points.push(l.bias.clone());
    }
    let n_mask = mask.layers.len();
    for l in &task_model.layers {
        points.push(l.weight.clone());
        points.push(l.bias.clone());
    }
    let f = |tape: &mut GradTape, vars: &[Var]| -> Result<Var> {
        let pair = |i: usize| LinearVars {
            weight: vars[i],
            bias: vars[i + 1],
        };
        let mvars = MaskVars {
            embedding: vars[0],
            layers: (0..n_mask).map(|l| pair(1 + 2 * l)).collect(),
        };
        let offset = 1 + 2 * n_mask;
        let tvars: Vec<LinearVars> = (0..task_model.layers.len()).map(|l| pair(offset + 2 * l)).collect();
        Ok(batch_loss_on(tape, &mvars, task_model, &tvars, x, targets, noise, tau, config)?.total)
    };
    finite_diff_check_many(f, &points, step, max_coords)
}

/// Serialized trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub embedding: Tensor,
    pub mask_layers: Vec<crate::networks::Linear>,
    pub task_layers: Vec<crate::networks::Linear>,
    pub task: TaskKind,
    pub tau: f64,
    pub config: TrainConfig,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(out: &TrainOutput, config: &TrainConfig) -> Self {
        Self {
            embedding: out.mask.embedding.clone(),
            mask_layers: out.mask.layers.clone(),
            task_layers: out.task.layers.clone(),
            task: out.task.task,
            tau: out.tau,
            config: config.clone(),
            seed: config.seed,
        }
    }

    pub fn masking_model(&self) -> MaskingModel {
        MaskingModel {
            embedding: self.embedding.clone(),
            layers: self.mask_layers.clone(),
        }
    }

    pub fn task_model(&self) -> TaskModel {
        TaskModel {
            task: self.task,
            layers: self.task_layers.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_loss_fixtures() {
        assert_eq!(select_loss(&[1.0; 10], SelectMode::Sparsity, None).unwrap(), 1.0);
        assert_eq!(select_loss(&[1.0, 0.0, 1.0, 0.0], SelectMode::Sparsity, None).unwrap(), 0.5);
        let half = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(select_loss(&half, SelectMode::Target, Some(5)).unwrap(), 0.0);
        assert!((select_loss(&half, SelectMode::Target, Some(2)).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn select_loss_unnormalized_counts_features() {
        assert_eq!(select_loss_with(&[1.0, 0.0, 1.0], SelectMode::Sparsity, None, false).unwrap(), 2.0);
        assert_eq!(select_loss_with(&[1.0, 0.0, 1.0], SelectMode::Target, Some(3), false).unwrap(), 1.0);
    }

    #[test]
    fn select_loss_errors() {
        assert!(matches!(
            select_loss(&[0.5], SelectMode::Target, None),
            Err(Error::Config(_))
        ));
        assert!(select_loss(&[1.5], SelectMode::Sparsity, None).is_err());
    }

    fn cfg(lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn total_loss_fixtures() {
        let onehot = Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let l = total_loss(&onehot, &BatchTargets::Classes(vec![0, 1]), &[0.3, 0.9], &cfg(0.0)).unwrap();
        assert_eq!(l, 0.0);

        let preds = Tensor::matrix(3, 1, vec![0.5, -1.0, 2.0]).unwrap();
        let l = total_loss(&preds, &BatchTargets::Real(vec![0.5, -1.0, 2.0]), &[1.0], &cfg(0.0)).unwrap();
        assert_eq!(l, 0.0);

        let uniform = Tensor::from_rows(&[&[0.25; 4]]);
        let l = total_loss(&uniform, &BatchTargets::Classes(vec![2]), &[1.0], &cfg(0.0)).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn total_adds_weighted_select() {
        let uniform = Tensor::from_rows(&[&[0.5, 0.5]]);
        let l = total_loss(&uniform, &BatchTargets::Classes(vec![0]), &[1.0, 0.0], &cfg(2.0)).unwrap();
        assert!((l - (2f64.ln() + 2.0 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_is_guarded() {
        let p = Tensor::from_rows(&[&[1.0, 0.0]]);
        let l = total_loss(&p, &BatchTargets::Classes(vec![1]), &[1.0], &cfg(0.0)).unwrap();
        assert!(l.is_finite());
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate(10).is_ok());
        c.select_mode = SelectMode::Target;
        assert!(c.validate(10).is_err());
        c.target_k = Some(11);
        assert!(c.validate(10).is_err());
        c.target_k = Some(10);
        assert!(c.validate(10).is_ok());
        let bad = TrainConfig {
            lambda: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate(3).is_err());
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate(3).is_err());
    }
}
