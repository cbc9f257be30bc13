//! Training loop: weighted sampling, weighted loss, Adam with a step schedule,
//! decoupled weight decay and early stopping on a validation metric.

use ndarray::{Array2, ArrayView2, Axis};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use super::net::{class_weights, loss_and_grad, Mode, ModelParams, ModelSpec, Owner};
use crate::error::{Error, Result};
use crate::eval::metrics::{auroc, Confusion};
use crate::rng::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    Auroc,
    F1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub lr_step_epochs: usize,
    pub lr_gamma: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub monitor: Monitor,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            weight_decay: 0.01,
            lr_step_epochs: 10,
            lr_gamma: 0.1,
            batch_size: 16,
            patience: 20,
            max_epochs: 200,
            seed: 7,
            monitor: Monitor::Auroc,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.lr_gamma, self.beta1, self.beta2, self.eps];
        if positive.iter().any(|v| v.is_nan() || *v <= 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("learning rate, schedule and Adam constants must be positive".into()));
        }
        if self.batch_size < 2 || self.patience == 0 || self.max_epochs == 0 || self.lr_step_epochs == 0 {
            return Err(Error::Config("batch size must be at least 2; patience, epochs and step size at least 1".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_gamma.powi((epoch / self.lr_step_epochs) as i32)
    }
}

/// Model inputs: one matrix per block, rows aligned with `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub blocks: Vec<Array2<f64>>,
    pub labels: Vec<bool>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn views(&self) -> Vec<ArrayView2<'_, f64>> {
        self.blocks.iter().map(|b| b.view()).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            blocks: self.blocks.iter().map(|b| b.select(Axis(0), idx)).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Keep only the named block positions.
    pub fn project(&self, keep: &[usize]) -> Dataset {
        Dataset {
            blocks: keep.iter().map(|&i| self.blocks[i].clone()).collect(),
            labels: self.labels.clone(),
        }
    }
}

/// Per-example sampling weights proportional to inverse class frequency.
pub fn make_sampler(labels: &[bool]) -> Result<Vec<f64>> {
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Data("sampler needs both classes".into()));
    }
    Ok(labels
        .iter()
        .map(|l| if *l { 1.0 / n_pos as f64 } else { 1.0 / n_neg as f64 })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Weighted cross-entropy over the whole training set, eval mode.
    pub train_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_metric: f64,
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(params: &ModelParams) -> Self {
        let shapes: Vec<usize> = params.params().iter().map(|p| p.len()).collect();
        Adam {
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            t: 0,
        }
    }

    /// One step on every trainable tensor: decoupled decay, then the Adam update.
    fn step(&mut self, params: &mut ModelParams, grads: &[&[f64]], frozen: &[bool], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for (k, (owner, p)) in params.params_mut().into_iter().enumerate() {
            if let Owner::Block(i) = owner {
                if frozen.get(i).copied().unwrap_or(false) {
                    continue;
                }
            }
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            for j in 0..p.len() {
                p[j] -= lr * cfg.weight_decay * p[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
                p[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + cfg.eps);
            }
        }
    }
}

fn monitor_value(monitor: Monitor, scores: &[f64], labels: &[bool]) -> Result<f64> {
    match monitor {
        Monitor::Auroc => auroc(scores, labels).ok_or_else(|| Error::Data("validation set needs both classes".into())),
        Monitor::F1 => Ok(Confusion::at(scores, labels, 0.5).f1()),
    }
}

/// Train a fresh model of `spec`.
pub fn train(spec: &ModelSpec, cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    let params = ModelParams::init(spec, cfg.seed)?;
    fit(params, &[], cfg, train, val)
}

/// Train the pooling/head on top of supplied encoders. Blocks flagged in
/// `frozen` keep their parameters bit-identical and run in eval mode.
pub fn train_staged(params: ModelParams, frozen: &[bool], cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    if params.spec.head_widths.is_empty() && frozen.iter().all(|f| *f) {
        return Err(Error::Config("staged training with every block frozen needs at least one hidden head layer".into()));
    }
    fit(params, frozen, cfg, train, val)
}

fn fit(mut params: ModelParams, frozen: &[bool], cfg: &TrainConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.check_inputs(&train.views())?;
    params.check_inputs(&val.views())?;
    let weights = class_weights(&train.labels)?;
    let sampler = WeightedIndex::new(make_sampler(&train.labels)?).map_err(|e| Error::Data(e.to_string()))?;
    let mut sample_rng = rng_for(cfg.seed, "sampler");
    let mut dropout_rng = rng_for(cfg.seed, "dropout");
    let mut adam = Adam::new(&params);

    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY);
    let mut stale = 0;
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        let order: Vec<usize> = (0..train.len()).map(|_| sampler.sample(&mut sample_rng)).collect();
        for idx in order.chunks(cfg.batch_size) {
            // Batch statistics are undefined for a single row.
            if idx.len() < 2 {
                continue;
            }
            let batch = train.select(idx);
            let out = loss_and_grad(&params, &batch.views(), &batch.labels, weights, 0.0, Mode::Train, frozen, &mut dropout_rng)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step, loss: out.loss });
            }
            params.update_running_stats(&out.cache, frozen);
            adam.step(&mut params, &out.grads.slices(), frozen, lr, cfg);
            step += 1;
        }
        let scores = params.predict_proba(&val.views())?;
        let metric = monitor_value(cfg.monitor, scores.as_slice().unwrap(), &val.labels)?;
        // Full training-set loss in eval mode, comparable across epochs.
        let train_loss = loss_and_grad(&params, &train.views(), &train.labels, weights, 0.0, Mode::Eval, frozen, &mut dropout_rng)?.loss;
        log::debug!("epoch {epoch}: lr {lr:.1e} loss {train_loss:.5} val {metric:.4}");
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_metric: metric,
        });
        if metric > best.2 {
            best = (params.clone(), epoch, metric);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    Ok(TrainOutcome {
        params: best.0,
        log,
        best_epoch: best.1,
        best_metric: best.2,
    })
}
