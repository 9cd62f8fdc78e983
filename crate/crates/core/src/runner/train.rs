//! Epoch loops shared by the backprop and HSIC trainers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batch_iter, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::metrics::accuracy;
use crate::nn::{Layer, Model};
use crate::optim::{zero_grads, OptimizerKind, OptimizerState};
use crate::tensor::{Graph, Tensor};

/// Everything the epoch loop needs besides the model and data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

/// Per-epoch accuracies and mean losses. `diverged_at` holds the epoch
/// in which a non-finite loss appeared; the history stops there.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub train_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
    pub loss: Vec<f64>,
    pub diverged_at: Option<usize>,
}

impl History {
    /// `(A*, E*)`: best test accuracy and the first epoch reaching it.
    pub fn best(&self) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (e, &a) in self.test_acc.iter().enumerate() {
            if best.is_none_or(|(b, _)| a > b) {
                best = Some((a, e));
            }
        }
        best
    }

    fn push(&mut self, train: f64, test: f64, loss: f64) {
        self.train_acc.push(train);
        self.test_acc.push(test);
        self.loss.push(loss);
    }
}

/// Dropout stream for one epoch: independent of the batch-order stream.
pub(crate) fn epoch_rng(seed: u64, phase: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d00d);
    rng.set_stream((phase << 32) | epoch as u64);
    rng
}

fn batch_plan(opts: &TrainOptions, n: usize) -> BatchPlan {
    BatchPlan::new(opts.batch_size.min(n), opts.seed)
}

pub fn evaluate(model: &Model, ds: &Dataset) -> Result<f64> {
    accuracy(&model.predict(&ds.features)?, &ds.labels)
}

/// Standard loop: shuffle, forward, softmax cross-entropy, backward,
/// optimizer step; train and test accuracy are measured after each epoch.
pub fn train_backprop(model: &mut Model, train: &Dataset, test: &Dataset, opts: &TrainOptions) -> Result<History> {
    check_data(model.layers()[0].in_dim(), train, test)?;
    let mut opt = OptimizerState::new(opts.optimizer, opts.lr);
    let plan = batch_plan(opts, train.len());
    let mut hist = History::default();
    for epoch in 0..opts.epochs {
        let mut rng = epoch_rng(opts.seed, 0, epoch);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (xb, yb) in batch_iter(train, &plan, epoch)? {
            let mut g = Graph::new();
            let x = g.constant(xb);
            let (logits, bindings) = model.forward(&mut g, x, true, &mut rng)?;
            let loss = g.softmax_cross_entropy(logits, &yb)?;
            let lv = g.value(loss).data()[0];
            if !lv.is_finite() {
                hist.diverged_at = Some(epoch);
                return Ok(hist);
            }
            let grads = g.backward(loss)?;
            let mut params = model.params_mut();
            zero_grads(&mut params);
            drop(params);
            model.accumulate_grads(&g, &grads, &bindings)?;
            opt.step(&mut model.params_mut())?;
            total += lv;
            batches += 1;
        }
        if !model.params().iter().all(|p| p.value.all_finite()) {
            hist.diverged_at = Some(epoch);
            return Ok(hist);
        }
        hist.push(evaluate(model, train)?, evaluate(model, test)?, total / batches.max(1) as f64);
    }
    Ok(hist)
}

/// Trains only `head` with cross-entropy on precomputed (frozen) features.
/// Accuracies are measured on the head's own predictions.
pub fn train_frozen_head(
    head: &mut Layer,
    train_feats: &Dataset,
    test_feats: &Dataset,
    opts: &TrainOptions,
    phase: u64,
    hist: &mut History,
) -> Result<()> {
    check_data(head.in_dim(), train_feats, test_feats)?;
    let mut opt = OptimizerState::new(opts.optimizer, opts.lr);
    let plan = batch_plan(opts, train_feats.len());
    for epoch in 0..opts.epochs {
        let mut rng = epoch_rng(opts.seed, phase, epoch);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (xb, yb) in batch_iter(train_feats, &plan, epoch)? {
            let mut g = Graph::new();
            let x = g.constant(xb);
            let out = head.forward(&mut g, x, true, &mut rng)?;
            let loss = g.softmax_cross_entropy(out.out, &yb)?;
            let lv = g.value(loss).data()[0];
            if !lv.is_finite() {
                hist.diverged_at = Some(hist.test_acc.len());
                return Ok(());
            }
            let grads = g.backward(loss)?;
            let mut params = head.params_mut();
            for (p, &b) in params.iter_mut().zip(&out.bindings) {
                p.zero_grad();
                if let Some(gr) = grads.get(b) {
                    p.accumulate(gr)?;
                }
            }
            opt.step(&mut params)?;
            total += lv;
            batches += 1;
        }
        let train_acc = accuracy(&layer_predict(head, &train_feats.features)?, &train_feats.labels)?;
        let test_acc = accuracy(&layer_predict(head, &test_feats.features)?, &test_feats.labels)?;
        hist.push(train_acc, test_acc, total / batches.max(1) as f64);
    }
    Ok(())
}

/// Evaluation-mode output of a single layer.
pub fn layer_predict(layer: &Layer, x: &Tensor) -> Result<Tensor> {
    let mut g = Graph::untraced();
    let v = g.constant(x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = layer.forward(&mut g, v, false, &mut rng)?.out;
    Ok(g.value(out).clone())
}

fn check_data(in_dim: usize, train: &Dataset, test: &Dataset) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Parameter("empty training set".into()));
    }
    for ds in [train, test] {
        if ds.dim() != in_dim {
            return Err(Error::Dimension(format!(
                "model expects {in_dim} features, dataset `{}` has {}",
                ds.name,
                ds.dim()
            )));
        }
    }
    Ok(())
}
