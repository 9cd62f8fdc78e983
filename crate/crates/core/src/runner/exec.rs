//! Run execution, records and the degree/width and activation sweeps.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hsic::train_hsic;
use crate::metrics::{efficiency, generalization_gap, twonn_intrinsic_dimension, EfficiencyInputs};
use crate::nn::{build_model, Family, Initialization, ModelConfig, SizeClass};
use crate::optim::OptimizerKind;
use crate::runner::config::{expand_grid, ExperimentConfig, RunSpec, SweepTag, Trainer, TrainingScheme};
use crate::runner::train::{train_backprop, History, TrainOptions};

/// Points used for the TwoNN estimate of a test split.
pub const ID_SAMPLE: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunRecord {
    pub run_id: usize,
    pub dataset: String,
    pub model: String,
    pub family: Family,
    pub size: SizeClass,
    pub widths: Vec<usize>,
    pub grid: usize,
    pub degree: usize,
    pub activation: Activation,
    pub scheme: TrainingScheme,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTag>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub train_acc: Vec<f64>,
    pub test_acc: Vec<f64>,
    pub loss: Vec<f64>,
    /// `A*`: best test accuracy.
    pub best_test_acc: Option<f64>,
    /// `E*`: first epoch index reaching `A*`.
    pub best_epoch: Option<usize>,
    pub params: usize,
    pub intrinsic_dim: Option<f64>,
    pub efficiency: Option<f64>,
    /// Train minus test accuracy at the best epoch.
    pub gap: Option<f64>,
    pub wall_seconds: f64,
}

impl RunRecord {
    fn blank(spec: &RunSpec) -> Self {
        RunRecord {
            run_id: spec.run_id,
            dataset: spec.dataset.clone(),
            model: spec.model.label(),
            family: spec.model.family,
            size: spec.model.size,
            widths: spec.model.hidden_widths(),
            grid: spec.model.grid,
            degree: spec.model.degree,
            activation: spec.model.hidden_activation(),
            scheme: spec.scheme,
            seed: spec.seed,
            sweep: spec.sweep.clone(),
            status: RunStatus::Failed,
            error: None,
            train_acc: Vec::new(),
            test_acc: Vec::new(),
            loss: Vec::new(),
            best_test_acc: None,
            best_epoch: None,
            params: 0,
            intrinsic_dim: None,
            efficiency: None,
            gap: None,
            wall_seconds: 0.0,
        }
    }

    /// Copy with the timing field zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        RunRecord {
            wall_seconds: 0.0,
            ..self.clone()
        }
    }

    pub fn scheme_label(&self) -> String {
        self.scheme.label()
    }
}

/// Normalized splits plus the intrinsic dimension used for EF.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub train: Dataset,
    pub test: Dataset,
    pub intrinsic_dim: Option<f64>,
}

impl PreparedData {
    /// Uses `id` when given, otherwise estimates it on the test split.
    pub fn new(train: Dataset, test: Dataset, id: Option<f64>) -> Self {
        let intrinsic_dim = id.or_else(|| twonn_intrinsic_dimension(&test.take(ID_SAMPLE).features).ok());
        PreparedData {
            train,
            test,
            intrinsic_dim,
        }
    }

    pub fn load(cfg: &ExperimentConfig, base: &Path) -> Result<Self> {
        let (train, test) = cfg.dataset.load(base, cfg.normalize)?;
        Ok(PreparedData::new(train, test, cfg.intrinsic_dim))
    }
}

/// Builds, trains and scores one run. Errors and panics are captured in
/// the record instead of being returned.
pub fn execute_run(spec: &RunSpec, data: &PreparedData) -> RunRecord {
    let start = Instant::now();
    let mut rec = RunRecord::blank(spec);
    let outcome = catch_unwind(AssertUnwindSafe(|| run_inner(spec, data, &mut rec)));
    match outcome {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            rec.status = RunStatus::Failed;
            rec.error = Some(e.to_string());
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            rec.status = RunStatus::Failed;
            rec.error = Some(format!("panic: {msg}"));
        }
    }
    rec.wall_seconds = start.elapsed().as_secs_f64();
    rec
}

fn run_inner(spec: &RunSpec, data: &PreparedData, rec: &mut RunRecord) -> Result<()> {
    let mut model = build_model(&spec.model, spec.scheme.init, spec.seed)?;
    rec.params = model.param_count();
    rec.intrinsic_dim = data.intrinsic_dim;
    let opts = TrainOptions {
        optimizer: spec.scheme.optimizer,
        lr: spec.scheme.lr,
        batch_size: spec.scheme.batch_size,
        epochs: spec.scheme.max_epochs,
        seed: spec.seed,
    };
    let hist = match spec.scheme.trainer {
        Trainer::Backprop => train_backprop(&mut model, &data.train, &data.test, &opts)?,
        Trainer::Hsic => train_hsic(&mut model, &data.train, &data.test, &opts, &spec.hsic)?,
    };
    fill_from_history(rec, hist);
    Ok(())
}

fn fill_from_history(rec: &mut RunRecord, hist: History) {
    if let Some((best, epoch)) = hist.best() {
        rec.best_test_acc = Some(best);
        rec.best_epoch = Some(epoch);
        rec.gap = Some(generalization_gap(hist.train_acc[epoch], best));
    }
    rec.status = if hist.diverged_at.is_some() {
        RunStatus::Diverged
    } else {
        RunStatus::Ok
    };
    if let Some(e) = hist.diverged_at {
        rec.error = Some(format!("non-finite loss in epoch {e}"));
    }
    if rec.status == RunStatus::Ok {
        if let (Some(a), Some(e), Some(id)) = (rec.best_test_acc, rec.best_epoch, rec.intrinsic_dim) {
            rec.efficiency = efficiency(&EfficiencyInputs {
                best_accuracy: a,
                epochs_to_best: e,
                params: rec.params,
                intrinsic_dim: id,
            })
            .ok();
        }
    }
    rec.train_acc = hist.train_acc;
    rec.test_acc = hist.test_acc;
    rec.loss = hist.loss;
}

/// Runs `specs` on up to `workers` threads. Records come back in spec
/// order regardless of scheduling; `progress` is called as runs finish.
pub fn run_specs(
    specs: &[RunSpec],
    data: &PreparedData,
    workers: usize,
    progress: &(dyn Fn(&RunRecord) + Sync),
) -> Vec<RunRecord> {
    let slots: Vec<Mutex<Option<RunRecord>>> = specs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, specs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= specs.len() {
                    break;
                }
                let rec = execute_run(&specs[i], data);
                progress(&rec);
                *slots[i].lock().expect("result slot") = Some(rec);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("every run completes"))
        .collect()
}

/// Expands the config's grid and runs it.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    progress: &(dyn Fn(&RunRecord) + Sync),
) -> Result<Vec<RunRecord>> {
    let specs = expand_grid(cfg, data.train.dim(), data.train.classes)?;
    Ok(run_specs(&specs, data, cfg.workers, progress))
}

/// The fixed scheme used for the degree/width comparison.
pub fn sweep_scheme(batch_size: usize, max_epochs: usize) -> TrainingScheme {
    TrainingScheme {
        init: Initialization::KaimingNormal,
        optimizer: OptimizerKind::Adam,
        lr: 1e-4,
        batch_size,
        max_epochs,
        trainer: Trainer::Backprop,
    }
}

/// One run per degree (at the base width) and one per width (at the base
/// degree); every run uses `seed`.
pub fn degree_width_sweep(
    base: &ModelConfig,
    degrees: &[usize],
    widths: &[usize],
    scheme: TrainingScheme,
    seed: u64,
    dataset: &str,
) -> Result<Vec<RunSpec>> {
    if base.family != Family::Kan || base.hidden_widths().len() != 1 {
        return Err(Error::Config("degree/width sweep needs a single-hidden-layer KAN".into()));
    }
    if let Some(d) = degrees.iter().find(|&&d| d < 1) {
        return Err(Error::Config(format!("swept degree must be >= 1, got {d}")));
    }
    if widths.contains(&0) {
        return Err(Error::Config("swept widths must be >= 1".into()));
    }
    let mut specs = Vec::new();
    let mut push = |model: ModelConfig, axis: &str, value: usize| -> Result<()> {
        model.validate()?;
        specs.push(RunSpec {
            run_id: specs.len(),
            dataset: dataset.to_string(),
            model,
            scheme,
            seed,
            hsic: Default::default(),
            sweep: Some(SweepTag {
                axis: axis.into(),
                value: value.to_string(),
            }),
        });
        Ok(())
    };
    for &k in degrees {
        push(base.clone().with_spline(base.grid, k), "degree", k)?;
    }
    for &w in widths {
        push(base.clone().with_widths(vec![w]), "width", w)?;
    }
    Ok(specs)
}

/// A degree-swept run and the width-swept run closest to it in size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct MatchedPair {
    pub dataset: String,
    pub degree: usize,
    pub degree_params: usize,
    pub degree_acc: Option<f64>,
    pub width: usize,
    pub width_params: usize,
    pub width_acc: Option<f64>,
    /// `|P_width - P_degree| / P_degree`.
    pub param_mismatch: f64,
}

impl MatchedPair {
    /// `Some(true)` when the width-swept run scores higher.
    pub fn width_wins(&self) -> Option<bool> {
        Some(self.width_acc? > self.degree_acc?)
    }
}

/// Pairs each degree-swept record with the width-swept record of nearest
/// parameter count (ties go to the smaller width).
pub fn matched_pairs(records: &[RunRecord]) -> Vec<MatchedPair> {
    let axis = |r: &RunRecord, a: &str| r.sweep.as_ref().is_some_and(|t| t.axis == a);
    let mut pairs = Vec::new();
    for d in records.iter().filter(|r| axis(r, "degree")) {
        let best = records
            .iter()
            .filter(|r| axis(r, "width") && r.dataset == d.dataset)
            .min_by_key(|r| (r.params.abs_diff(d.params), r.widths[0]));
        if let Some(w) = best {
            pairs.push(MatchedPair {
                dataset: d.dataset.clone(),
                degree: d.degree,
                degree_params: d.params,
                degree_acc: d.best_test_acc,
                width: w.widths[0],
                width_params: w.params,
                width_acc: w.best_test_acc,
                param_mismatch: w.params.abs_diff(d.params) as f64 / d.params.max(1) as f64,
            });
        }
    }
    pairs
}

/// How the "best" scheme is chosen from prior records.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    #[default]
    MaxAccuracy,
    MinGap,
}

/// Best completed KAN record per the rule; ties keep the earliest run.
pub fn select_best(records: &[RunRecord], rule: SelectionRule) -> Option<&RunRecord> {
    let mut best: Option<&RunRecord> = None;
    for r in records.iter().filter(|r| r.status == RunStatus::Ok && r.family == Family::Kan) {
        let Some(score) = score(r, rule) else { continue };
        if best.is_none_or(|b| score > score_of(b, rule)) {
            best = Some(r);
        }
    }
    best
}

fn score(r: &RunRecord, rule: SelectionRule) -> Option<f64> {
    match rule {
        SelectionRule::MaxAccuracy => r.best_test_acc,
        SelectionRule::MinGap => r.gap.map(|g| -g.abs()),
    }
}

fn score_of(r: &RunRecord, rule: SelectionRule) -> f64 {
    score(r, rule).unwrap_or(f64::NEG_INFINITY)
}

/// Re-runs `best` once per activation with everything else fixed.
pub fn activation_sweep(best: &RunSpec, activations: &[Activation]) -> Vec<RunSpec> {
    activations
        .iter()
        .enumerate()
        .map(|(i, &a)| RunSpec {
            run_id: i,
            model: best.model.clone().with_activation(a),
            sweep: Some(SweepTag {
                axis: "activation".into(),
                value: a.to_string(),
            }),
            ..best.clone()
        })
        .collect()
}

/// Reconstructs the spec a record came from.
pub fn spec_from_record(rec: &RunRecord, data: &PreparedData, models: &[ModelConfig]) -> Result<RunSpec> {
    let model = models
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m.in_dim = data.train.dim();
            m.out_dim = data.train.classes;
            m
        })
        .find(|m| m.label() == rec.model && m.hidden_activation() == rec.activation)
        .ok_or_else(|| Error::Config(format!("no model `{}` in the configuration", rec.model)))?;
    Ok(RunSpec {
        run_id: 0,
        dataset: rec.dataset.clone(),
        model,
        scheme: rec.scheme,
        seed: rec.seed,
        hsic: Default::default(),
        sweep: None,
    })
}
