//! HSIC-bottleneck training: each hidden layer is fitted in turn to keep
//! label information and discard input information, then a head is
//! trained with cross-entropy on the frozen features.
//!
//! The estimator is the biased one, `tr(K H L H) / (m-1)²` with the
//! centring matrix `H = I - 11ᵀ/m`. Inputs and hidden activations use
//! Gaussian kernels; labels use the linear kernel `Y Yᵀ` on one-hot rows.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::optim::OptimizerState;
use crate::runner::train::{epoch_rng, evaluate, train_frozen_head, History, TrainOptions};
use crate::nn::Model;
use crate::tensor::{gaussian_gram, squared_distance, Graph, Tensor, Var};

pub const DEFAULT_BETA: f64 = 100.0;
pub const DEFAULT_LAYER_EPOCHS: usize = 5;

/// Square symmetric Gram matrix. `bandwidth` is `None` for the linear kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix {
    pub values: Tensor,
    pub bandwidth: Option<f64>,
}

impl KernelMatrix {
    pub fn size(&self) -> usize {
        self.values.rows()
    }
}

pub fn gaussian_kernel_matrix(x: &Tensor, sigma: f64) -> Result<KernelMatrix> {
    Ok(KernelMatrix {
        values: gaussian_gram(x, sigma)?,
        bandwidth: Some(sigma),
    })
}

/// `L = Y Yᵀ`.
pub fn linear_kernel_matrix(y: &Tensor) -> Result<KernelMatrix> {
    Ok(KernelMatrix {
        values: y.matmul(&y.transpose()?)?,
        bandwidth: None,
    })
}

/// Median of the strictly positive pairwise distances; 1 when every point
/// coincides.
pub fn median_heuristic(x: &Tensor) -> Result<f64> {
    let (m, _) = x.dims2()?;
    if m < 2 {
        return Err(Error::Parameter(format!("median heuristic needs >= 2 points, got {m}")));
    }
    let mut d: Vec<f64> = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let v = squared_distance(x.row(i), x.row(j)).sqrt();
            if v > 0.0 {
                d.push(v);
            }
        }
    }
    if d.is_empty() {
        return Ok(1.0);
    }
    d.sort_by(f64::total_cmp);
    let k = d.len();
    Ok(if k % 2 == 1 {
        d[k / 2]
    } else {
        0.5 * (d[k / 2 - 1] + d[k / 2])
    })
}

/// `H K H` via row/column/grand means.
fn centre(k: &Tensor) -> Tensor {
    let m = k.rows();
    let mf = m as f64;
    let row_mean: Vec<f64> = (0..m).map(|i| k.row(i).iter().sum::<f64>() / mf).collect();
    let col_mean: Vec<f64> = (0..m).map(|j| (0..m).map(|i| k.get2(i, j)).sum::<f64>() / mf).collect();
    let grand = row_mean.iter().sum::<f64>() / mf;
    let mut data = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            data.push(k.get2(i, j) - row_mean[i] - col_mean[j] + grand);
        }
    }
    Tensor::new(vec![m, m], data).expect("square")
}

/// Biased empirical HSIC. Computed as `Σ (HKH)ᵢⱼ (HLH)ᵢⱼ / (m-1)²`, which
/// equals the trace form and is exactly symmetric in its arguments.
pub fn hsic_estimate(k: &KernelMatrix, l: &KernelMatrix) -> Result<f64> {
    let (m, mk) = k.values.dims2()?;
    let (ml, ml2) = l.values.dims2()?;
    if m != mk || ml != ml2 || m != ml {
        return Err(Error::Contract(format!(
            "HSIC needs equal square kernels, got {:?} and {:?}",
            k.values.shape(),
            l.values.shape()
        )));
    }
    if m < 2 {
        return Err(Error::Contract("HSIC needs at least 2 samples".into()));
    }
    let hk = centre(&k.values);
    let hl = centre(&l.values);
    let s: f64 = hk.data().iter().zip(hl.data()).map(|(a, b)| a * b).sum();
    Ok(s / ((m - 1) as f64).powi(2))
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum SigmaStrategy {
    #[default]
    MedianHeuristic,
    Fixed(f64),
}

impl SigmaStrategy {
    pub fn bandwidth(self, x: &Tensor) -> Result<f64> {
        match self {
            SigmaStrategy::MedianHeuristic => median_heuristic(x),
            SigmaStrategy::Fixed(s) => Ok(s),
        }
    }
}

impl fmt::Display for SigmaStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaStrategy::MedianHeuristic => f.write_str("median"),
            SigmaStrategy::Fixed(s) => write!(f, "{s}"),
        }
    }
}

// Config form: the string "median" or a positive number.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SigmaRepr {
    Fixed(f64),
    Name(String),
}

impl Serialize for SigmaStrategy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            SigmaStrategy::MedianHeuristic => SigmaRepr::Name("median".into()),
            SigmaStrategy::Fixed(v) => SigmaRepr::Fixed(v),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SigmaStrategy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match SigmaRepr::deserialize(d)? {
            SigmaRepr::Fixed(v) => Ok(SigmaStrategy::Fixed(v)),
            SigmaRepr::Name(n) if n == "median" || n == "median-heuristic" => Ok(SigmaStrategy::MedianHeuristic),
            SigmaRepr::Name(n) => Err(serde::de::Error::custom(format!(
                "sigma must be `median` or a number, got `{n}`"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct HsicConfig {
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub sigma: SigmaStrategy,
    #[serde(default = "default_layer_epochs")]
    pub layer_epochs: usize,
}

fn default_beta() -> f64 {
    DEFAULT_BETA
}
fn default_layer_epochs() -> usize {
    DEFAULT_LAYER_EPOCHS
}

impl Default for HsicConfig {
    fn default() -> Self {
        HsicConfig {
            beta: DEFAULT_BETA,
            sigma: SigmaStrategy::MedianHeuristic,
            layer_epochs: DEFAULT_LAYER_EPOCHS,
        }
    }
}

impl HsicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("hsic beta must be > 0, got {}", self.beta)));
        }
        if let SigmaStrategy::Fixed(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("hsic sigma must be > 0, got {s}")));
            }
        }
        Ok(())
    }
}

/// Constant part `(HK_XH - β·HK_YH)/(m-1)²` of the bottleneck objective; the
/// loss is then `Σ K_Z ⊙ M`.
fn loss_weights(x: &Tensor, y: &Tensor, cfg: &HsicConfig) -> Result<Tensor> {
    let kx = gaussian_kernel_matrix(x, cfg.sigma.bandwidth(x)?)?;
    let ky = linear_kernel_matrix(y)?;
    let m = kx.size();
    if y.rows() != m {
        return Err(Error::Dimension(format!("{m} inputs but {} label rows", y.rows())));
    }
    let scale = 1.0 / ((m - 1) as f64).powi(2);
    let hx = centre(&kx.values);
    let hy = centre(&ky.values);
    let data = hx
        .data()
        .iter()
        .zip(hy.data())
        .map(|(a, b)| (a - cfg.beta * b) * scale)
        .collect();
    Tensor::new(vec![m, m], data)
}

/// `HSIC(K_Z, K_X) - β·HSIC(K_Z, K_Y)` for plain tensors.
pub fn hsic_bottleneck_loss(z: &Tensor, x: &Tensor, y: &Tensor, cfg: &HsicConfig) -> Result<f64> {
    let mut g = Graph::untraced();
    let zv = g.constant(z.clone());
    let loss = hsic_bottleneck_var(&mut g, zv, x, y, cfg)?;
    Ok(g.value(loss).data()[0])
}

/// Differentiable form of [`hsic_bottleneck_loss`] with respect to `z`. The
/// bandwidth for `z` is chosen from its current (detached) value.
pub fn hsic_bottleneck_var(g: &mut Graph, z: Var, x: &Tensor, y: &Tensor, cfg: &HsicConfig) -> Result<Var> {
    let (mz, _) = g.value(z).dims2()?;
    if mz != x.rows() {
        return Err(Error::Dimension(format!("{mz} activations but {} inputs", x.rows())));
    }
    let weights = loss_weights(x, y, cfg)?;
    let sigma = cfg.sigma.bandwidth(g.value(z))?;
    let kz = g.gaussian_kernel(z, sigma)?;
    let w = g.constant(weights);
    let prod = g.mul(kz, w)?;
    Ok(g.sum(prod))
}

/// Layer-wise HSIC training of every hidden layer (`cfg.layer_epochs` each,
/// earlier layers frozen), then `opts.epochs` of cross-entropy on the
/// output head over frozen features. The history covers every epoch of
/// every phase; during hidden phases accuracy is that of the whole model
/// with its current head.
pub fn train_hsic(model: &mut Model, train: &Dataset, test: &Dataset, opts: &TrainOptions, cfg: &HsicConfig) -> Result<History> {
    cfg.validate()?;
    let hidden = model.hidden_layer_count();
    if hidden == 0 {
        return Err(Error::Config("HSIC training needs at least one hidden layer".into()));
    }
    let m = opts.batch_size.min(train.len());
    if m < 4 {
        return Err(Error::Config(format!("HSIC batch size must be >= 4, got {m}")));
    }
    let plan = BatchPlan::new(m, opts.seed);
    let mut hist = History::default();

    for l in 0..hidden {
        let inputs = model.features(&train.features, l)?;
        let mut opt = OptimizerState::new(opts.optimizer, opts.lr);
        for epoch in 0..cfg.layer_epochs {
            let mut rng = epoch_rng(opts.seed, 1 + l as u64, epoch);
            let mut total = 0.0;
            let mut batches = 0usize;
            for idx in plan.batches(train.len(), epoch)? {
                let xb = train.features.select_rows(&idx);
                let hb = inputs.select_rows(&idx);
                let yb = train.one_hot(&idx);
                let mut g = Graph::new();
                let h = g.constant(hb);
                let layer = &model.layers()[l];
                let out = layer.forward(&mut g, h, true, &mut rng)?;
                let loss = hsic_bottleneck_var(&mut g, out.out, &xb, &yb, cfg)?;
                let lv = g.value(loss).data()[0];
                if !lv.is_finite() {
                    hist.diverged_at = Some(hist.test_acc.len());
                    return Ok(hist);
                }
                let grads = g.backward(loss)?;
                let mut params = model.layers_mut()[l].params_mut();
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
            if !model.layers()[l].params().iter().all(|p| p.value.all_finite()) {
                hist.diverged_at = Some(hist.test_acc.len());
                return Ok(hist);
            }
            hist.train_acc.push(evaluate(model, train)?);
            hist.test_acc.push(evaluate(model, test)?);
            hist.loss.push(total / batches.max(1) as f64);
        }
    }

    let train_feats = Dataset {
        features: model.features(&train.features, hidden)?,
        ..train.clone()
    };
    let test_feats = Dataset {
        features: model.features(&test.features, hidden)?,
        ..test.clone()
    };
    let head = &mut model.layers_mut()[hidden];
    train_frozen_head(head, &train_feats, &test_feats, opts, 1 + hidden as u64, &mut hist)?;
    Ok(hist)
}
