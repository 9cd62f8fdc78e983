use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::nn::init::Initialization;
use crate::nn::layers::{DenseLayer, KanLayer, Layer};
use crate::spline::{SplineSpec, DEFAULT_DEGREE, DEFAULT_GRID};
use crate::tensor::{Gradients, Graph, Param, Tensor, Var};

pub const DEFAULT_DROPOUT: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Kan,
    Mlp,
    MlpWide,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Kan => "kan",
            Family::Mlp => "mlp",
            Family::MlpWide => "mlp-wide",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Family::Kan, Family::Mlp, Family::MlpWide]
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown model family `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeClass {
    Small,
    Medium,
    Large,
}

impl SizeClass {
    /// Hidden widths of the shallow/medium/deep architectures.
    pub fn widths(self) -> Vec<usize> {
        match self {
            SizeClass::Small => vec![128],
            SizeClass::Medium => vec![256, 128],
            SizeClass::Large => vec![512, 256, 128],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Medium => "medium",
            SizeClass::Large => "large",
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kind of layer producing the logits. A linear head keeps KAN and MLP
/// logits comparable; a KAN head makes the whole network a composition of
/// KAN layers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputHead {
    #[default]
    Linear,
    Kan,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default = "default_size")]
    pub size: SizeClass,
    /// May be left at 0 in experiment files; filled in from the dataset.
    #[serde(default)]
    pub in_dim: usize,
    #[serde(default)]
    pub out_dim: usize,
    /// Overrides the size-class widths when present (still doubled for
    /// `mlp-wide`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_domain")]
    pub spline_domain: (f64, f64),
    /// Base activation for KA units or hidden activation for Perceptrons;
    /// defaults to GELU and ReLU respectively.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activation: Option<Activation>,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default)]
    pub output_head: OutputHead,
}

fn default_size() -> SizeClass {
    SizeClass::Small
}
fn default_grid() -> usize {
    DEFAULT_GRID
}
fn default_degree() -> usize {
    DEFAULT_DEGREE
}
fn default_domain() -> (f64, f64) {
    (-1.0, 1.0)
}
fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl ModelConfig {
    pub fn new(family: Family, size: SizeClass, in_dim: usize, out_dim: usize) -> Self {
        ModelConfig {
            family,
            size,
            in_dim,
            out_dim,
            widths: None,
            grid: DEFAULT_GRID,
            degree: DEFAULT_DEGREE,
            spline_domain: default_domain(),
            activation: None,
            dropout: DEFAULT_DROPOUT,
            output_head: OutputHead::Linear,
        }
    }

    pub fn with_widths(mut self, widths: Vec<usize>) -> Self {
        self.widths = Some(widths);
        self
    }

    pub fn with_spline(mut self, grid: usize, degree: usize) -> Self {
        self.grid = grid;
        self.degree = degree;
        self
    }

    pub fn with_activation(mut self, act: Activation) -> Self {
        self.activation = Some(act);
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    pub fn with_output_head(mut self, head: OutputHead) -> Self {
        self.output_head = head;
        self
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        let base = self.widths.clone().unwrap_or_else(|| self.size.widths());
        match self.family {
            Family::MlpWide => base.into_iter().map(|w| 2 * w).collect(),
            _ => base,
        }
    }

    pub fn hidden_activation(&self) -> Activation {
        self.activation.unwrap_or(match self.family {
            Family::Kan => Activation::Gelu,
            Family::Mlp | Family::MlpWide => Activation::Relu,
        })
    }

    pub fn spline_spec(&self) -> Result<SplineSpec> {
        SplineSpec::uniform(self.spline_domain.0, self.spline_domain.1, self.grid, self.degree)
    }

    /// Short identifier such as `kan-small` or `mlp-wide-[64]`.
    pub fn label(&self) -> String {
        match &self.widths {
            None => format!("{}-{}", self.family, self.size),
            Some(w) => format!(
                "{}-[{}]",
                self.family,
                w.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Config("model input and output dims must be positive".into()));
        }
        let widths = self.hidden_widths();
        if widths.is_empty() {
            return Err(Error::Config("model needs at least one hidden width".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout probability {} not in [0, 1)",
                self.dropout
            )));
        }
        if self.family == Family::Kan || self.output_head == OutputHead::Kan {
            self.spline_spec().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

/// An instantiated layer stack. Hidden layers are KAN or dense depending on
/// the family; the final layer produces logits without an activation.
#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
}

/// Builds a model whose weights are drawn from `init` using `seed`.
pub fn build_model(cfg: &ModelConfig, init: Initialization, seed: u64) -> Result<Model> {
    Model::build(cfg, init, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn param_count(model: &Model) -> usize {
    model.param_count()
}

impl Model {
    pub fn build(cfg: &ModelConfig, init: Initialization, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let act = cfg.hidden_activation();
        let widths = cfg.hidden_widths();
        let mut layers = Vec::with_capacity(widths.len() + 1);
        let mut prev = cfg.in_dim;
        for &w in &widths {
            let layer = match cfg.family {
                Family::Kan => Layer::Kan(KanLayer::new(prev, w, cfg.spline_spec()?, act, cfg.dropout, init, rng)?),
                Family::Mlp | Family::MlpWide => {
                    Layer::Dense(DenseLayer::new(prev, w, act, cfg.dropout, init, rng)?)
                }
            };
            layers.push(layer);
            prev = w;
        }
        let head = match cfg.output_head {
            OutputHead::Linear => Layer::Dense(DenseLayer::new(prev, cfg.out_dim, Activation::Identity, 0.0, init, rng)?),
            OutputHead::Kan => Layer::Kan(KanLayer::new(prev, cfg.out_dim, cfg.spline_spec()?, act, 0.0, init, rng)?),
        };
        layers.push(head);
        Ok(Model {
            config: cfg.clone(),
            layers,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn hidden_layer_count(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// Records the full forward pass; the returned bindings line up with
    /// [`Model::params`].
    pub fn forward(
        &self,
        g: &mut Graph,
        x: Var,
        training: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Var, Vec<Var>)> {
        let mut h = x;
        let mut bindings = Vec::new();
        for layer in &self.layers {
            let out = layer.forward(g, h, training, rng)?;
            h = out.out;
            bindings.extend(out.bindings);
        }
        Ok((h, bindings))
    }

    /// Adds the gradients of `bindings` (from [`Model::forward`]) into the
    /// parameter gradient buffers.
    pub fn accumulate_grads(&mut self, g: &Graph, grads: &Gradients, bindings: &[Var]) -> Result<()> {
        let params = self.params_mut();
        if params.len() != bindings.len() {
            return Err(Error::Contract(format!(
                "{} bindings for {} parameters",
                bindings.len(),
                params.len()
            )));
        }
        for (p, &b) in params.into_iter().zip(bindings) {
            if let Some(gr) = grads.get(b) {
                p.accumulate(gr)?;
            } else {
                debug_assert_eq!(g.value(b).shape(), p.value.shape());
            }
        }
        Ok(())
    }

    /// Evaluation-mode logits, computed in row chunks without recording.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        self.features(x, self.layers.len())
    }

    /// Output of the first `depth` layers in evaluation mode.
    pub fn features(&self, x: &Tensor, depth: usize) -> Result<Tensor> {
        const CHUNK: usize = 512;
        let (n, _) = x.dims2()?;
        let depth = depth.min(self.layers.len());
        if depth == 0 {
            return Ok(x.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut data = Vec::new();
        let mut width = 0;
        for start in (0..n).step_by(CHUNK) {
            let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
            let mut g = Graph::untraced();
            let mut h = g.constant(x.select_rows(&idx));
            for layer in &self.layers[..depth] {
                h = layer.forward(&mut g, h, false, &mut rng)?.out;
            }
            width = g.value(h).cols();
            data.extend_from_slice(g.value(h).data());
        }
        Tensor::new(vec![n, width], data)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .into_iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    pub fn load_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Consistency(format!(
                "checkpoint holds {} parameters, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            params: self.flat_params(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let mut model = Model::build(&ck.config, Initialization::KaimingNormal, &mut ChaCha8Rng::seed_from_u64(0))?;
        model.load_flat_params(&ck.params)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Model::from_checkpoint(&serde_json::from_str(&text)?)
    }
}

const CHECKPOINT_FORMAT: &str = "kanlab-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;

/// Serialized model: configuration plus every parameter flattened in
/// [`Model::params`] order. JSON numbers are written in shortest
/// round-trip form, so reloading is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<f64>,
}
