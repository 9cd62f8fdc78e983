//! Kolmogorov-Arnold networks and matched Perceptron baselines built on a
//! small reverse-mode differentiation tape, together with the harness used
//! to study how initialization, optimizer and learning rate shape their
//! training.
//!
//! Module map:
//! - [`tensor`]: dense `f64` tensors and the recording [`tensor::Graph`].
//! - [`spline`]: uniform B-spline bases (Cox–de Boor) and spline evaluation.
//! - [`nn`]: KA units, KAN/dense layers, initializers, model builder.
//! - [`optim`]: SGD, SGD with momentum, Adam.
//! - [`hsic`]: HSIC-bottleneck layer-wise training.
//! - [`data`]: IDX/CSV loaders, normalization, batching, synthetic sets.
//! - [`metrics`]: accuracy, generalization gap, TwoNN intrinsic dimension, EF.
//! - [`runner`]: grid expansion, run execution, sweeps, JSONL/CSV/SVG output.

pub mod activation;
pub mod data;
pub mod error;
pub mod hsic;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod runner;
pub mod spline;
pub mod tensor;

pub use activation::Activation;
pub use error::{Error, Result};
pub use tensor::{Graph, Param, Tensor, Var};
