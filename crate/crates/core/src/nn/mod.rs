//! KA units, KAN and Perceptron layers, initializers and the model builder.

pub mod init;
pub mod layers;
pub mod model;

pub use init::{kaiming_normal, kaiming_uniform, orthogonal, Initialization};
pub use layers::{dropout, ka_unit_forward, DenseLayer, KaUnitParams, KanLayer, Layer, LayerOutput};
pub use model::{build_model, param_count, Checkpoint, Family, Model, ModelConfig, OutputHead, SizeClass};
