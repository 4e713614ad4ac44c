pub mod autograd;
pub mod data;
pub mod error;
pub mod eval;
pub mod flops;
pub mod lgc;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod scalar;
pub mod tensor;
pub mod toy;
pub mod train;

pub use autograd::{Gradients, Graph, MacRecord, Parameter, Var};
pub use error::{Error, Result};
pub use ops::{ConvParams, ConvSpec};
pub use scalar::Scalar;
pub use model::{Model, ModelConfig};
pub use tensor::{Shape, Tensor};
pub use train::{Checkpoint, TrainConfig, Trainer};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Graph32 = Graph<f32>;
pub type Graph64 = Graph<f64>;
pub type Model32 = Model<f32>;
pub type Model64 = Model<f64>;
