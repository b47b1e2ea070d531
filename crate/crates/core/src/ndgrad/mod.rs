//! Small reverse-mode autodiff, MLPs and optimizers.

mod checkpoint;
mod graph;
mod matrix;
mod mlp;
mod optim;

pub use checkpoint::Checkpoint;
pub use graph::{sigmoid, softplus, Graph, Var};
pub use matrix::Matrix;
pub use mlp::{backward, Activation, Binding, MlpSpec, ParamStore};
pub use optim::{adam_step, clip_grad_norm, AdamConfig};
