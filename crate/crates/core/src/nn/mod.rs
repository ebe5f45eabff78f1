//! Small dense network engine with explicit forward and backward passes.
//!
//! A model is split into a feature extractor, a label head and one domain
//! classifier head per source domain. The domain heads sit behind a gradient
//! reversal layer, so backpropagating a single loss trains them to separate
//! domains while pushing the feature extractor towards domain confusion.

pub mod checkpoint;
mod layer;
pub mod loss;
pub mod matrix;
mod model;
pub mod optim;
pub mod rng;

pub use layer::{Activation, Dense, LayerGrad, StackCache};
pub use matrix::Matrix;
pub use model::{
    backward, backward_into, forward, forward_heads, grad_reversal_backward, grad_reversal_forward, Architecture,
    ForwardCache, Gradients, Heads, Mode, ModelParams, OutputGrads,
};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
