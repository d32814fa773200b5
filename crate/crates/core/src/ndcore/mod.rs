//! Differentiable numeric core: tensors, the gradient tape, MLPs, ADAM and
//! seeded random streams.

mod adam;
mod mlp;
mod rng;
pub mod scalar;
mod tape;
mod tensor;

pub use adam::{clip_grad_norm, AdamConfig, AdamState, StepOutcome};
pub use mlp::{
    mlp_apply, Activation, InitMode, Layer, LayerVars, Mlp, MlpLayout, MlpVars, Normalize,
    LAYER_NORM_FLOOR,
};
pub use rng::RngStream;
pub use scalar::{log1m_sigmoid, log_sigmoid, sigmoid, softplus};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
