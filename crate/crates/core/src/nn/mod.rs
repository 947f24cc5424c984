//! Minimal neural-network substrate: tensors, layers, attention, loss,
//! reverse-mode gradients and Adam.

mod layers;
mod ops;
mod optim;
mod rng;
mod tape;
mod tensor;

pub use layers::{glorot_uniform, multi_head_attention, AttentionDims, DenseLayer, Embedding, MultiHeadAttention};
pub use ops::{
    activation, bce_loss, dropout_apply, matmul, scaled_dot_attention, sigmoid, softmax_rows, Activation,
    DropoutMode, DropoutSpec, MASKED_SCORE, PROB_EPS, SELU_ALPHA, SELU_LAMBDA,
};
pub use optim::{adam_step, Adam, AdamConfig, AdamState};
pub use rng::RngStream;
pub use tape::{Gradients, ParamId, ParamStore, Parameter, Tape, Var};
pub use tensor::Tensor;
