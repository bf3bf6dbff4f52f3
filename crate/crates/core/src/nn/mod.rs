//! Dense tensors, sparse-dense kernels, and the Adam optimizer.

mod ops;
mod optim;
mod rng;
mod tensor;

pub use ops::{
    glorot_init, log_softmax_rows, masked_cross_entropy, relu, relu_backward, sigmoid,
    sigmoid_scalar, softmax_rows, spmm, spmm_transposed, SIGMOID_EPS,
};
pub use optim::{adam_step, AdamConfig, Parameter};
pub use rng::Rng;
pub use tensor::Tensor;

pub(crate) use tensor::dot;
