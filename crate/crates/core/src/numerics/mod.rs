//! Dense tensor math with hand-wired backward passes.
//!
//! Every differentiable primitive comes as a forward function plus a matching
//! `*_backward` that takes the upstream gradient and returns (or accumulates)
//! the gradients of its inputs. There is no tape: the model code calls the
//! backward functions in reverse order itself.

mod conv;
mod ops;
mod optim;
mod tensor;

pub use conv::{conv2d, conv2d_backward, conv_output_size};
pub use ops::{
    bce, bce_backward, bilinear_sample, bilinear_sample_backward, linear, linear_backward, relu,
    relu_backward, sigmoid, sigmoid_backward_from_output, tanh_backward_from_output,
};
pub use optim::{step_decay_lr, AdamConfig, Param, ParamStore};
pub use tensor::Tensor;
