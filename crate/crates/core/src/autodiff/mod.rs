//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! The primitive set is exactly what the segmentation network and the Dice
//! objective need: same-padded convolution, ReLU, per-sample normalized
//! ReLU, elementwise add/mul/div, scalar scale/offset, full sum, channel
//! concatenation, stride-2 max pooling and nearest ×2 upsampling. There is no
//! broadcasting.

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{
    check_gradients, compare_gradients, relative_error, GradCheckOptions, GradCheckReport,
    ParamCheck,
};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
