//! Residual mini U-Net producing soft masks in `[0, 1]`.

mod checkpoint;
mod model;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use model::{Model, ModelConfig, Param};

use crate::autodiff::{Tape, Tensor};
use crate::error::Result;

/// Value-only normalized ReLU over the leading (sample) axis.
pub fn normalized_relu(x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone());
    let y = tape.normalized_relu(v)?;
    Ok(tape.value(y).clone())
}
