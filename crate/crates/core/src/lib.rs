//! Continual-learning laboratory for soft-label segmentation under domain
//! shift.
//!
//! The crate trains a small residual U-Net on a sequence of synthetic
//! "centers" and compares sequential fine-tuning, experience replay, and
//! single-/multi-domain baselines through the K×K result matrix and backward
//! transfer.
//!
//! * [`autodiff`]: reverse-mode differentiation over dense `f64` tensors
//! * [`segnet`]: the network and its checkpoint format
//! * [`objectives`]: soft Dice loss and thresholded Dice score
//! * [`domainsynth`]: synthetic multi-center datasets, splits, patch sampling
//! * [`continual`]: training regimes, replay buffer, AdamW, result matrix, BWT
//! * [`expcli`]: experiment configuration, artifacts and reports

pub mod autodiff;
pub mod continual;
pub mod domainsynth;
pub mod error;
pub mod expcli;
pub mod objectives;
pub mod rawio;
pub mod rng;
pub mod segnet;

pub use error::{Error, ErrorKind, Result};
