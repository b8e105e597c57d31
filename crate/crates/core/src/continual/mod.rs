//! Training regimes, replay memory, optimization and the result matrix.

mod audit;
mod buffer;
mod metrics;
mod optim;
mod regime;

pub use audit::{AccessKey, AccessLog, Split};
pub use buffer::{buffer_update, BufferEntry, MemoryBuffer, DEFAULT_BUFFER_CAP};
pub use metrics::{compute_bwt, Bwt, ResultMatrix};
pub use optim::{lr_schedule, AdamW, DEFAULT_LR, DEFAULT_LR_GAMMA, DEFAULT_LR_STEP};
pub use regime::{
    domain_order, evaluate, pooled_train_set, run_regime, run_regime_with, stage_count,
    stage_train_set, train_stage, CompletedStage, Mixing, NoObserver, OrderMode, Regime,
    RegimeConfig, RegimeOutcome, StageItem, StageObserver, StageRecord, StageSet, Transfer,
    DEFAULT_EPOCHS, DEFAULT_WEIGHT_DECAY,
};
