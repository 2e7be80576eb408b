//! Optimiser, minibatch loop and the two-stage training pipeline.

pub mod config;
pub mod rmsprop;
pub mod trainer;

pub use config::TrainConfig;
pub use rmsprop::{apply_mask, clip_gradients, rmsprop_step, OptState};
pub use trainer::{
    refine_corpus, train_full, train_model, train_stage1, validation_log2ppl, EpochSummary, LogEntry,
    RefineReport, TrainOutcome,
};
