//! Run configuration, the training loop, checkpoints and evaluation.

mod config;
mod trainer;

pub use config::{Flags, Overrides, RunConfig, Variant, CONFIG_FORMAT_VERSION};
pub use trainer::{
    evaluate, load_report, save_report, split_rows, train, train_baseline, Checkpoint, EpochLog,
    Network, Split, TrainedModel, Trainer, CHECKPOINT_FORMAT_VERSION, REPORT_FORMAT_VERSION,
};

#[cfg(test)]
mod tests;
