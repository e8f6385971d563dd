//! Training, evaluation and the model-comparison sweep.

mod config;
mod experiment;
mod metrics;
mod report;
mod train;

pub use config::{ExperimentConfig, ModelKind};
pub use experiment::{
    channel_model, checkpoint_of, checkpoint_train_groups, evaluate, generate_profile, metrics_row, push_cell,
    sweep_sequence_lengths, CellOutcome, Experiment, ProfileData, Windows,
};
pub use metrics::{check_split_hygiene, mean, percentile, persistence_baseline, summarize};
pub use report::{MetricsReport, MetricsRow, RawError, RawErrors, RAW_HEADER, REPORT_HEADER};
pub use train::{eval_loss, prediction_errors, train, EpochStats, TrainConfig, TrainReport};
