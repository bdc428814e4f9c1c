//! Splitting, losses, Adam, the training loop and run reports.

pub mod experiment;
pub mod metrics;
pub mod optim;
pub mod report;
pub mod split;
pub mod train;

pub use experiment::{
    build_model, resolve_selection, run_experiment, split_features, Experiment, ExperimentConfig,
};
pub use metrics::{
    accuracy, bce_loss, format_metric, mape, metric_name, predicted_class, regression_loss,
    task_loss, task_metric, DECISION_THRESHOLD,
};
pub use optim::{clip_global_norm, global_norm, Adam, AdamConfig};
pub use report::{
    Checkpoint, EpochRecord, FinalMetrics, Prediction, RunReport, SplitMetrics, HISTORY_HEADER,
};
pub use split::{split, Part, Split, SplitSpec};
pub use train::{evaluate, train, Evaluation, TrainConfig};
