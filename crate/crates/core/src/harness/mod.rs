//! Experiment machinery: configuration, synthetic phantom subjects, the
//! volume → dataset pipeline, training/evaluation, the averaged-accuracy
//! experiment matrix and CSV metrics.

mod config;
mod experiment;
mod phantom;
mod pipeline;
mod report;
mod train;

pub use config::ExperimentConfig;
pub use experiment::{
    reference_accuracy, row_label, run_experiment, run_experiment_on, run_single, ExperimentReport, ExperimentRow,
    RunResult,
};
pub use phantom::{generate_phantoms, PhantomConfig};
pub use pipeline::{build_variant_dataset, preprocess_volume, PipelineOptions};
pub use report::{parse_metrics_csv, report_metrics, METRICS_HEADER};
pub use train::{evaluate, predict_dataset, train, train_with, EpochMetrics, Evaluation, MetricsHistory, TrainConfig};
