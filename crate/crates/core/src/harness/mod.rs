//! The experiment pipeline: data preparation, the current and future
//! classifiers, per-instance recourse evaluation and cost-validity sweeps.

pub mod config;
pub mod jobs;
pub mod sweep;

pub use config::{
    derive_seed, DatasetConfig, ExperimentConfig, FutureConfig, GridPoint, MethodSpec, TrainSection, CONFIG_VERSION,
};
pub use sweep::{
    aggregate, classifier_report, evaluate_recourse, load_datasets, pareto_flags, pareto_sweep, pareto_sweep_prepared,
    prepare, retrain_future_models, run_sweep, sample_instances, sort_records, write_aggregate_csv, write_records_csv,
    AggregateRow, EvaluationRecord, Prepared, SweepOutput, AGGREGATE_COLUMNS, RECORD_COLUMNS,
};
