//! Ingestion of proxy/accuracy tables, the correlation, regression and
//! importance experiments over them, and end-to-end desk pipelines.

pub mod columns;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod ingest;
pub mod pipeline;
pub mod report;
pub mod svg;
pub mod train;

pub use columns::{attack_column_name, AccColumn, Eps255};
pub use dataset::{ImageSet, SyntheticSpec};
pub use error::{BenchError, Result};
pub use experiment::{
    design, run_correlate, run_exclude_top1, run_fit, run_importance, run_top1_only, split_indices,
    AblationReport, CorrelationMatrix, ExperimentConfig, FitReport, ImportanceReport, Mode,
    Objective, Top1Report,
};
pub use ingest::{ingest_path, ingest_str, DatasetSummary, FlopsUnit, Format, IngestOptions, IngestTable, PercentMode, Record};
pub use pipeline::{config_from_json, run_desk_pipeline, spread_archs, AttackBudget, DataSource, PipelineConfig, PipelineOutputs};
pub use train::{train_sgd, TrainConfig};
