//! Runs training under any curriculum strategy and scores the result.

mod config;
mod grid;
mod manifest;
mod metrics;
mod plan;
mod train;

pub use config::{Mode, StrategyConfig, RC_STEP_LIMIT};
pub use grid::{
    grid_configs, run_grid, table1_strategies, GridResult, HyperGrid, StrategyRow, EPOCHS_PER_STAGE,
    EPSILONS, LEARNING_RATES, NUM_BUCKETS, RC_INTERVALS,
};
pub use manifest::{content_hash, corpus_hash, InputFile, RunManifest};
pub use metrics::{
    confusion_counts, confusion_matrix, evaluate, evaluate_predictions, metrics_from_confusion,
    predict_all, ClassMetrics, ConfusionExport, Metrics,
};
pub use plan::{build_plan, render, PlannedEpoch};
pub use train::{
    encode_documents, train, CurriculumInputs, EpochRecord, EpochSummary, RunMetrics,
    TrainOutcome, ValScores,
};
