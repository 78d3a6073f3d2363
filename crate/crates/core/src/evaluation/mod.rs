//! Experiment grid over tasks, composition modes and sampled datasets, with
//! the metrics used to judge recommendations and label estimates.

mod experiment;
pub mod metrics;
mod report;
mod sampling;

use thiserror::Error;

use crate::embedding::CompositionMode;

pub use experiment::{run_experiment, CellRecord, CellStatus, Experiment, ExperimentConfig, IndexSet};
pub use metrics::{
    classify_hits, classify_sources, mean_std, pool, prf, similarity_deltas, Metric, PrfScore, SimilarityDelta,
    SourceCounts,
};
pub use report::{AggregateRow, EvalReport, PrfSummary, CELLS_FILE, FIGURES_FILE, SUMMARY_FILE};
pub use sampling::{
    default_categories, select_samples, SampleEntry, SamplePlan, DEFAULT_CATEGORIES, DEFAULT_PER_CATEGORY,
    DEFAULT_SEED,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("category `{category}` has {available} eligible datasets, {needed} needed")]
    InsufficientCandidates {
        category: String,
        available: usize,
        needed: usize,
    },
    #[error("category `{0}` requested twice")]
    DuplicateCategory(String),
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("gold label set is empty")]
    EmptyGold,
    #[error("no description vector for {0}")]
    MissingVector(String),
    #[error("no index for mode {0}")]
    MissingIndex(CompositionMode),
    #[error("invalid sample file: {0}")]
    InvalidSamples(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
