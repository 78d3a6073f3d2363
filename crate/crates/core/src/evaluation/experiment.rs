use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{classify_hits, classify_sources, prf, similarity_deltas, PrfScore, SimilarityDelta, SourceCounts};
use super::report::EvalReport;
use super::sampling::{SampleEntry, SamplePlan};
use super::EvalError;
use crate::catalog::Catalog;
use crate::embedding::{CompositionMode, EmbeddingProvider};
use crate::pipeline::{
    LlmClient, Pipeline, PipelineError, PipelineOptions, RecommendationEntry, ResolveOptions, RunLog, TaskKind,
    TaskOutcome, DEFAULT_N,
};
use crate::similarity::{CategoryLabel, CategoryRule};
use crate::vector_store::{build_index, IndexError, VectorIndex};

/// One index per composition mode, all from the same provider.
#[derive(Debug, Clone, Default)]
pub struct IndexSet {
    indices: BTreeMap<CompositionMode, VectorIndex>,
}

impl IndexSet {
    /// Builds the requested modes plus D, which description similarity uses.
    pub fn build(
        catalog: &Catalog,
        modes: &[CompositionMode],
        provider: &dyn EmbeddingProvider,
    ) -> Result<Self, IndexError> {
        let mut set = IndexSet::default();
        for &mode in modes.iter().chain([CompositionMode::D].iter()) {
            if !set.indices.contains_key(&mode) {
                set.indices.insert(mode, build_index(catalog, mode, provider)?);
            }
        }
        Ok(set)
    }

    pub fn from_indices(indices: impl IntoIterator<Item = VectorIndex>) -> Result<Self, EvalError> {
        let mut set = IndexSet::default();
        for index in indices {
            if let Some(first) = set.indices.values().next() {
                if first.provider_id() != index.provider_id() {
                    return Err(EvalError::Contract(format!(
                        "indices come from different providers: {} and {}",
                        first.provider_id(),
                        index.provider_id()
                    )));
                }
            }
            set.indices.insert(index.mode(), index);
        }
        Ok(set)
    }

    pub fn get(&self, mode: CompositionMode) -> Option<&VectorIndex> {
        self.indices.get(&mode)
    }

    pub fn modes(&self) -> impl Iterator<Item = CompositionMode> + '_ {
        self.indices.keys().copied()
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub tasks: Vec<TaskKind>,
    pub modes: Vec<CompositionMode>,
    pub n: usize,
    /// Worker threads for the cell grid.
    pub parallelism: usize,
    pub resolve: ResolveOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tasks: TaskKind::ALL.to_vec(),
            modes: CompositionMode::ALL.to_vec(),
            n: DEFAULT_N,
            parallelism: 4,
            resolve: ResolveOptions::default(),
        }
    }
}

/// Everything a run reads from. Nothing here is mutated.
pub struct Experiment<'a> {
    pub catalog: &'a Catalog,
    pub indices: &'a IndexSet,
    pub provider: &'a dyn EmbeddingProvider,
    pub llm: &'a dyn LlmClient,
    pub run_log: Option<&'a RunLog>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed,
}

/// Result for one (task, mode, sample) cell. A failed LLM call leaves the
/// retrieval side (`retrieved`, `retrieval_counts`, `prf_baseline`) filled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub task: TaskKind,
    pub mode: CompositionMode,
    pub provider_id: String,
    pub sample_id: String,
    pub category: CategoryLabel,
    pub status: CellStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub retrieved: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_counts: Option<SourceCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<SourceCounts>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub recommended: Vec<RecommendationEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<SimilarityDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prf_baseline: Option<PrfScore>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prf_llm: Option<PrfScore>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicted: Vec<String>,
}

impl CellRecord {
    fn new(task: TaskKind, mode: CompositionMode, provider_id: &str, sample: &SampleEntry) -> Self {
        CellRecord {
            task,
            mode,
            provider_id: provider_id.to_string(),
            sample_id: sample.dataset_id.clone(),
            category: sample.category.clone(),
            status: CellStatus::Ok,
            error: None,
            retrieved: Vec::new(),
            prompt_hash: None,
            retrieval_counts: None,
            counts: None,
            recommended: Vec::new(),
            deltas: Vec::new(),
            prf_baseline: None,
            prf_llm: None,
            predicted: Vec::new(),
        }
    }

    fn fail(mut self, error: impl ToString) -> Self {
        self.status = CellStatus::Failed;
        self.error = Some(error.to_string());
        self
    }
}

/// Runs every (task, mode, sample) cell. Cells run in parallel but the
/// report lists them in task, mode, sample order. A failing cell is recorded
/// as failed and does not stop the run.
pub fn run_experiment(
    ctx: &Experiment<'_>,
    plan: &SamplePlan,
    config: &ExperimentConfig,
) -> Result<EvalReport, EvalError> {
    if config.n == 0 {
        return Err(EvalError::Contract("n must be at least 1".into()));
    }
    if plan.is_empty() {
        return Err(EvalError::Contract("no samples to evaluate".into()));
    }
    for s in &plan.samples {
        if !ctx.catalog.contains(&s.dataset_id) {
            return Err(EvalError::UnknownDataset(s.dataset_id.clone()));
        }
    }
    for &mode in &config.modes {
        let index = ctx.indices.get(mode).ok_or(EvalError::MissingIndex(mode))?;
        if index.provider_id() != ctx.provider.provider_id() {
            return Err(EvalError::Contract(format!(
                "index for {mode} was built with {}, provider is {}",
                index.provider_id(),
                ctx.provider.provider_id()
            )));
        }
    }
    if config.tasks.iter().any(|t| t.is_recommendation()) && ctx.indices.get(CompositionMode::D).is_none() {
        return Err(EvalError::MissingIndex(CompositionMode::D));
    }

    let mut specs = Vec::new();
    for &task in &config.tasks {
        for &mode in &config.modes {
            for sample in &plan.samples {
                specs.push((task, mode, sample));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism.max(1))
        .build()
        .map_err(|e| EvalError::Contract(format!("cannot start worker pool: {e}")))?;
    let cells: Vec<CellRecord> = pool.install(|| {
        specs
            .par_iter()
            .map(|&(task, mode, sample)| run_cell(ctx, config, task, mode, sample))
            .collect()
    });
    Ok(EvalReport::new(ctx.provider.provider_id(), cells))
}

fn run_cell(
    ctx: &Experiment<'_>,
    config: &ExperimentConfig,
    task: TaskKind,
    mode: CompositionMode,
    entry: &SampleEntry,
) -> CellRecord {
    let index = ctx.indices.get(mode).expect("checked before the run");
    let mut cell = CellRecord::new(task, mode, index.provider_id(), entry);
    let pipeline = match Pipeline::new(ctx.catalog, index, ctx.provider) {
        Ok(p) => p,
        Err(e) => return cell.fail(e),
    };
    let mut pipeline = pipeline.with_llm(ctx.llm).with_options(PipelineOptions {
        resolve: config.resolve.clone(),
    });
    if let Some(log) = ctx.run_log {
        pipeline = pipeline.with_run_log(log);
    }
    let sample = ctx.catalog.get(&entry.dataset_id).expect("checked before the run");

    let stage = match pipeline.retrieve(task, &sample.id, config.n) {
        Ok(s) => s,
        Err(e) => return cell.fail(e),
    };
    cell.retrieved = stage.hits.iter().map(|h| h.dataset_id.clone()).collect();
    cell.prompt_hash = Some(stage.prompt_hash());
    let gold = match task {
        TaskKind::TagEstimation => Some(&sample.tags),
        TaskKind::VariableEstimation => Some(&sample.variables),
        _ => None,
    };
    if let Some(gold) = gold {
        match prf(&stage.candidates, gold) {
            Ok(score) => cell.prf_baseline = Some(score),
            Err(e) => return cell.fail(e),
        }
    } else {
        cell.retrieval_counts = Some(classify_hits(&stage.hits, &entry.category, ctx.catalog));
    }

    let rule = CategoryRule::Label(entry.category.clone());
    let outcome = match pipeline.generate(stage, &rule) {
        Ok(o) => o,
        Err(PipelineError::Llm { source, .. }) => return cell.fail(format!("llm: {source}")),
        Err(e) => return cell.fail(e),
    };
    match outcome {
        TaskOutcome::Recommendation(rec) => {
            cell.counts = Some(classify_sources(&rec, &entry.category, ctx.catalog));
            let description = ctx.indices.get(CompositionMode::D).expect("checked before the run");
            match similarity_deltas(sample, &entry.category, &rec.hits, &rec, description, ctx.catalog) {
                Ok(d) => cell.deltas = d,
                Err(e) => return cell.fail(e),
            }
            cell.recommended = rec.entries;
        }
        TaskOutcome::Estimation(est) => {
            let gold = gold.expect("estimation tasks have gold labels");
            match prf(&est.predicted, gold) {
                Ok(score) => cell.prf_llm = Some(score),
                Err(e) => return cell.fail(e),
            }
            cell.predicted = est.predicted;
        }
    }
    cell
}
