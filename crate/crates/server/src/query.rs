use scout_core::evaluation::SourceCounts;
use scout_core::pipeline::{Pipeline, PipelineError, TaskOutcome, DEFAULT_N};
use scout_core::similarity::{dice, CategoryRule};
use scout_core::{CategoryLabel, CompositionMode, DatasetMetadata, SourceClass, TaskKind};
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::AppState;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub task: TaskKind,
    pub dataset_id: String,
    pub mode: CompositionMode,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub use_llm: bool,
    /// Category tag for source classification. Without it, a shared tag
    /// with the query dataset counts as same category.
    #[serde(default)]
    pub category: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HitView {
    pub rank: usize,
    pub dataset_id: String,
    pub name: String,
    pub score: f64,
    pub dice: f64,
    pub description_similarity: Option<f64>,
    pub source: SourceClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryView {
    pub rank: usize,
    pub raw_name: String,
    pub resolved_id: Option<String>,
    pub name: Option<String>,
    pub source: SourceClass,
    pub dice: Option<f64>,
    pub description_similarity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeView {
    Recommendation {
        entries: Vec<EntryView>,
        counts: SourceCounts,
        warnings: Vec<String>,
        prompt_hash: String,
        response: String,
    },
    Estimation {
        predicted: Vec<String>,
        candidates: Vec<String>,
        warnings: Vec<String>,
        prompt_hash: String,
        response: String,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryResponse {
    pub task: TaskKind,
    pub dataset_id: String,
    pub mode: CompositionMode,
    pub provider_id: String,
    pub n: usize,
    pub hits: Vec<HitView>,
    pub outcome: Option<OutcomeView>,
}

fn pipeline_error(e: PipelineError) -> ApiError {
    match e {
        PipelineError::UnknownDataset(id) => ApiError::not_found(&id),
        PipelineError::Contract(m) => ApiError::bad_request(m),
        PipelineError::Embed(e) => ApiError::upstream(format!("embedding failed: {e}"), None),
        PipelineError::NoLlm => ApiError::unavailable("no LLM configured"),
        PipelineError::Llm { source, .. } => ApiError::upstream(format!("LLM call failed: {source}"), None),
        PipelineError::Index(e) => ApiError::internal(e.to_string()),
    }
}

/// Runs one query to completion. Blocking: embeds and may call the LLM.
pub fn run_query(state: &AppState, req: QueryRequest) -> Result<QueryResponse, ApiError> {
    let catalog = &*state.catalog;
    let sample = catalog.get(&req.dataset_id).ok_or_else(|| ApiError::not_found(&req.dataset_id))?;
    let n = req.n.unwrap_or(DEFAULT_N);
    if n == 0 {
        return Err(ApiError::bad_request("n must be at least 1"));
    }
    let index = state
        .indices
        .get(req.mode)
        .ok_or_else(|| ApiError::bad_request(format!("no index loaded for mode {}", req.mode)))?;
    let mut pipeline = Pipeline::new(catalog, index, &*state.provider).map_err(pipeline_error)?;
    if let Some(llm) = &state.llm {
        pipeline = pipeline.with_llm(&**llm);
    }
    if let Some(log) = &state.run_log {
        pipeline = pipeline.with_run_log(log);
    }
    let stage = pipeline.retrieve(req.task, &sample.id, n).map_err(pipeline_error)?;
    let rule = CategoryRule::for_sample(req.category.as_deref().map(CategoryLabel::new), sample);

    let description = |other: &DatasetMetadata| {
        state
            .indices
            .get(CompositionMode::D)
            .and_then(|ix| ix.pair_similarity(&sample.id, &other.id))
    };
    let sample_vars = sample.variable_set();
    let hits = stage
        .hits
        .iter()
        .filter_map(|h| {
            let meta = catalog.get(&h.dataset_id)?;
            Some(HitView {
                rank: h.rank,
                dataset_id: h.dataset_id.clone(),
                name: meta.name.clone(),
                score: h.score,
                dice: dice(&sample_vars, &meta.variable_set()),
                description_similarity: description(meta),
                source: rule.classify(meta),
            })
        })
        .collect();
    let mut response = QueryResponse {
        task: req.task,
        dataset_id: sample.id.clone(),
        mode: req.mode,
        provider_id: index.provider_id().to_string(),
        n,
        hits,
        outcome: None,
    };
    if !req.use_llm {
        return Ok(response);
    }
    if state.llm.is_none() {
        return Err(ApiError::unavailable("no LLM configured"));
    }

    let outcome = match pipeline.generate(stage, &rule) {
        Ok(o) => o,
        Err(PipelineError::Llm { source, .. }) => {
            return Err(ApiError::upstream(format!("LLM call failed: {source}"), Some(response)))
        }
        Err(e) => return Err(pipeline_error(e)),
    };
    response.outcome = Some(match outcome {
        TaskOutcome::Recommendation(rec) => {
            let mut counts = SourceCounts::default();
            let entries = rec
                .entries
                .into_iter()
                .enumerate()
                .map(|(i, e)| {
                    counts.add(e.source);
                    let meta = e.resolved_id.as_deref().and_then(|id| catalog.get(id));
                    EntryView {
                        rank: i + 1,
                        raw_name: e.raw_name,
                        name: meta.map(|m| m.name.clone()),
                        source: e.source,
                        dice: meta.map(|m| dice(&sample_vars, &m.variable_set())),
                        description_similarity: meta.and_then(description),
                        resolved_id: e.resolved_id,
                    }
                })
                .collect();
            OutcomeView::Recommendation {
                entries,
                counts,
                warnings: rec.warnings,
                prompt_hash: rec.prompt_hash,
                response: rec.response,
            }
        }
        TaskOutcome::Estimation(est) => OutcomeView::Estimation {
            predicted: est.predicted,
            candidates: est.candidates,
            warnings: est.warnings,
            prompt_hash: est.prompt_hash,
            response: est.response,
        },
    });
    Ok(response)
}
