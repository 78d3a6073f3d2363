//! The retrieval-augmented answer loop for one task and one sample dataset:
//! embed the question with the sample's metadata, retrieve the top-N
//! neighbours, fill the prompt template, ask the LLM and resolve its answer.

mod llm;
mod parse;
mod prompt;
mod runlog;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::embedding::{embed_query, CompositionMode, EmbedError, EmbeddingProvider};
use crate::similarity::{CategoryLabel, CategoryRule, SourceClass};
use crate::text::normalize_key;
use crate::vector_store::{IndexError, RetrievalHit, VectorIndex};

pub use llm::{
    prompt_hash, DecodingParams, EchoPolicy, LlmClient, LlmError, RemoteChatClient, RemoteChatConfig,
    ScriptedLlm, LLM_API_BASE, LLM_API_KEY, LLM_MODEL,
};
pub use parse::{
    extract_items, parse_labels, parse_ranked_list, resolve_name, ParsedEntry, ParsedList,
    ResolveOptions,
};
pub use prompt::{build_prompt, context_block, render_question, with_candidate_list, PromptBundle, PROMPT_TEMPLATE};
pub use runlog::{RunLog, RunLogRecord};

/// Retrieval depth used when none is given.
pub const DEFAULT_N: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("no LLM client configured")]
    NoLlm,
    /// The LLM call failed; the retrieval stage is kept so the pre-LLM path
    /// can still be evaluated.
    #[error("{source}")]
    Llm {
        stage: Box<RetrievalStage>,
        source: LlmError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "similar")]
    Similar,
    #[serde(rename = "combinable")]
    Combinable,
    #[serde(rename = "tags")]
    TagEstimation,
    #[serde(rename = "variables")]
    VariableEstimation,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Similar,
        TaskKind::Combinable,
        TaskKind::TagEstimation,
        TaskKind::VariableEstimation,
    ];

    pub fn number(self) -> u8 {
        match self {
            TaskKind::Similar => 1,
            TaskKind::Combinable => 2,
            TaskKind::TagEstimation => 3,
            TaskKind::VariableEstimation => 4,
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            TaskKind::Similar => "similar",
            TaskKind::Combinable => "combinable",
            TaskKind::TagEstimation => "tags",
            TaskKind::VariableEstimation => "variables",
        }
    }

    pub fn question(self) -> &'static str {
        match self {
            TaskKind::Similar => {
                "Which datasets are similar to this dataset? Please select multiple candidates and rank them by relevance."
            }
            TaskKind::Combinable => {
                "Which datasets would be suitable to combine with this dataset? Please select multiple candidates and rank them by their combinability."
            }
            TaskKind::TagEstimation => {
                "What tags are associated with this dataset? Please select from the list below and sort the results by relevance."
            }
            TaskKind::VariableEstimation => {
                "What variables are included in this dataset? Please select from the list below and sort the results by relevance."
            }
        }
    }

    pub fn is_recommendation(self) -> bool {
        matches!(self, TaskKind::Similar | TaskKind::Combinable)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "1" | "similar" => Ok(TaskKind::Similar),
            "2" | "combinable" | "combine" => Ok(TaskKind::Combinable),
            "3" | "tags" | "tag" | "tag-estimation" => Ok(TaskKind::TagEstimation),
            "4" | "variables" | "variable" | "variable-estimation" => Ok(TaskKind::VariableEstimation),
            other => Err(format!(
                "unknown task `{other}` (expected 1-4, similar, combinable, tags or variables)"
            )),
        }
    }
}

/// Everything up to and including prompt construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalStage {
    pub task: TaskKind,
    pub sample_id: String,
    pub mode: CompositionMode,
    pub provider_id: String,
    pub hits: Vec<RetrievalHit>,
    /// Tags or variables offered to the LLM (estimation tasks only).
    pub candidates: Vec<String>,
    pub prompt: PromptBundle,
}

impl RetrievalStage {
    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.prompt.rendered)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEntry {
    pub raw_name: String,
    pub resolved_id: Option<String>,
    pub source: SourceClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationOutcome {
    pub entries: Vec<RecommendationEntry>,
    /// The retrieval list the LLM filtered.
    pub hits: Vec<RetrievalHit>,
    pub warnings: Vec<String>,
    pub prompt_hash: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationOutcome {
    /// Labels named by the LLM, in its order.
    pub predicted: Vec<String>,
    /// Labels shown to the LLM; also the retrieval-only prediction.
    pub candidates: Vec<String>,
    pub hits: Vec<RetrievalHit>,
    pub warnings: Vec<String>,
    pub prompt_hash: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskOutcome {
    Recommendation(RecommendationOutcome),
    Estimation(EstimationOutcome),
}

impl TaskOutcome {
    pub fn hits(&self) -> &[RetrievalHit] {
        match self {
            TaskOutcome::Recommendation(r) => &r.hits,
            TaskOutcome::Estimation(e) => &e.hits,
        }
    }
}

/// Tags (task 3) or variables (task 4) across the retrieved records,
/// deduplicated on the normalized name, in order of first appearance by rank.
pub fn candidate_labels(task: TaskKind, hits: &[RetrievalHit], catalog: &Catalog) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for hit in hits {
        let Some(meta) = catalog.get(&hit.dataset_id) else {
            continue;
        };
        let labels = match task {
            TaskKind::TagEstimation => &meta.tags,
            TaskKind::VariableEstimation => &meta.variables,
            _ => return Vec::new(),
        };
        for label in labels {
            if seen.insert(normalize_key(label)) {
                out.push(label.clone());
            }
        }
    }
    out
}

/// Resolved entries are classified by category, unresolved ones count as
/// generated by the LLM.
pub fn classify_entries(parsed: &ParsedList, catalog: &Catalog, rule: &CategoryRule) -> Vec<RecommendationEntry> {
    parsed
        .entries
        .iter()
        .map(|e| {
            let meta = e.resolved_id.as_deref().and_then(|id| catalog.get(id));
            RecommendationEntry {
                raw_name: e.raw_name.clone(),
                resolved_id: meta.map(|m| m.id.clone()),
                source: meta.map_or(SourceClass::GeneratedByLlm, |m| rule.classify(m)),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct PipelineOptions {
    pub resolve: ResolveOptions,
}

/// Read-only view over one (provider, mode) index and its catalog.
pub struct Pipeline<'a> {
    catalog: &'a Catalog,
    index: &'a VectorIndex,
    provider: &'a dyn EmbeddingProvider,
    llm: Option<&'a dyn LlmClient>,
    options: PipelineOptions,
    run_log: Option<&'a RunLog>,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        catalog: &'a Catalog,
        index: &'a VectorIndex,
        provider: &'a dyn EmbeddingProvider,
    ) -> Result<Self, PipelineError> {
        if provider.provider_id() != index.provider_id() || provider.dimension() != index.dimension() {
            return Err(PipelineError::Contract(format!(
                "index was built with {} (dimension {}), provider is {} (dimension {})",
                index.provider_id(),
                index.dimension(),
                provider.provider_id(),
                provider.dimension()
            )));
        }
        Ok(Pipeline {
            catalog,
            index,
            provider,
            llm: None,
            options: PipelineOptions::default(),
            run_log: None,
        })
    }

    pub fn with_llm(mut self, llm: &'a dyn LlmClient) -> Self {
        self.llm = Some(llm);
        self
    }

    pub fn with_options(mut self, options: PipelineOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_run_log(mut self, log: &'a RunLog) -> Self {
        self.run_log = Some(log);
        self
    }

    pub fn mode(&self) -> CompositionMode {
        self.index.mode()
    }

    pub fn catalog(&self) -> &'a Catalog {
        self.catalog
    }

    pub fn index(&self) -> &'a VectorIndex {
        self.index
    }

    /// Embeds the query, retrieves the top `n` (never the sample itself) and
    /// builds the prompt.
    pub fn retrieve(&self, task: TaskKind, sample_id: &str, n: usize) -> Result<RetrievalStage, PipelineError> {
        if n == 0 {
            return Err(PipelineError::Contract("n must be at least 1".into()));
        }
        let sample = self
            .catalog
            .get(sample_id)
            .ok_or_else(|| PipelineError::UnknownDataset(sample_id.to_string()))?;
        let mode = self.index.mode();
        let question = render_question(task, sample);
        let query = embed_query(&question, task.slug(), sample, mode, self.provider)?;
        let exclude: HashSet<String> = [sample.id.clone()].into();
        let hits = self.index.top_n(&query, n, &exclude)?;

        let candidates = if task.is_recommendation() {
            Vec::new()
        } else {
            candidate_labels(task, &hits, self.catalog)
        };
        let prompt_question = if task.is_recommendation() {
            question
        } else {
            with_candidate_list(&question, &candidates)
        };
        let prompt = build_prompt(&prompt_question, &hits, self.catalog)?;
        Ok(RetrievalStage {
            task,
            sample_id: sample.id.clone(),
            mode,
            provider_id: self.index.provider_id().to_string(),
            hits,
            candidates,
            prompt,
        })
    }

    /// Sends the prompt to the LLM and resolves the answer.
    pub fn generate(&self, stage: RetrievalStage, rule: &CategoryRule) -> Result<TaskOutcome, PipelineError> {
        let llm = self.llm.ok_or(PipelineError::NoLlm)?;
        let hash = stage.prompt_hash();
        let result = llm.complete(&stage.prompt.rendered);
        self.log(&stage, llm.model_id(), &hash, &result);
        let response = match result {
            Ok(r) => r,
            Err(source) => {
                return Err(PipelineError::Llm {
                    stage: Box::new(stage),
                    source,
                })
            }
        };

        if stage.task.is_recommendation() {
            let parsed = parse_ranked_list(&response, self.catalog, &self.options.resolve);
            Ok(TaskOutcome::Recommendation(RecommendationOutcome {
                entries: classify_entries(&parsed, self.catalog, rule),
                hits: stage.hits,
                warnings: parsed.warnings,
                prompt_hash: hash,
                response,
            }))
        } else {
            let (predicted, warnings) = parse_labels(&response);
            Ok(TaskOutcome::Estimation(EstimationOutcome {
                predicted,
                candidates: stage.candidates,
                hits: stage.hits,
                warnings,
                prompt_hash: hash,
                response,
            }))
        }
    }

    /// Runs all four steps. Without a category, any tag shared with the
    /// sample makes a recommendation same-category.
    pub fn run_task(
        &self,
        task: TaskKind,
        sample_id: &str,
        category: Option<CategoryLabel>,
        n: usize,
    ) -> Result<TaskOutcome, PipelineError> {
        let stage = self.retrieve(task, sample_id, n)?;
        let sample = self
            .catalog
            .get(sample_id)
            .ok_or_else(|| PipelineError::UnknownDataset(sample_id.to_string()))?;
        let rule = CategoryRule::for_sample(category, sample);
        self.generate(stage, &rule)
    }

    fn log(&self, stage: &RetrievalStage, model: &str, hash: &str, result: &Result<String, LlmError>) {
        let Some(log) = self.run_log else {
            return;
        };
        let record = RunLogRecord {
            timestamp: runlog::now(),
            task: stage.task.slug(),
            sample_id: &stage.sample_id,
            mode: stage.mode.slug(),
            provider_id: &stage.provider_id,
            model,
            prompt_hash: hash,
            prompt: &stage.prompt.rendered,
            response: result.as_ref().ok().map(String::as_str),
            error: result.as_ref().err().map(ToString::to_string),
        };
        if let Err(e) = log.write(&record) {
            tracing::warn!(error = %e, "could not write run log");
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_parsing() {
        assert_eq!("1".parse::<TaskKind>().unwrap(), TaskKind::Similar);
        assert_eq!("variables".parse::<TaskKind>().unwrap(), TaskKind::VariableEstimation);
        assert!("5".parse::<TaskKind>().is_err());
        assert_eq!(serde_json::to_string(&TaskKind::TagEstimation).unwrap(), "\"tags\"");
        for t in TaskKind::ALL {
            assert_eq!(t.slug().parse::<TaskKind>().unwrap(), t);
            assert_eq!(t.number().to_string().parse::<TaskKind>().unwrap(), t);
        }
    }
}
