use serde::{Deserialize, Serialize};

use super::{PipelineError, TaskKind};
use crate::catalog::{Catalog, DatasetMetadata};
use crate::embedding::{compose, CompositionMode};
use crate::vector_store::RetrievalHit;

/// Prompt sent to the LLM; `{question}` and `{context}` are substituted.
pub const PROMPT_TEMPLATE: &str = "You are an assistant for question-answering tasks. \
Use the following pieces of retrieved context to answer the question. \
If you don't know the answer, just say that you don't know. \
Use five sentences maximum and keep the answer concise.\n\
\n\
Question: {question}\n\
\n\
Context: {context}";

/// Header line introducing the candidate list for estimation tasks.
pub const LIST_HEADER: &str = "List:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub question: String,
    pub context: String,
    pub rendered: String,
}

/// The task question with the sample referenced by name.
pub fn render_question(task: TaskKind, sample: &DatasetMetadata) -> String {
    format!("{}\nDataset: {}", task.question(), sample.name)
}

/// Appends the candidate labels that estimation questions refer to as
/// "the list below".
pub fn with_candidate_list(question: &str, candidates: &[String]) -> String {
    let mut out = format!("{question}\n{LIST_HEADER}");
    for c in candidates {
        out.push_str("\n- ");
        out.push_str(c);
    }
    out
}

/// One context block: `[rank] ` followed by the record's name, summary,
/// variables and tags.
pub fn context_block(rank: usize, meta: &DatasetMetadata) -> String {
    format!("[{rank}] {}", compose(meta, CompositionMode::DV))
}

/// Substitutes both placeholders in one pass so that placeholder-like text
/// inside the question or context is left alone.
fn fill_template(question: &str, context: &str) -> String {
    let (head, rest) = PROMPT_TEMPLATE.split_once("{question}").expect("template has {question}");
    let (mid, tail) = rest.split_once("{context}").expect("template has {context}");
    [head, question, mid, context, tail].concat()
}

pub fn build_prompt(
    question: &str,
    hits: &[RetrievalHit],
    catalog: &Catalog,
) -> Result<PromptBundle, PipelineError> {
    if question.trim().is_empty() {
        return Err(PipelineError::Contract("question must not be empty".into()));
    }
    if hits.is_empty() {
        return Err(PipelineError::Contract("at least one retrieval hit is required".into()));
    }
    let blocks = hits
        .iter()
        .map(|hit| {
            catalog
                .get(&hit.dataset_id)
                .map(|meta| context_block(hit.rank, meta))
                .ok_or_else(|| PipelineError::UnknownDataset(hit.dataset_id.clone()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let context = blocks.join("\n\n");
    let rendered = fill_template(question, &context);
    Ok(PromptBundle {
        question: question.to_string(),
        context,
        rendered,
    })
}
