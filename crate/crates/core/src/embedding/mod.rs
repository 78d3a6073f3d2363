//! Metadata text composition and embedding providers.
//!
//! Three providers ship with the crate:
//!
//! * [`HashingEmbedder`] — deterministic token-hash projection, for tests and
//!   offline runs.
//! * [`RemoteEmbedder`] — JSON-over-HTTP embeddings endpoint.
//! * [`PrecomputedVectors`] — vectors loaded from a line-delimited file keyed
//!   by dataset id and composition mode.

mod file;
mod hashing;
mod remote;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::DatasetMetadata;

pub use file::{PrecomputedRecord, PrecomputedVectors};
pub use hashing::HashingEmbedder;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig, EMBED_API_BASE, EMBED_API_KEY};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding input is empty")]
    EmptyInput,
    #[error("embedding provider unreachable: {message} ({advice})")]
    Transport { message: String, advice: String },
    #[error("provider `{provider}` violated its contract: {detail}")]
    ContractViolation { provider: String, detail: String },
    #[error("no precomputed vector for {0}")]
    MissingVector(String),
    #[error("{0}")]
    Unsupported(String),
    #[error("invalid vector file: {0}")]
    InvalidFile(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which metadata items are concatenated into the embedding input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompositionMode {
    /// Name, summary and tags.
    D,
    /// Variables and tags.
    V,
    /// Name, summary, variables and tags.
    #[serde(alias = "d+v")]
    DV,
}

impl CompositionMode {
    pub const ALL: [CompositionMode; 3] = [CompositionMode::D, CompositionMode::V, CompositionMode::DV];

    pub fn slug(self) -> &'static str {
        match self {
            CompositionMode::D => "d",
            CompositionMode::V => "v",
            CompositionMode::DV => "dv",
        }
    }

    fn sections(self) -> &'static [Section] {
        use Section::*;
        match self {
            CompositionMode::D => &[Name, Summary, Tags],
            CompositionMode::V => &[Variables, Tags],
            CompositionMode::DV => &[Name, Summary, Variables, Tags],
        }
    }
}

impl fmt::Display for CompositionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompositionMode::D => "D",
            CompositionMode::V => "V",
            CompositionMode::DV => "D+V",
        })
    }
}

impl FromStr for CompositionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "d" => Ok(CompositionMode::D),
            "v" => Ok(CompositionMode::V),
            "dv" | "d+v" | "vd" | "v+d" => Ok(CompositionMode::DV),
            other => Err(format!("unknown composition mode `{other}` (expected d, v or dv)")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Section {
    Name,
    Summary,
    Variables,
    Tags,
}

/// Renders the embedding input for `meta`: one `<Label>: <content>` line per
/// section, in the fixed order Name, Summary, Variables, Tags.
pub fn compose(meta: &DatasetMetadata, mode: CompositionMode) -> String {
    mode.sections()
        .iter()
        .map(|section| match section {
            Section::Name => format!("Name: {}", meta.name),
            Section::Summary => format!("Summary: {}", meta.summary),
            Section::Variables => format!("Variables: {}", meta.variables.join(", ")),
            Section::Tags => format!("Tags: {}", meta.tags.join(", ")),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A provider's output plus provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub provider_id: String,
    pub mode: CompositionMode,
    /// The input exceeded the provider's maximum length and was cut.
    #[serde(default)]
    pub truncated: bool,
}

impl EmbeddingVector {
    pub fn new(
        values: Vec<f64>,
        provider_id: impl Into<String>,
        mode: CompositionMode,
    ) -> Result<Self, EmbedError> {
        let provider_id = provider_id.into();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::ContractViolation {
                provider: provider_id,
                detail: format!("non-finite value at position {pos}"),
            });
        }
        Ok(EmbeddingVector {
            values,
            provider_id,
            mode,
            truncated: false,
        })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn provenance(&self) -> String {
        format!("{}/{}/{}", self.provider_id, self.mode.slug(), self.dimension())
    }
}

/// Unit in which a provider measures `max_input_length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputUnit {
    /// Whitespace-separated tokens.
    Words,
    Chars,
}

/// Identifies which record an input belongs to. Providers that serve
/// precomputed vectors look these up instead of reading the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKey<'a> {
    Document { dataset_id: &'a str },
    Query { dataset_id: &'a str, task: &'a str },
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedRequest<'a> {
    pub text: &'a str,
    pub mode: CompositionMode,
    pub key: Option<InputKey<'a>>,
}

/// Source of embedding vectors.
///
/// The same input must always produce the same vector for providers used in
/// tests. Implementations must be safe to call from several threads.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;

    fn dimension(&self) -> usize;

    /// `None` means unbounded.
    fn max_input_length(&self) -> Option<usize> {
        None
    }

    fn input_unit(&self) -> InputUnit {
        InputUnit::Words
    }

    /// Raw vectors, one per request, in order. Inputs are already truncated.
    fn embed_batch(&self, requests: &[EmbedRequest<'_>]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Cuts `text` to at most `limit` units, at a unit boundary.
pub fn truncate_input(text: &str, limit: Option<usize>, unit: InputUnit) -> (&str, bool) {
    let Some(limit) = limit else {
        return (text, false);
    };
    match unit {
        InputUnit::Chars => match text.char_indices().nth(limit) {
            Some((end, _)) => (&text[..end], true),
            None => (text, false),
        },
        InputUnit::Words => {
            let mut seen = 0;
            let mut in_word = false;
            let mut word_end = 0;
            for (i, c) in text.char_indices() {
                if c.is_whitespace() {
                    if in_word {
                        word_end = i;
                    }
                    in_word = false;
                } else if !in_word {
                    if seen == limit {
                        return (&text[..word_end], true);
                    }
                    in_word = true;
                    seen += 1;
                }
            }
            (text, false)
        }
    }
}

fn check_output(
    provider: &dyn EmbeddingProvider,
    raw: Vec<Vec<f64>>,
    expected: usize,
) -> Result<Vec<Vec<f64>>, EmbedError> {
    if raw.len() != expected {
        return Err(EmbedError::ContractViolation {
            provider: provider.provider_id().to_string(),
            detail: format!("expected {expected} vectors, got {}", raw.len()),
        });
    }
    let dim = provider.dimension();
    for v in &raw {
        if v.len() != dim {
            return Err(EmbedError::ContractViolation {
                provider: provider.provider_id().to_string(),
                detail: format!("declared dimension {dim}, returned {}", v.len()),
            });
        }
    }
    Ok(raw)
}

/// Embeds several inputs in one provider call, applying truncation and
/// checking the returned dimension.
pub fn embed_requests(
    provider: &dyn EmbeddingProvider,
    requests: &[EmbedRequest<'_>],
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if requests.iter().any(|r| r.text.trim().is_empty()) {
        return Err(EmbedError::EmptyInput);
    }
    let limit = provider.max_input_length();
    let unit = provider.input_unit();
    let mut flags = Vec::with_capacity(requests.len());
    let cut: Vec<EmbedRequest<'_>> = requests
        .iter()
        .map(|r| {
            let (text, truncated) = truncate_input(r.text, limit, unit);
            flags.push(truncated);
            EmbedRequest { text, ..*r }
        })
        .collect();
    let raw = check_output(provider, provider.embed_batch(&cut)?, requests.len())?;
    raw.into_iter()
        .zip(requests.iter().zip(flags))
        .map(|(values, (req, truncated))| {
            let mut v = EmbeddingVector::new(values, provider.provider_id(), req.mode)?;
            v.truncated = truncated;
            Ok(v)
        })
        .collect()
}

/// Embeds free text.
pub fn embed(
    text: &str,
    mode: CompositionMode,
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingVector, EmbedError> {
    let mut out = embed_requests(provider, &[EmbedRequest { text, mode, key: None }])?;
    Ok(out.remove(0))
}

/// Embeds a catalog record's composed text.
pub fn embed_document(
    meta: &DatasetMetadata,
    mode: CompositionMode,
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingVector, EmbedError> {
    let text = compose(meta, mode);
    let req = EmbedRequest {
        text: &text,
        mode,
        key: Some(InputKey::Document { dataset_id: &meta.id }),
    };
    let mut out = embed_requests(provider, &[req])?;
    Ok(out.remove(0))
}

/// Query text for a task: the rendered question, a newline, then the sample's
/// composed metadata.
pub fn query_text(question: &str, meta: &DatasetMetadata, mode: CompositionMode) -> String {
    format!("{}\n{}", question, compose(meta, mode))
}

pub fn embed_query(
    question: &str,
    task: &str,
    meta: &DatasetMetadata,
    mode: CompositionMode,
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingVector, EmbedError> {
    let text = query_text(question, meta, mode);
    let req = EmbedRequest {
        text: &text,
        mode,
        key: Some(InputKey::Query {
            dataset_id: &meta.id,
            task,
        }),
    };
    let mut out = embed_requests(provider, &[req])?;
    Ok(out.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_one() -> DatasetMetadata {
        DatasetMetadata {
            id: "canada-precip".into(),
            name: "Daily Summaries of Precipitation Indicators for Canada".into(),
            summary: "This dataset contains the daily summaries on base stations across Canada.".into(),
            variables: ["indicator", "value", "station", "fl_cmiss", "date", "fl_miss", "datatype", "country"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tags: ["el nino", "rainfall - precipitation", "weather and climate"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            source_url: None,
        }
    }

    #[test]
    fn compose_variable_mode() {
        assert_eq!(
            compose(&table_one(), CompositionMode::V),
            "Variables: indicator, value, station, fl_cmiss, date, fl_miss, datatype, country\n\
             Tags: el nino, rainfall - precipitation, weather and climate"
        );
    }

    #[test]
    fn compose_keeps_empty_summary_section() {
        let mut meta = table_one();
        meta.summary.clear();
        let text = compose(&meta, CompositionMode::D);
        assert_eq!(text.lines().nth(1), Some("Summary: "));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn dv_contains_d_and_v_sections() {
        let meta = table_one();
        let dv = compose(&meta, CompositionMode::DV);
        for line in compose(&meta, CompositionMode::D).lines() {
            assert!(dv.lines().any(|l| l == line));
        }
        let vars = compose(&meta, CompositionMode::V);
        assert!(dv.contains(vars.lines().next().unwrap()));
        assert_eq!(
            dv.lines().map(|l| l.split(':').next().unwrap()).collect::<Vec<_>>(),
            ["Name", "Summary", "Variables", "Tags"]
        );
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("D+V".parse::<CompositionMode>().unwrap(), CompositionMode::DV);
        assert_eq!("v".parse::<CompositionMode>().unwrap(), CompositionMode::V);
        assert!("x".parse::<CompositionMode>().is_err());
        assert_eq!(serde_json::to_string(&CompositionMode::DV).unwrap(), "\"dv\"");
    }

    #[test]
    fn word_truncation_at_boundary() {
        assert_eq!(truncate_input("a bb  ccc d", Some(2), InputUnit::Words), ("a bb", true));
        assert_eq!(truncate_input("a bb", Some(2), InputUnit::Words), ("a bb", false));
        assert_eq!(truncate_input("a bb ", Some(2), InputUnit::Words), ("a bb ", false));
        assert_eq!(truncate_input("a bb", None, InputUnit::Words), ("a bb", false));
        assert_eq!(truncate_input("héllo", Some(2), InputUnit::Chars), ("hé", true));
    }

    #[test]
    fn over_long_input_is_flagged() {
        let provider = HashingEmbedder::new(16, 7).with_max_input_length(3);
        let v = embed("one two three four five", CompositionMode::D, &provider).unwrap();
        assert!(v.truncated);
        assert_eq!(v.dimension(), 16);
        let w = embed("one two three", CompositionMode::D, &provider).unwrap();
        assert!(!w.truncated);
        assert_eq!(v.values, w.values);
    }

    #[test]
    fn empty_text_rejected() {
        let provider = HashingEmbedder::new(8, 0);
        assert!(matches!(
            embed("  ", CompositionMode::D, &provider),
            Err(EmbedError::EmptyInput)
        ));
    }

    struct WrongDimension;

    impl EmbeddingProvider for WrongDimension {
        fn provider_id(&self) -> &str {
            "wrong"
        }
        fn dimension(&self) -> usize {
            4
        }
        fn embed_batch(&self, requests: &[EmbedRequest<'_>]) -> Result<Vec<Vec<f64>>, EmbedError> {
            Ok(requests.iter().map(|_| vec![0.5; 3]).collect())
        }
    }

    #[test]
    fn wrong_dimension_is_contract_violation() {
        let err = embed("text", CompositionMode::D, &WrongDimension).unwrap_err();
        assert!(matches!(err, EmbedError::ContractViolation { .. }));
    }

    #[test]
    fn query_text_layout() {
        let q = query_text("Which datasets?", &table_one(), CompositionMode::V);
        assert!(q.starts_with("Which datasets?\nVariables: indicator"));
    }
}
