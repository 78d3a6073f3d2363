use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbedRequest, EmbeddingProvider, InputUnit};
use crate::http::{join_url, HttpError, JsonClient, RetryPolicy};

pub const EMBED_API_BASE: &str = "EMBED_API_BASE";
pub const EMBED_API_KEY: &str = "EMBED_API_KEY";

/// Inputs sent per HTTP request.
const BATCH_SIZE: usize = 64;

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub api_base: String,
    pub api_key: Option<String>,
    pub model: String,
    pub dimension: usize,
    /// In characters.
    pub max_input_length: Option<usize>,
    pub retry: RetryPolicy,
}

impl RemoteEmbedderConfig {
    /// Reads endpoint and credential from `EMBED_API_BASE` / `EMBED_API_KEY`.
    pub fn from_env(model: impl Into<String>, dimension: usize) -> Option<Self> {
        let api_base = std::env::var(EMBED_API_BASE).ok()?;
        Some(RemoteEmbedderConfig {
            api_base,
            api_key: std::env::var(EMBED_API_KEY).ok(),
            model: model.into(),
            dimension,
            max_input_length: None,
            retry: RetryPolicy::default(),
        })
    }
}

/// Client for an embeddings endpoint: `POST {base}/embeddings` with
/// `{"model": ..., "input": [...]}`. The response may be either
/// `{"data": [{"embedding": [...]}, ...]}` or a bare array of vectors.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: JsonClient,
    id: String,
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EmbeddingsResponse {
    Data { data: Vec<EmbeddingDatum> },
    Bare(Vec<Vec<f64>>),
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let client = JsonClient::new(config.api_key.clone(), config.retry.clone());
        let id = config.model.clone();
        RemoteEmbedder { config, client, id }
    }

    /// Overrides the provider id recorded in vectors and index files.
    pub fn with_provider_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    fn post_batch(&self, texts: Vec<&str>) -> Result<Vec<Vec<f64>>, EmbedError> {
        let url = join_url(&self.config.api_base, "embeddings");
        let body = EmbeddingsRequest {
            model: &self.config.model,
            input: texts,
        };
        let resp: EmbeddingsResponse = self.client.post(&url, &body).map_err(|e| match e {
            HttpError::Decode(detail) => EmbedError::ContractViolation {
                provider: self.id.clone(),
                detail: format!("undecodable response: {detail}"),
            },
            other => EmbedError::Transport {
                advice: if other.is_transient() {
                    "endpoint may be overloaded or down; retry later".into()
                } else {
                    "check EMBED_API_BASE, EMBED_API_KEY and the model id".into()
                },
                message: other.to_string(),
            },
        })?;
        Ok(match resp {
            EmbeddingsResponse::Bare(vectors) => vectors,
            EmbeddingsResponse::Data { mut data } => {
                if data.iter().all(|d| d.index.is_some()) {
                    data.sort_by_key(|d| d.index);
                }
                data.into_iter().map(|d| d.embedding).collect()
            }
        })
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn max_input_length(&self) -> Option<usize> {
        self.config.max_input_length
    }

    fn input_unit(&self) -> InputUnit {
        InputUnit::Chars
    }

    fn embed_batch(&self, requests: &[EmbedRequest<'_>]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut out = Vec::with_capacity(requests.len());
        for chunk in requests.chunks(BATCH_SIZE) {
            let vectors = self.post_batch(chunk.iter().map(|r| r.text).collect())?;
            if vectors.len() != chunk.len() {
                return Err(EmbedError::ContractViolation {
                    provider: self.id.clone(),
                    detail: format!("sent {} inputs, received {} vectors", chunk.len(), vectors.len()),
                });
            }
            out.extend(vectors);
        }
        Ok(out)
    }
}
