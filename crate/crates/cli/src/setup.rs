//! Turns resolved settings into a catalog, an embedding provider, an LLM
//! client and vector indices.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use scout_core::catalog::ingest;
use scout_core::embedding::{HashingEmbedder, PrecomputedVectors, RemoteEmbedder, RemoteEmbedderConfig, EMBED_API_KEY};
use scout_core::evaluation::IndexSet;
use scout_core::http::RetryPolicy;
use scout_core::pipeline::{
    DecodingParams, EchoPolicy, LlmClient, RemoteChatClient, RemoteChatConfig, ScriptedLlm, LLM_API_KEY,
};
use scout_core::vector_store::{build_index, index_file_name, IndexError};
use scout_core::{Catalog, CompositionMode, EmbeddingProvider, VectorIndex};

use crate::config::{pick, FileConfig};
use crate::CliError;

pub const DEFAULT_DIMENSION: usize = 256;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProviderKind {
    /// Deterministic feature-hashing embedder; no network.
    Test,
    /// OpenAI-compatible embeddings endpoint.
    Remote,
    /// Precomputed vectors from a JSONL file.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LlmKind {
    /// Canned responses keyed by prompt hash, with a deterministic fallback.
    Scripted,
    /// OpenAI-compatible chat completions endpoint.
    Remote,
    /// No LLM; retrieval only.
    None,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CatalogArgs {
    /// Catalog file (JSONL, as written by `scout ingest`).
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

impl CatalogArgs {
    pub fn load(&self, file: &FileConfig) -> Result<Catalog, CliError> {
        let path = pick(&self.catalog, &file.catalog)
            .ok_or_else(|| CliError::usage("no catalog given (--catalog or `catalog` in the config file)"))?;
        let f = std::fs::File::open(&path)
            .map_err(|e| CliError::usage(format!("cannot open catalog {}: {e}", path.display())))?;
        let out = ingest(std::io::BufReader::new(f)).map_err(CliError::fatal)?;
        if !out.errors.is_empty() {
            return Err(CliError::usage(format!(
                "catalog {} has {} invalid records (first: {}); re-run `scout ingest`",
                path.display(),
                out.errors.len(),
                out.errors[0]
            )));
        }
        if out.catalog.is_empty() {
            return Err(CliError::usage(format!("catalog {} is empty", path.display())));
        }
        Ok(out.catalog)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProviderArgs {
    /// Embedding provider.
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Vector dimension (test and remote providers).
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Seed for the test embedder and for sample selection.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Model id sent to the remote embeddings endpoint.
    #[arg(long, env = "EMBED_MODEL")]
    pub embed_model: Option<String>,
    /// Base URL of the remote embeddings endpoint. The key is read from EMBED_API_KEY.
    #[arg(long, env = "EMBED_API_BASE")]
    pub embed_api_base: Option<String>,
    /// Input limit of the remote model, in characters.
    #[arg(long)]
    pub embed_max_input: Option<usize>,
    /// Precomputed vectors file for `--provider file`.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
}

impl ProviderArgs {
    pub fn seed(&self, file: &FileConfig) -> u64 {
        pick(&self.seed, &file.seed).unwrap_or(DEFAULT_SEED)
    }

    pub fn build(&self, file: &FileConfig) -> Result<Arc<dyn EmbeddingProvider>, CliError> {
        let kind = match (&self.provider, &file.provider) {
            (Some(k), _) => *k,
            (None, Some(s)) => ProviderKind::from_str(s, true)
                .map_err(|_| CliError::usage(format!("unknown provider `{s}` in config file")))?,
            (None, None) => ProviderKind::Test,
        };
        let dimension = pick(&self.dimension, &file.dimension);
        match kind {
            ProviderKind::Test => {
                let dim = dimension.unwrap_or(DEFAULT_DIMENSION);
                if dim == 0 {
                    return Err(CliError::usage("--dimension must be at least 1"));
                }
                Ok(Arc::new(HashingEmbedder::new(dim, self.seed(file))))
            }
            ProviderKind::Remote => {
                let api_base = pick(&self.embed_api_base, &file.embed_api_base)
                    .ok_or_else(|| CliError::usage("remote provider needs --embed-api-base or EMBED_API_BASE"))?;
                let model = pick(&self.embed_model, &file.embed_model)
                    .ok_or_else(|| CliError::usage("remote provider needs --embed-model or EMBED_MODEL"))?;
                let dimension =
                    dimension.ok_or_else(|| CliError::usage("remote provider needs --dimension"))?;
                Ok(Arc::new(RemoteEmbedder::new(RemoteEmbedderConfig {
                    api_base,
                    api_key: std::env::var(EMBED_API_KEY).ok(),
                    model,
                    dimension,
                    max_input_length: pick(&self.embed_max_input, &file.embed_max_input),
                    retry: RetryPolicy::default(),
                })))
            }
            ProviderKind::File => {
                let path = pick(&self.vectors, &file.vectors)
                    .ok_or_else(|| CliError::usage("file provider needs --vectors"))?;
                let vectors = PrecomputedVectors::open(&path)
                    .map_err(|e| CliError::usage(format!("cannot load vectors {}: {e}", path.display())))?;
                Ok(Arc::new(vectors))
            }
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct LlmArgs {
    /// LLM backend. Defaults to `scripted`.
    #[arg(long, value_enum)]
    pub llm: Option<LlmKind>,
    /// Model id for the remote chat endpoint.
    #[arg(long, env = "LLM_MODEL")]
    pub llm_model: Option<String>,
    /// Base URL of the remote chat endpoint. The key is read from LLM_API_KEY.
    #[arg(long, env = "LLM_API_BASE")]
    pub llm_api_base: Option<String>,
    /// JSONL script of `{"prompt_hash"|"prompt", "response"}` lines.
    #[arg(long)]
    pub llm_script: Option<PathBuf>,
    /// Fail prompts missing from the script instead of answering from context.
    #[arg(long)]
    pub no_echo: bool,
    /// Sampling temperature for the remote model.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Response token cap for the remote model.
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

impl LlmArgs {
    pub fn build(&self, file: &FileConfig) -> Result<Option<Arc<dyn LlmClient>>, CliError> {
        let kind = match (&self.llm, &file.llm) {
            (Some(k), _) => *k,
            (None, Some(s)) => LlmKind::from_str(s, true)
                .map_err(|_| CliError::usage(format!("unknown llm `{s}` in config file")))?,
            (None, None) => LlmKind::Scripted,
        };
        match kind {
            LlmKind::None => Ok(None),
            LlmKind::Scripted => {
                let script = match pick(&self.llm_script, &file.llm_script) {
                    Some(path) => ScriptedLlm::open(&path)
                        .map_err(|e| CliError::usage(format!("cannot load script {}: {e}", path.display())))?,
                    None => ScriptedLlm::new(),
                };
                let echo = !self.no_echo && file.echo_fallback.unwrap_or(true);
                Ok(Some(Arc::new(script.with_fallback(echo.then(EchoPolicy::default)))))
            }
            LlmKind::Remote => {
                let api_base = pick(&self.llm_api_base, &file.llm_api_base)
                    .ok_or_else(|| CliError::usage("remote llm needs --llm-api-base or LLM_API_BASE"))?;
                let model = pick(&self.llm_model, &file.llm_model)
                    .ok_or_else(|| CliError::usage("remote llm needs --llm-model or LLM_MODEL"))?;
                Ok(Some(Arc::new(RemoteChatClient::new(RemoteChatConfig {
                    api_base,
                    api_key: std::env::var(LLM_API_KEY).ok(),
                    model,
                    decoding: DecodingParams {
                        temperature: pick(&self.temperature, &file.temperature).unwrap_or(0.0),
                        max_tokens: pick(&self.max_tokens, &file.max_tokens),
                    },
                    retry: RetryPolicy::default(),
                }))))
            }
        }
    }
}

fn check_fresh(index: &VectorIndex, catalog: &Catalog, path: &Path) -> Result<(), CliError> {
    let stale = index.len() != catalog.len() || index.records().iter().any(|r| !catalog.contains(&r.dataset_id));
    if stale {
        return Err(CliError::usage(format!(
            "index {} does not match the catalog; rebuild it with `scout index`",
            path.display()
        )));
    }
    Ok(())
}

pub fn index_error(e: IndexError) -> CliError {
    match e {
        IndexError::PartialBuild { failed } => {
            let mut msg = format!("{} datasets could not be embedded:", failed.len());
            for (id, reason) in failed.iter().take(20) {
                msg.push_str(&format!("\n  {id}: {reason}"));
            }
            CliError::partial(msg)
        }
        other => CliError::fatal(other),
    }
}

/// Loads the index for `mode` from `index_dir` when the file exists,
/// otherwise builds it in memory when `build_missing` is set.
pub fn load_index(
    catalog: &Catalog,
    provider: &dyn EmbeddingProvider,
    mode: CompositionMode,
    index_dir: Option<&Path>,
    build_missing: bool,
) -> Result<Option<VectorIndex>, CliError> {
    if let Some(dir) = index_dir {
        let path = dir.join(index_file_name(provider.provider_id(), mode));
        if path.is_file() {
            let index = VectorIndex::load(&path)
                .map_err(|e| CliError::usage(format!("cannot load index {}: {e}", path.display())))?;
            if index.provider_id() != provider.provider_id() || index.dimension() != provider.dimension() {
                return Err(CliError::usage(format!(
                    "index {} was built with {} (dimension {}), provider is {} (dimension {})",
                    path.display(),
                    index.provider_id(),
                    index.dimension(),
                    provider.provider_id(),
                    provider.dimension()
                )));
            }
            check_fresh(&index, catalog, &path)?;
            return Ok(Some(index));
        }
        if !build_missing {
            return Ok(None);
        }
    }
    tracing::info!(mode = %mode, "building index in memory");
    build_index(catalog, mode, provider).map(Some).map_err(index_error)
}

/// Indices for `modes` plus D (used for description similarity).
pub fn load_indices(
    catalog: &Catalog,
    provider: &dyn EmbeddingProvider,
    modes: &[CompositionMode],
    index_dir: Option<&Path>,
) -> Result<IndexSet, CliError> {
    let mut wanted: Vec<CompositionMode> = modes.to_vec();
    if !wanted.contains(&CompositionMode::D) {
        wanted.push(CompositionMode::D);
    }
    let mut indices = Vec::new();
    for mode in wanted {
        if let Some(ix) = load_index(catalog, provider, mode, index_dir, true)? {
            indices.push(ix);
        }
    }
    IndexSet::from_indices(indices).map_err(CliError::fatal)
}
