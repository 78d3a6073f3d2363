use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::CliError;

/// Settings read from `--config <file.toml>`. Every key is optional and is
/// overridden by the matching flag or environment variable.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub catalog: Option<PathBuf>,
    pub index_dir: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub run_log: Option<PathBuf>,

    pub provider: Option<String>,
    pub dimension: Option<usize>,
    pub seed: Option<u64>,
    pub embed_model: Option<String>,
    pub embed_api_base: Option<String>,
    pub embed_max_input: Option<usize>,
    pub vectors: Option<PathBuf>,

    pub llm: Option<String>,
    pub llm_model: Option<String>,
    pub llm_api_base: Option<String>,
    pub llm_script: Option<PathBuf>,
    pub echo_fallback: Option<bool>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,

    pub n: Option<usize>,
    pub parallelism: Option<usize>,
    pub addr: Option<String>,
    pub cors_origin: Option<String>,
    pub max_inflight: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Flag (or environment, which clap folds into the flag) first, then the
/// config file.
pub fn pick<T: Clone>(flag: &Option<T>, file: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| file.clone())
}
