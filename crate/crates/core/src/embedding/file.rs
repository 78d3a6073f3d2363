use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CompositionMode, EmbedError, EmbedRequest, EmbeddingProvider, InputKey};

/// One line of a precomputed-vector file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecomputedRecord {
    pub dataset_id: String,
    pub mode: CompositionMode,
    pub provider_id: String,
    pub values: Vec<f64>,
}

/// Vectors produced offline by an external model, keyed by dataset id and
/// composition mode.
///
/// Query inputs look up `"<dataset_id>::<task>"` first and fall back to the
/// dataset's own vector for that mode, so a file with document vectors only
/// is enough to run every task.
#[derive(Debug, Clone)]
pub struct PrecomputedVectors {
    provider_id: String,
    dimension: usize,
    vectors: HashMap<(String, CompositionMode), Vec<f64>>,
}

impl PrecomputedVectors {
    pub fn from_records(records: Vec<PrecomputedRecord>) -> Result<Self, EmbedError> {
        let mut iter = records.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| EmbedError::InvalidFile("no vectors".into()))?;
        let provider_id = first.provider_id.clone();
        let dimension = first.values.len();
        let mut vectors = HashMap::new();
        for (i, rec) in std::iter::once(first).chain(iter).enumerate() {
            if rec.provider_id != provider_id {
                return Err(EmbedError::InvalidFile(format!(
                    "record {}: provider `{}` differs from `{}`",
                    i + 1,
                    rec.provider_id,
                    provider_id
                )));
            }
            if rec.values.len() != dimension {
                return Err(EmbedError::InvalidFile(format!(
                    "record {}: dimension {} differs from {}",
                    i + 1,
                    rec.values.len(),
                    dimension
                )));
            }
            if rec.values.iter().any(|v| !v.is_finite()) {
                return Err(EmbedError::InvalidFile(format!("record {}: non-finite value", i + 1)));
            }
            let key = (rec.dataset_id, rec.mode);
            if vectors.contains_key(&key) {
                return Err(EmbedError::InvalidFile(format!(
                    "record {}: duplicate vector for {} ({})",
                    i + 1,
                    key.0,
                    key.1
                )));
            }
            vectors.insert(key, rec.values);
        }
        Ok(PrecomputedVectors {
            provider_id,
            dimension,
            vectors,
        })
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, EmbedError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PrecomputedRecord = serde_json::from_str(&line)
                .map_err(|e| EmbedError::InvalidFile(format!("line {}: {e}", i + 1)))?;
            records.push(rec);
        }
        Self::from_records(records)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let file = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(file))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    fn lookup(&self, req: &EmbedRequest<'_>) -> Result<Vec<f64>, EmbedError> {
        let get = |id: &str| self.vectors.get(&(id.to_string(), req.mode)).cloned();
        match req.key {
            Some(InputKey::Document { dataset_id }) => {
                get(dataset_id).ok_or_else(|| EmbedError::MissingVector(format!("{dataset_id} ({})", req.mode)))
            }
            Some(InputKey::Query { dataset_id, task }) => get(&format!("{dataset_id}::{task}"))
                .or_else(|| get(dataset_id))
                .ok_or_else(|| EmbedError::MissingVector(format!("query {dataset_id}::{task} ({})", req.mode))),
            None => Err(EmbedError::Unsupported(
                "precomputed vectors can only embed catalog records and task queries".into(),
            )),
        }
    }
}

impl EmbeddingProvider for PrecomputedVectors {
    fn provider_id(&self) -> &str {
        &self.provider_id
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, requests: &[EmbedRequest<'_>]) -> Result<Vec<Vec<f64>>, EmbedError> {
        requests.iter().map(|r| self.lookup(r)).collect()
    }
}
