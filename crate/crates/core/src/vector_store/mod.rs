//! Exact cosine retrieval over embedded catalog records.
//!
//! The index is a flat list scanned in full for every query; corpora of a few
//! tens of thousands of records make this fast enough and keep results exact.

mod persist;

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Catalog;
use crate::embedding::{
    compose, embed_requests, CompositionMode, EmbedRequest, EmbeddingProvider,
    EmbeddingVector, InputKey,
};
use crate::similarity::cosine;

pub use persist::{index_file_name, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, vector has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("provenance mismatch: index is {expected}, vector is {found}")]
    ProvenanceMismatch { expected: String, found: String },
    #[error("dataset `{0}` is already indexed")]
    DuplicateId(String),
    #[error("n must be at least 1")]
    ZeroN,
    #[error("cannot index an empty catalog")]
    EmptyCatalog,
    #[error("embedding failed for {} dataset(s): {}", .failed.len(), format_failures(.failed))]
    PartialBuild { failed: Vec<(String, String)> },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("unsupported index format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_failures(failed: &[(String, String)]) -> String {
    failed
        .iter()
        .map(|(id, reason)| format!("{id} ({reason})"))
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexRecord {
    pub dataset_id: String,
    pub values: Vec<f64>,
}

/// Embedded records for one (provider, mode) pair.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    provider_id: String,
    mode: CompositionMode,
    dimension: usize,
    records: Vec<IndexRecord>,
    positions: HashMap<String, usize>,
}

impl PartialEq for VectorIndex {
    fn eq(&self, other: &Self) -> bool {
        self.provider_id == other.provider_id
            && self.mode == other.mode
            && self.dimension == other.dimension
            && self.records == other.records
    }
}

/// One retrieved record. Ranks start at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub dataset_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Descending score, then ascending dataset id.
pub fn hit_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

impl VectorIndex {
    pub fn new(provider_id: impl Into<String>, mode: CompositionMode, dimension: usize) -> Self {
        VectorIndex {
            provider_id: provider_id.into(),
            mode,
            dimension,
            records: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn mode(&self) -> CompositionMode {
        self.mode
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[IndexRecord] {
        &self.records
    }

    pub fn insert(&mut self, dataset_id: impl Into<String>, vector: EmbeddingVector) -> Result<(), IndexError> {
        let dataset_id = dataset_id.into();
        if vector.provider_id != self.provider_id || vector.mode != self.mode {
            return Err(IndexError::ProvenanceMismatch {
                expected: format!("{}/{}", self.provider_id, self.mode.slug()),
                found: format!("{}/{}", vector.provider_id, vector.mode.slug()),
            });
        }
        self.insert_raw(dataset_id, vector.values)
    }

    pub(crate) fn insert_raw(&mut self, dataset_id: String, values: Vec<f64>) -> Result<(), IndexError> {
        if values.len() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                found: values.len(),
            });
        }
        if self.positions.contains_key(&dataset_id) {
            return Err(IndexError::DuplicateId(dataset_id));
        }
        self.positions.insert(dataset_id.clone(), self.records.len());
        self.records.push(IndexRecord { dataset_id, values });
        Ok(())
    }

    pub fn values(&self, dataset_id: &str) -> Option<&[f64]> {
        self.positions
            .get(dataset_id)
            .map(|&i| self.records[i].values.as_slice())
    }

    /// The stored vector with its provenance.
    pub fn vector(&self, dataset_id: &str) -> Option<EmbeddingVector> {
        self.values(dataset_id).map(|values| EmbeddingVector {
            values: values.to_vec(),
            provider_id: self.provider_id.clone(),
            mode: self.mode,
            truncated: false,
        })
    }

    /// Cosine between two stored records.
    pub fn pair_similarity(&self, a: &str, b: &str) -> Option<f64> {
        Some(cosine(self.values(a)?, self.values(b)?))
    }

    /// The `n` records most similar to `query`, skipping ids in `exclude`.
    /// Ties are broken by ascending dataset id.
    pub fn top_n(
        &self,
        query: &EmbeddingVector,
        n: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<RetrievalHit>, IndexError> {
        if n == 0 {
            return Err(IndexError::ZeroN);
        }
        if query.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                found: query.dimension(),
            });
        }
        if query.provider_id != self.provider_id {
            return Err(IndexError::ProvenanceMismatch {
                expected: self.provider_id.clone(),
                found: query.provider_id.clone(),
            });
        }

        let mut scored: Vec<(&str, f64)> = self
            .records
            .iter()
            .filter(|r| !exclude.contains(&r.dataset_id))
            .map(|r| (r.dataset_id.as_str(), cosine(&query.values, &r.values)))
            .collect();
        let cmp = |a: &(&str, f64), b: &(&str, f64)| hit_order(*a, *b);
        if scored.len() > n {
            scored.select_nth_unstable_by(n - 1, cmp);
            scored.truncate(n);
        }
        scored.sort_by(cmp);

        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (id, score))| RetrievalHit {
                dataset_id: id.to_string(),
                score,
                rank: i + 1,
            })
            .collect())
    }
}

/// Records embedded per provider call while building.
const BUILD_BATCH: usize = 64;

/// Embeds every catalog record with `provider` under `mode`. Any failure
/// aborts the build and names every dataset that could not be embedded.
pub fn build_index(
    catalog: &Catalog,
    mode: CompositionMode,
    provider: &dyn EmbeddingProvider,
) -> Result<VectorIndex, IndexError> {
    if catalog.is_empty() {
        return Err(IndexError::EmptyCatalog);
    }
    let texts: Vec<(&str, String)> = catalog
        .iter()
        .map(|m| (m.id.as_str(), compose(m, mode)))
        .collect();

    let batches: Vec<Result<Vec<EmbeddingVector>, Vec<(String, String)>>> = texts
        .par_chunks(BUILD_BATCH)
        .map(|chunk| {
            let requests: Vec<EmbedRequest<'_>> = chunk
                .iter()
                .map(|(id, text)| request(id, text, mode))
                .collect();
            match embed_requests(provider, &requests) {
                Ok(vectors) => Ok(vectors),
                // Retry one by one to find out which records fail.
                Err(_) => {
                    let mut vectors = Vec::with_capacity(chunk.len());
                    let mut failed = Vec::new();
                    for (id, text) in chunk {
                        match embed_requests(provider, &[request(id, text, mode)]) {
                            Ok(mut v) => vectors.append(&mut v),
                            Err(e) => failed.push((id.to_string(), e.to_string())),
                        }
                    }
                    if failed.is_empty() {
                        Ok(vectors)
                    } else {
                        Err(failed)
                    }
                }
            }
        })
        .collect();

    let mut index = VectorIndex::new(provider.provider_id(), mode, provider.dimension());
    let mut failed = Vec::new();
    let mut ids = texts.iter().map(|(id, _)| *id);
    for batch in batches {
        match batch {
            Ok(vectors) => {
                for v in vectors {
                    let id = ids.next().expect("one vector per record");
                    index.insert(id, v)?;
                }
            }
            Err(f) => {
                ids.by_ref().take(BUILD_BATCH).for_each(drop);
                failed.extend(f);
            }
        }
    }
    if !failed.is_empty() {
        return Err(IndexError::PartialBuild { failed });
    }
    Ok(index)
}

fn request<'a>(id: &'a str, text: &'a str, mode: CompositionMode) -> EmbedRequest<'a> {
    EmbedRequest {
        text,
        mode,
        key: Some(InputKey::Document { dataset_id: id }),
    }
}
