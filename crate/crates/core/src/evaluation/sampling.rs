use std::collections::HashSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EvalError;
use crate::catalog::{Catalog, DatasetMetadata};
use crate::similarity::CategoryLabel;

pub const DEFAULT_CATEGORIES: [&str; 5] = [
    "education",
    "economics",
    "health",
    "facilities and infrastructure",
    "weather and climate",
];
pub const DEFAULT_PER_CATEGORY: usize = 2;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub category: CategoryLabel,
    pub dataset_id: String,
}

/// Samples grouped by category, in the order the categories were requested.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SamplePlan {
    pub samples: Vec<SampleEntry>,
}

fn sort_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

pub fn default_categories() -> Vec<CategoryLabel> {
    DEFAULT_CATEGORIES.iter().map(|c| CategoryLabel::new(*c)).collect()
}

/// Picks `per_category` complete records per category. A record is eligible
/// for a category when it carries that tag and none of the other requested
/// category tags. Candidates are ordered by a seeded hash of their id, so the
/// plan depends only on the catalog contents and the seed.
pub fn select_samples(
    catalog: &Catalog,
    categories: &[CategoryLabel],
    per_category: usize,
    seed: u64,
) -> Result<SamplePlan, EvalError> {
    let keys: Vec<String> = categories.iter().map(CategoryLabel::key).collect();
    let mut distinct = HashSet::new();
    for (c, k) in categories.iter().zip(&keys) {
        if !distinct.insert(k.clone()) {
            return Err(EvalError::DuplicateCategory(c.as_str().to_string()));
        }
    }
    let mut plan = SamplePlan::default();
    for (i, category) in categories.iter().enumerate() {
        let mut candidates: Vec<&DatasetMetadata> = catalog
            .iter()
            .filter(|m| m.is_complete())
            .filter(|m| {
                let tags = m.tag_keys();
                tags.contains(&keys[i])
                    && keys.iter().enumerate().all(|(j, k)| j == i || !tags.contains(k))
            })
            .collect();
        if candidates.len() < per_category {
            return Err(EvalError::InsufficientCandidates {
                category: category.as_str().to_string(),
                available: candidates.len(),
                needed: per_category,
            });
        }
        candidates.sort_by_cached_key(|m| sort_key(seed, &m.id));
        plan.samples.extend(candidates.into_iter().take(per_category).map(|m| SampleEntry {
            category: category.clone(),
            dataset_id: m.id.clone(),
        }));
    }
    Ok(plan)
}

#[derive(Deserialize)]
struct OverrideLine {
    category: String,
    dataset: String,
}

impl SamplePlan {
    /// Reads an explicit sample list: one `{"category": .., "dataset": ..}`
    /// object per line, where `dataset` is an id or an exact dataset name.
    pub fn read_override<R: BufRead>(reader: R, catalog: &Catalog) -> Result<Self, EvalError> {
        let mut plan = SamplePlan::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: OverrideLine = serde_json::from_str(&line)
                .map_err(|e| EvalError::InvalidSamples(format!("line {}: {e}", i + 1)))?;
            let meta = catalog
                .get(&row.dataset)
                .or_else(|| catalog.find_by_name(&row.dataset))
                .ok_or_else(|| EvalError::UnknownDataset(row.dataset.clone()))?;
            plan.samples.push(SampleEntry {
                category: CategoryLabel::new(row.category),
                dataset_id: meta.id.clone(),
            });
        }
        if plan.samples.is_empty() {
            return Err(EvalError::InvalidSamples("sample file lists no datasets".into()));
        }
        Ok(plan)
    }

    pub fn open_override(path: impl AsRef<Path>, catalog: &Catalog) -> Result<Self, EvalError> {
        let file = std::fs::File::open(path)?;
        Self::read_override(std::io::BufReader::new(file), catalog)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}
