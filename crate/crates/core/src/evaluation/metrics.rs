use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::catalog::{Catalog, DatasetMetadata};
use crate::pipeline::{RecommendationOutcome, RecommendationEntry};
use crate::similarity::{category_match, dice, CategoryLabel, SourceClass};
use crate::text::normalize_key;
use crate::vector_store::{RetrievalHit, VectorIndex};

/// How many recommended datasets fall into each source group.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceCounts {
    pub same_category: usize,
    pub different_category: usize,
    pub generated_by_llm: usize,
}

impl SourceCounts {
    pub fn total(&self) -> usize {
        self.same_category + self.different_category + self.generated_by_llm
    }

    pub fn add(&mut self, class: SourceClass) {
        match class {
            SourceClass::SameCategory => self.same_category += 1,
            SourceClass::DifferentCategory => self.different_category += 1,
            SourceClass::GeneratedByLlm => self.generated_by_llm += 1,
        }
    }
}

impl std::ops::AddAssign for SourceCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.same_category += rhs.same_category;
        self.different_category += rhs.different_category;
        self.generated_by_llm += rhs.generated_by_llm;
    }
}

fn entry_class(entry: &RecommendationEntry, category: &CategoryLabel, catalog: &Catalog) -> SourceClass {
    match entry.resolved_id.as_deref().and_then(|id| catalog.get(id)) {
        Some(meta) => category_match(category, meta),
        None => SourceClass::GeneratedByLlm,
    }
}

/// Classifies every LLM-recommended entry against the sample's category.
pub fn classify_sources(
    outcome: &RecommendationOutcome,
    category: &CategoryLabel,
    catalog: &Catalog,
) -> SourceCounts {
    let mut counts = SourceCounts::default();
    for entry in &outcome.entries {
        counts.add(entry_class(entry, category, catalog));
    }
    counts
}

/// The same classification applied to the retrieval list.
pub fn classify_hits(hits: &[RetrievalHit], category: &CategoryLabel, catalog: &Catalog) -> SourceCounts {
    let mut counts = SourceCounts::default();
    for hit in hits {
        counts.add(match catalog.get(&hit.dataset_id) {
            Some(meta) => category_match(category, meta),
            None => SourceClass::GeneratedByLlm,
        });
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Dice over variable sets.
    Variable,
    /// Cosine over description embeddings.
    Description,
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Variable => "variable",
            Metric::Description => "description",
        })
    }
}

/// Mean and population standard deviation of one group's similarities to the
/// sample, before and after LLM filtering. A side with no members has no
/// mean or std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityDelta {
    pub group: SourceClass,
    pub metric: Metric,
    pub count_before: usize,
    pub mean_before: Option<f64>,
    pub std_before: Option<f64>,
    pub count_after: usize,
    pub mean_after: Option<f64>,
    pub std_after: Option<f64>,
}

/// Mean and population standard deviation; `None` for no values.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Combines per-group (count, mean, population std) summaries into the
/// summary of the union.
pub fn pool(parts: &[(usize, f64, f64)]) -> Option<(usize, f64, f64)> {
    let total: usize = parts.iter().map(|p| p.0).sum();
    if total == 0 {
        return None;
    }
    let n = total as f64;
    let mean = parts.iter().map(|&(c, m, _)| c as f64 * m).sum::<f64>() / n;
    let var = parts
        .iter()
        .map(|&(c, m, s)| c as f64 * (s * s + (m - mean) * (m - mean)))
        .sum::<f64>()
        / n;
    Some((total, mean, var.max(0.0).sqrt()))
}

fn pair_value(
    metric: Metric,
    sample: &DatasetMetadata,
    other: &DatasetMetadata,
    description_index: &VectorIndex,
) -> Result<f64, EvalError> {
    match metric {
        Metric::Variable => Ok(dice(&sample.variable_set(), &other.variable_set())),
        Metric::Description => description_index
            .pair_similarity(&sample.id, &other.id)
            .ok_or_else(|| EvalError::MissingVector(format!("{} or {}", sample.id, other.id))),
    }
}

/// Before/after similarity summaries for the same- and different-category
/// groups under both metrics. The "after" side uses resolved entries only;
/// LLM-generated names have nothing to compare.
pub fn similarity_deltas(
    sample: &DatasetMetadata,
    category: &CategoryLabel,
    hits_before: &[RetrievalHit],
    outcome_after: &RecommendationOutcome,
    description_index: &VectorIndex,
    catalog: &Catalog,
) -> Result<Vec<SimilarityDelta>, EvalError> {
    let lookup = |id: &str| catalog.get(id).ok_or_else(|| EvalError::UnknownDataset(id.to_string()));
    let before: Vec<&DatasetMetadata> = hits_before
        .iter()
        .map(|h| lookup(&h.dataset_id))
        .collect::<Result<_, _>>()?;
    let after: Vec<&DatasetMetadata> = outcome_after
        .entries
        .iter()
        .filter_map(|e| e.resolved_id.as_deref())
        .map(lookup)
        .collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for group in [SourceClass::SameCategory, SourceClass::DifferentCategory] {
        for metric in [Metric::Variable, Metric::Description] {
            let values = |members: &[&DatasetMetadata]| -> Result<Vec<f64>, EvalError> {
                members
                    .iter()
                    .filter(|m| category_match(category, m) == group)
                    .map(|m| pair_value(metric, sample, m, description_index))
                    .collect()
            };
            let vb = values(&before)?;
            let va = values(&after)?;
            if vb.is_empty() && va.is_empty() {
                continue;
            }
            let b = mean_std(&vb);
            let a = mean_std(&va);
            out.push(SimilarityDelta {
                group,
                metric,
                count_before: vb.len(),
                mean_before: b.map(|x| x.0),
                std_before: b.map(|x| x.1),
                count_after: va.len(),
                mean_after: a.map(|x| x.0),
                std_after: a.map(|x| x.1),
            });
        }
    }
    Ok(out)
}

/// Precision, recall and F1 of a predicted label set against the gold set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: usize,
    pub gold: usize,
    pub true_positives: usize,
}

/// Labels are compared after normalization. An empty prediction scores
/// precision 0.
pub fn prf<P, G>(predicted: P, gold: G) -> Result<PrfScore, EvalError>
where
    P: IntoIterator,
    P::Item: AsRef<str>,
    G: IntoIterator,
    G::Item: AsRef<str>,
{
    let predicted: BTreeSet<String> = predicted.into_iter().map(|s| normalize_key(s.as_ref())).collect();
    let gold: BTreeSet<String> = gold.into_iter().map(|s| normalize_key(s.as_ref())).collect();
    if gold.is_empty() {
        return Err(EvalError::EmptyGold);
    }
    let tp = predicted.intersection(&gold).count();
    let precision = if predicted.is_empty() {
        0.0
    } else {
        tp as f64 / predicted.len() as f64
    };
    let recall = tp as f64 / gold.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrfScore {
        precision,
        recall,
        f1,
        predicted: predicted.len(),
        gold: gold.len(),
        true_positives: tp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: Option<&str>) -> RecommendationEntry {
        RecommendationEntry {
            raw_name: id.unwrap_or("made up").into(),
            resolved_id: id.map(str::to_string),
            source: SourceClass::GeneratedByLlm,
        }
    }

    fn meta(id: &str, tags: &[&str]) -> DatasetMetadata {
        DatasetMetadata {
            id: id.into(),
            name: id.to_uppercase(),
            summary: String::new(),
            variables: vec!["v".into()],
            tags: tags.iter().map(|s| s.to_string()).collect(),
            source_url: None,
        }
    }

    fn outcome(entries: Vec<RecommendationEntry>) -> RecommendationOutcome {
        RecommendationOutcome {
            entries,
            hits: vec![],
            warnings: vec![],
            prompt_hash: String::new(),
            response: String::new(),
        }
    }

    #[test]
    fn classification_cases() {
        let catalog = Catalog::from_records(vec![
            meta("a", &["health"]),
            meta("b", &["health", "covid"]),
            meta("c", &["education"]),
            meta("d", &["Health"]),
        ])
        .unwrap();
        let health = CategoryLabel::new("health");
        let three_same = outcome(vec![entry(Some("a")), entry(Some("b")), entry(Some("d"))]);
        assert_eq!(
            classify_sources(&three_same, &health, &catalog),
            SourceCounts { same_category: 3, different_category: 0, generated_by_llm: 0 }
        );
        let unresolved = outcome(vec![entry(None)]);
        assert_eq!(
            classify_sources(&unresolved, &health, &catalog),
            SourceCounts { same_category: 0, different_category: 0, generated_by_llm: 1 }
        );
        let mixed = outcome(vec![entry(Some("a")), entry(None), entry(Some("c")), entry(Some("b"))]);
        let counts = classify_sources(&mixed, &health, &catalog);
        assert_eq!(counts, SourceCounts { same_category: 2, different_category: 1, generated_by_llm: 1 });
        assert_eq!(counts.total(), 4);
    }

    #[test]
    fn prf_identity() {
        let s = prf(["a", "b"], ["b", "a"]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn prf_partial_variable_estimate() {
        let s = prf(
            ["value", "origin", "year", "country/territory of asylum/residence"],
            ["value", "indicator name", "country iso3", "year", "indicator code", "country name"],
        )
        .unwrap();
        assert!((s.precision - 0.5).abs() < 1e-12);
        assert!((s.recall - 1.0 / 3.0).abs() < 1e-12);
        assert!((s.f1 - 0.4).abs() < 1e-12);
    }

    #[test]
    fn prf_conventions() {
        let empty: [&str; 0] = [];
        let s = prf(empty, ["a"]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        assert!(matches!(prf(["a"], empty), Err(EvalError::EmptyGold)));
        let s = prf(["x"], ["a"]).unwrap();
        assert_eq!(s.f1, 0.0);
    }

    #[test]
    fn mean_std_is_population() {
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert!(mean_std(&[]).is_none());
    }

    #[test]
    fn pooling_matches_direct_computation() {
        let a = [0.1, 0.5, 0.9];
        let b = [0.2, 0.3];
        let (ma, sa) = mean_std(&a).unwrap();
        let (mb, sb) = mean_std(&b).unwrap();
        let (n, m, s) = pool(&[(3, ma, sa), (2, mb, sb), (0, 0.0, 0.0)]).unwrap();
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let (m2, s2) = mean_std(&all).unwrap();
        assert_eq!(n, 5);
        assert!((m - m2).abs() < 1e-12);
        assert!((s - s2).abs() < 1e-12);
        assert!(pool(&[]).is_none());
    }

    proptest! {
        #[test]
        fn prf_bounds(pred in proptest::collection::vec("[a-e]", 0..6), gold in proptest::collection::vec("[a-e]", 1..6)) {
            let s = prf(&pred, &gold).unwrap();
            for v in [s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            prop_assert_eq!(s.f1 == 0.0, s.true_positives == 0);
        }
    }
}
