//! Pairwise similarity between datasets.
//!
//! Variables are compared as normalized sets with the Dice coefficient,
//! descriptions by cosine over embedding vectors. Category matching decides
//! whether a recommended dataset comes from the sample's category.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::DatasetMetadata;
use crate::embedding::EmbeddingVector;
use crate::text::normalize_key;

#[derive(Debug, Error, PartialEq)]
pub enum SimilarityError {
    #[error("vectors have different provenance: {left} vs {right}")]
    ProvenanceMismatch { left: String, right: String },
}

/// Normalized variable names with set semantics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableSet(BTreeSet<String>);

impl VariableSet {
    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        VariableSet(
            names
                .into_iter()
                .map(|n| normalize_key(n.as_ref()))
                .filter(|n| !n.is_empty())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(&normalize_key(name))
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.0.iter()
    }

    pub fn intersection_len(&self, other: &VariableSet) -> usize {
        let (small, large) = if self.len() <= other.len() {
            (&self.0, &other.0)
        } else {
            (&other.0, &self.0)
        };
        small.iter().filter(|v| large.contains(*v)).count()
    }
}

impl IntoIterator for VariableSet {
    type Item = String;
    type IntoIter = std::collections::btree_set::IntoIter<String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.into_iter()
    }
}

impl<S: AsRef<str>> FromIterator<S> for VariableSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        VariableSet::from_names(iter)
    }
}

/// `2|a ∩ b| / (|a| + |b|)`. Two empty sets score 0: an empty variable list
/// means missing metadata.
pub fn dice(a: &VariableSet, b: &VariableSet) -> f64 {
    let total = a.len() + b.len();
    if total == 0 {
        return 0.0;
    }
    2.0 * a.intersection_len(b) as f64 / total as f64
}

/// Cosine similarity clamped to [-1, 1]. A zero-norm side scores 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Cosine between two embeddings from the same provider, mode and dimension.
pub fn description_similarity(
    a: &EmbeddingVector,
    b: &EmbeddingVector,
) -> Result<f64, SimilarityError> {
    if a.provider_id != b.provider_id || a.mode != b.mode || a.dimension() != b.dimension() {
        return Err(SimilarityError::ProvenanceMismatch {
            left: a.provenance(),
            right: b.provenance(),
        });
    }
    Ok(cosine(&a.values, &b.values))
}

/// A tag naming a sample dataset's category.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryLabel(String);

impl CategoryLabel {
    pub fn new(tag: impl AsRef<str>) -> Self {
        CategoryLabel(crate::text::tidy(tag.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn key(&self) -> String {
        normalize_key(&self.0)
    }
}

impl fmt::Display for CategoryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Where a recommended dataset comes from relative to the sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceClass {
    SameCategory,
    DifferentCategory,
    GeneratedByLlm,
}

impl SourceClass {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceClass::SameCategory => "same_category",
            SourceClass::DifferentCategory => "different_category",
            SourceClass::GeneratedByLlm => "generated_by_llm",
        }
    }
}

impl fmt::Display for SourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Same category iff the candidate carries the sample's category tag.
pub fn category_match(category: &CategoryLabel, candidate: &DatasetMetadata) -> SourceClass {
    if candidate.has_tag(category.as_str()) {
        SourceClass::SameCategory
    } else {
        SourceClass::DifferentCategory
    }
}

/// How a sample's category is determined when classifying candidates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CategoryRule {
    /// The sample was selected for one category tag.
    Label(CategoryLabel),
    /// No category given: any shared tag with the sample counts as same category.
    SharedTag(BTreeSet<String>),
}

impl CategoryRule {
    pub fn for_sample(category: Option<CategoryLabel>, sample: &DatasetMetadata) -> Self {
        match category {
            Some(label) => CategoryRule::Label(label),
            None => CategoryRule::SharedTag(sample.tag_keys()),
        }
    }

    pub fn classify(&self, candidate: &DatasetMetadata) -> SourceClass {
        match self {
            CategoryRule::Label(label) => category_match(label, candidate),
            CategoryRule::SharedTag(keys) => {
                if candidate.tags.iter().any(|t| keys.contains(&normalize_key(t))) {
                    SourceClass::SameCategory
                } else {
                    SourceClass::DifferentCategory
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::CompositionMode;
    use proptest::prelude::*;

    fn set(items: &[&str]) -> VariableSet {
        VariableSet::from_names(items)
    }

    fn meta(tags: &[&str]) -> DatasetMetadata {
        DatasetMetadata {
            id: "x".into(),
            name: "X".into(),
            summary: String::new(),
            variables: vec![],
            tags: tags.iter().map(|s| s.to_string()).collect(),
            source_url: None,
        }
    }

    fn vector(values: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec(), "test", CompositionMode::D).unwrap()
    }

    #[test]
    fn dice_identity_and_disjoint() {
        assert_eq!(dice(&set(&["x", "y", "z"]), &set(&["x", "y", "z"])), 1.0);
        assert_eq!(dice(&set(&["x"]), &set(&["y"])), 0.0);
        assert_eq!(dice(&set(&[]), &set(&[])), 0.0);
        assert_eq!(dice(&set(&["a"]), &set(&[])), 0.0);
    }

    #[test]
    fn dice_worked_example() {
        let estimated = set(&["value", "year", "origin", "country/territory of asylum/residence"]);
        let gold = set(&[
            "value",
            "indicator name",
            "country iso3",
            "year",
            "indicator code",
            "country name",
        ]);
        // 2 * 2 / (4 + 6)
        assert!((dice(&estimated, &gold) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn dice_uses_normalized_names() {
        assert_eq!(dice(&set(&["Country  Name"]), &set(&["country name"])), 1.0);
    }

    #[test]
    fn cosine_cases() {
        let v = vector(&[1.0, 2.0, 2.0]);
        assert!((description_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        let w = vector(&[2.0, 1.0, 2.0]);
        assert!((description_similarity(&v, &w).unwrap() - 8.0 / 9.0).abs() < 1e-12);
        let o = vector(&[0.0, 1.0, -1.0]);
        assert_eq!(description_similarity(&v, &o).unwrap(), 0.0);
        let z = vector(&[0.0, 0.0, 0.0]);
        assert_eq!(description_similarity(&v, &z).unwrap(), 0.0);
    }

    #[test]
    fn cosine_rejects_mixed_provenance() {
        let a = vector(&[1.0, 0.0]);
        let b = EmbeddingVector::new(vec![1.0, 0.0], "other", CompositionMode::D).unwrap();
        assert!(description_similarity(&a, &b).is_err());
        let c = EmbeddingVector::new(vec![1.0, 0.0], "test", CompositionMode::V).unwrap();
        assert!(description_similarity(&a, &c).is_err());
        let d = vector(&[1.0, 0.0, 0.0]);
        assert!(description_similarity(&a, &d).is_err());
    }

    #[test]
    fn category_membership() {
        let table_one = meta(&["el nino", "rainfall - precipitation", "weather and climate"]);
        assert_eq!(
            category_match(&CategoryLabel::new("Weather and Climate"), &table_one),
            SourceClass::SameCategory
        );
        assert_eq!(
            category_match(&CategoryLabel::new("health"), &meta(&["education"])),
            SourceClass::DifferentCategory
        );
        assert_eq!(
            category_match(&CategoryLabel::new("health"), &meta(&[])),
            SourceClass::DifferentCategory
        );
    }

    #[test]
    fn shared_tag_rule() {
        let sample = meta(&["health", "covid-19"]);
        let rule = CategoryRule::for_sample(None, &sample);
        assert_eq!(rule.classify(&meta(&["COVID-19"])), SourceClass::SameCategory);
        assert_eq!(rule.classify(&meta(&["education"])), SourceClass::DifferentCategory);
    }

    fn small_set() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec("[a-f]{1,2}", 0..8)
    }

    proptest! {
        #[test]
        fn dice_symmetric_and_bounded(a in small_set(), b in small_set()) {
            let (a, b) = (set_of(&a), set_of(&b));
            let ab = dice(&a, &b);
            prop_assert_eq!(ab, dice(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if !a.is_empty() {
                prop_assert_eq!(dice(&a, &a), 1.0);
            }
        }

        #[test]
        fn dice_monotone_under_shared_addition(a in small_set(), b in small_set(), extra in "[g-z]{3}") {
            let before = dice(&set_of(&a), &set_of(&b));
            let mut a2 = a.clone();
            let mut b2 = b.clone();
            a2.push(extra.clone());
            b2.push(extra);
            prop_assert!(dice(&set_of(&a2), &set_of(&b2)) >= before);
        }

        #[test]
        fn cosine_symmetric_and_scale_invariant(
            a in proptest::collection::vec(-10.0f64..10.0, 4),
            b in proptest::collection::vec(-10.0f64..10.0, 4),
            k in 0.01f64..100.0,
        ) {
            let ab = cosine(&a, &b);
            prop_assert_eq!(ab, cosine(&b, &a));
            let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
            prop_assert!((cosine(&scaled, &b) - ab).abs() < 1e-9);
            if a.iter().any(|x| *x != 0.0) {
                prop_assert!((cosine(&a, &a) - 1.0).abs() < 1e-9);
            }
        }
    }

    fn set_of(items: &[String]) -> VariableSet {
        VariableSet::from_names(items)
    }
}
