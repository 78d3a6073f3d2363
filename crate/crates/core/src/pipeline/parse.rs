//! Extraction of ranked items from free-form LLM answers and resolution of
//! recommended dataset names against the catalog.

use std::collections::HashSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, DatasetMetadata};
use crate::text::{normalize_key, tidy};

static NUMBERED: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\s*)(?:\d{1,3}\s*[.):]|\(\d{1,3}\))\s+(.+?)\s*$").unwrap());
static BULLETED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(\s*)[-*•+]\s+(.+?)\s*$").unwrap());

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolveOptions {
    /// When set, an item that matches no name exactly or by containment is
    /// resolved to the closest name whose normalized Levenshtein similarity
    /// reaches this threshold. Off by default.
    pub fuzzy_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedEntry {
    pub raw_name: String,
    pub resolved_id: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedList {
    pub entries: Vec<ParsedEntry>,
    pub warnings: Vec<String>,
}

/// List items of an answer, in order, with markup stripped.
///
/// Numbered items win over bullets; only the outermost indentation level of
/// the winning kind is kept, so explanatory sub-bullets are skipped.
pub fn extract_items(text: &str) -> Vec<String> {
    let mut numbered = Vec::new();
    let mut bulleted = Vec::new();
    for line in text.lines() {
        if let Some(c) = NUMBERED.captures(line) {
            numbered.push((c[1].len(), c[2].to_string()));
        } else if let Some(c) = BULLETED.captures(line) {
            bulleted.push((c[1].len(), c[2].to_string()));
        }
    }
    let chosen = if numbered.is_empty() { bulleted } else { numbered };
    let Some(min_indent) = chosen.iter().map(|(i, _)| *i).min() else {
        return Vec::new();
    };
    chosen
        .into_iter()
        .filter(|(indent, _)| *indent == min_indent)
        .map(|(_, item)| clean_item(&item))
        .filter(|item| !item.is_empty())
        .collect()
}

fn clean_item(item: &str) -> String {
    let stripped = item.replace("**", "").replace("__", "").replace('`', "");
    let quotes: &[char] = &['"', '\'', '“', '”', '‘', '’'];
    let mut s = stripped.trim();
    // A quoted name followed by an explanation keeps only the quoted part.
    if let Some(open) = s.chars().next().filter(|c| quotes.contains(c)) {
        let close = match open {
            '“' => '”',
            '‘' => '’',
            c => c,
        };
        if let Some(end) = s[open.len_utf8()..].find(close) {
            s = &s[open.len_utf8()..open.len_utf8() + end];
        }
    }
    tidy(s.trim_matches(quotes).trim_end_matches(['.', ',', ';']))
}

/// Whether `needle` occurs in `hay` delimited by non-alphanumeric characters.
fn contains_at_word_boundary(hay: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    hay.match_indices(needle).any(|(start, _)| {
        let before = hay[..start].chars().next_back();
        let after = hay[start + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Maps one answer item to a catalog record: normalized exact match first,
/// then the longest catalog name contained in the item, then (optionally)
/// fuzzy match.
pub fn resolve_name<'c>(
    item: &str,
    catalog: &'c Catalog,
    options: &ResolveOptions,
) -> Option<&'c DatasetMetadata> {
    if let Some(meta) = catalog.find_by_name(item) {
        return Some(meta);
    }
    let key = normalize_key(item);
    let mut best: Option<(usize, &DatasetMetadata)> = None;
    for meta in catalog.iter() {
        let name = normalize_key(&meta.name);
        if name.len() > best.map_or(0, |(len, _)| len) && contains_at_word_boundary(&key, &name) {
            best = Some((name.len(), meta));
        }
    }
    if let Some((_, meta)) = best {
        return Some(meta);
    }
    let threshold = options.fuzzy_threshold?;
    let mut fuzzy: Option<(f64, &DatasetMetadata)> = None;
    for meta in catalog.iter() {
        let score = strsim::normalized_levenshtein(&key, &normalize_key(&meta.name));
        if score >= threshold && score > fuzzy.map_or(f64::NEG_INFINITY, |(s, _)| s) {
            fuzzy = Some((score, meta));
        }
    }
    fuzzy.map(|(_, meta)| meta)
}

/// Parses a ranked dataset list and resolves each item. Items resolving to a
/// dataset already listed are dropped.
pub fn parse_ranked_list(text: &str, catalog: &Catalog, options: &ResolveOptions) -> ParsedList {
    let items = extract_items(text);
    let mut warnings = Vec::new();
    if items.is_empty() {
        warnings.push("no list structure found in LLM output".to_string());
    }
    let mut seen_ids = HashSet::new();
    let mut seen_raw = HashSet::new();
    let mut entries = Vec::with_capacity(items.len());
    for item in items {
        let resolved = resolve_name(&item, catalog, options).map(|m| m.id.clone());
        match &resolved {
            Some(id) if !seen_ids.insert(id.clone()) => {
                warnings.push(format!("duplicate recommendation `{item}` dropped"));
                continue;
            }
            None if !seen_raw.insert(normalize_key(&item)) => {
                warnings.push(format!("duplicate recommendation `{item}` dropped"));
                continue;
            }
            _ => {}
        }
        entries.push(ParsedEntry {
            raw_name: item,
            resolved_id: resolved,
        });
    }
    ParsedList { entries, warnings }
}

/// Parses a ranked label list (tags or variables), deduplicated on the
/// normalized label.
pub fn parse_labels(text: &str) -> (Vec<String>, Vec<String>) {
    let items = extract_items(text);
    let mut warnings = Vec::new();
    if items.is_empty() {
        warnings.push("no list structure found in LLM output".to_string());
    }
    let mut seen = HashSet::new();
    let labels = items
        .into_iter()
        .filter(|item| seen.insert(normalize_key(item)))
        .collect();
    (labels, warnings)
}
