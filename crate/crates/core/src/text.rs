//! Normalisation keys shared by the catalog, similarity and answer parsing.

/// Case-folds and collapses internal whitespace. Display text keeps its
/// original casing; only comparisons go through this key.
pub fn normalize_key(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

/// Collapses internal whitespace but keeps casing.
pub fn tidy(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
