//! Dataset metadata records: parsing, validation, storage and summary counts.
//!
//! The catalog file is line-delimited JSON, one record per line:
//!
//! ```text
//! {"id":"...","name":"...","summary":"...","variables":["..."],"tags":["..."],"source_url":"..."}
//! ```
//!
//! `id`, `summary`, `variables`, `tags` and `source_url` may be omitted. A
//! missing id is derived from the normalized name and source URL so that
//! re-ingesting the same file yields the same ids.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::similarity::VariableSet;
use crate::text::{normalize_key, tidy};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("catalog is empty")]
    Empty,
    #[error("duplicate dataset id `{0}`")]
    DuplicateId(String),
    #[error("invalid record `{id}`: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One catalog record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub summary: String,
    #[serde(default)]
    pub variables: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_url: Option<String>,
}

impl DatasetMetadata {
    pub fn variable_set(&self) -> VariableSet {
        VariableSet::from_names(&self.variables)
    }

    pub fn tag_keys(&self) -> BTreeSet<String> {
        self.tags.iter().map(|t| normalize_key(t)).collect()
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        let key = normalize_key(tag);
        self.tags.iter().any(|t| normalize_key(t) == key)
    }

    /// Name, summary, variables and tags all present.
    pub fn is_complete(&self) -> bool {
        !self.name.trim().is_empty()
            && !self.summary.trim().is_empty()
            && !self.variables.is_empty()
            && !self.tags.is_empty()
    }
}

/// Record shape accepted on input. Everything but `name` is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub summary: Option<String>,
    #[serde(default)]
    pub variables: Option<Vec<String>>,
    #[serde(default)]
    pub tags: Option<Vec<String>>,
    #[serde(default)]
    pub source_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WarningKind {
    EmptyVariables,
    EmptyTags,
    DuplicateVariable { name: String },
    DuplicateTag { name: String },
    BlankEntry { field: &'static str },
}

impl fmt::Display for WarningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WarningKind::EmptyVariables => f.write_str("incomplete metadata: no variables"),
            WarningKind::EmptyTags => f.write_str("incomplete metadata: no tags"),
            WarningKind::DuplicateVariable { name } => {
                write!(f, "duplicate variable `{name}` collapsed")
            }
            WarningKind::DuplicateTag { name } => write!(f, "duplicate tag `{name}` collapsed"),
            WarningKind::BlankEntry { field } => write!(f, "blank entry dropped from {field}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestWarning {
    pub line: usize,
    pub id: String,
    #[serde(flatten)]
    pub kind: WarningKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    Malformed { message: String, column: usize },
    MissingName,
    DuplicateId { id: String, first_line: usize },
}

/// A record that was rejected. Ingestion continues past it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestIssue {
    pub line: usize,
    #[serde(flatten)]
    pub kind: IssueKind,
}

impl fmt::Display for IngestIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            IssueKind::Malformed { message, column } => {
                write!(f, "line {}:{}: malformed record: {}", self.line, column, message)
            }
            IssueKind::MissingName => write!(f, "line {}: record has no name", self.line),
            IssueKind::DuplicateId { id, first_line } => write!(
                f,
                "line {}: duplicate id `{}` (first seen on line {})",
                self.line, id, first_line
            ),
        }
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub catalog: Catalog,
    pub warnings: Vec<IngestWarning>,
    pub errors: Vec<IngestIssue>,
}

/// Stable id for records that arrive without one.
pub fn derive_id(name: &str, source_url: Option<&str>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(normalize_key(name).as_bytes());
    hasher.update([0x1f]);
    hasher.update(source_url.map(str::trim).unwrap_or("").as_bytes());
    let digest = hasher.finalize();
    format!("ds-{}", &hex::encode(digest)[..16])
}

fn dedup_list(
    items: Vec<String>,
    field: &'static str,
    warnings: &mut Vec<WarningKind>,
    dup: fn(String) -> WarningKind,
) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(items.len());
    for item in items {
        let display = tidy(&item);
        if display.is_empty() {
            warnings.push(WarningKind::BlankEntry { field });
            continue;
        }
        if seen.insert(normalize_key(&display)) {
            out.push(display);
        } else {
            warnings.push(dup(display));
        }
    }
    out
}

impl RawRecord {
    /// Validates and normalizes into a catalog record. `None` means the record
    /// has no usable name.
    pub fn into_metadata(self) -> Option<(DatasetMetadata, Vec<WarningKind>)> {
        let name = tidy(self.name.as_deref().unwrap_or(""));
        if name.is_empty() {
            return None;
        }
        let source_url = self
            .source_url
            .map(|u| u.trim().to_string())
            .filter(|u| !u.is_empty());
        let id = self
            .id
            .map(|i| i.trim().to_string())
            .filter(|i| !i.is_empty())
            .unwrap_or_else(|| derive_id(&name, source_url.as_deref()));

        let mut warnings = Vec::new();
        let variables = dedup_list(
            self.variables.unwrap_or_default(),
            "variables",
            &mut warnings,
            |name| WarningKind::DuplicateVariable { name },
        );
        let tags = dedup_list(self.tags.unwrap_or_default(), "tags", &mut warnings, |name| {
            WarningKind::DuplicateTag { name }
        });
        if variables.is_empty() {
            warnings.push(WarningKind::EmptyVariables);
        }
        if tags.is_empty() {
            warnings.push(WarningKind::EmptyTags);
        }

        let meta = DatasetMetadata {
            id,
            name,
            summary: self.summary.map(|s| s.trim().to_string()).unwrap_or_default(),
            variables,
            tags,
            source_url,
        };
        Some((meta, warnings))
    }
}

/// Immutable set of dataset records with id and name lookup.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    records: Vec<DatasetMetadata>,
    by_id: HashMap<String, usize>,
    by_name: HashMap<String, usize>,
}

impl PartialEq for Catalog {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Catalog {
    /// Builds a catalog from already-validated records. Duplicate ids are an
    /// error here; use [`ingest`] for lenient record-by-record loading.
    pub fn from_records(records: Vec<DatasetMetadata>) -> Result<Self, CatalogError> {
        let mut catalog = Catalog::default();
        for record in records {
            if record.name.trim().is_empty() {
                return Err(CatalogError::InvalidRecord {
                    id: record.id,
                    reason: "empty name".into(),
                });
            }
            if catalog.by_id.contains_key(&record.id) {
                return Err(CatalogError::DuplicateId(record.id));
            }
            catalog.push(record);
        }
        Ok(catalog)
    }

    fn push(&mut self, record: DatasetMetadata) {
        let idx = self.records.len();
        self.by_id.insert(record.id.clone(), idx);
        self.by_name.entry(normalize_key(&record.name)).or_insert(idx);
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&DatasetMetadata> {
        self.by_id.get(id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.by_id.contains_key(id)
    }

    /// Exact lookup on the normalized name. With duplicate names the first
    /// record in catalog order wins.
    pub fn find_by_name(&self, name: &str) -> Option<&DatasetMetadata> {
        self.by_name.get(&normalize_key(name)).map(|&i| &self.records[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatasetMetadata> {
        self.records.iter()
    }

    pub fn records(&self) -> &[DatasetMetadata] {
        &self.records
    }

    /// Case-insensitive substring search on names, in catalog order.
    pub fn search_names(&self, query: &str) -> Vec<&DatasetMetadata> {
        let needle = normalize_key(query);
        self.records
            .iter()
            .filter(|r| normalize_key(&r.name).contains(&needle))
            .collect()
    }

    /// Writes the catalog in the line-delimited input format.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<(), CatalogError> {
        for record in &self.records {
            serde_json::to_writer(&mut w, record)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn stats(&self) -> Result<CatalogStats, CatalogError> {
        CatalogStats::compute(self)
    }
}

/// Reads a catalog stream. Malformed lines, nameless records and duplicate
/// ids are reported per line and skipped; I/O failures abort.
pub fn ingest<R: BufRead>(reader: R) -> Result<Ingested, CatalogError> {
    let mut catalog = Catalog::default();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    let mut warnings = Vec::new();
    let mut errors = Vec::new();

    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let raw: RawRecord = match serde_json::from_str(trimmed) {
            Ok(raw) => raw,
            Err(e) => {
                errors.push(IngestIssue {
                    line: line_no,
                    kind: IssueKind::Malformed {
                        message: e.to_string(),
                        column: e.column(),
                    },
                });
                continue;
            }
        };
        admit(raw, line_no, &mut catalog, &mut first_line, &mut warnings, &mut errors);
    }

    Ok(Ingested {
        catalog,
        warnings,
        errors,
    })
}

pub(crate) fn admit(
    raw: RawRecord,
    line_no: usize,
    catalog: &mut Catalog,
    first_line: &mut HashMap<String, usize>,
    warnings: &mut Vec<IngestWarning>,
    errors: &mut Vec<IngestIssue>,
) {
    let Some((meta, record_warnings)) = raw.into_metadata() else {
        errors.push(IngestIssue {
            line: line_no,
            kind: IssueKind::MissingName,
        });
        return;
    };
    if let Some(&first) = first_line.get(&meta.id) {
        errors.push(IngestIssue {
            line: line_no,
            kind: IssueKind::DuplicateId {
                id: meta.id,
                first_line: first,
            },
        });
        return;
    }
    first_line.insert(meta.id.clone(), line_no);
    warnings.extend(record_warnings.into_iter().map(|kind| IngestWarning {
        line: line_no,
        id: meta.id.clone(),
        kind,
    }));
    catalog.push(meta);
}

pub fn ingest_str(s: &str) -> Result<Ingested, CatalogError> {
    ingest(s.as_bytes())
}

/// Corpus-level counts over normalized variable and tag names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogStats {
    pub dataset_count: usize,
    pub variable_occurrences: usize,
    pub variable_types: usize,
    pub tag_occurrences: usize,
    pub tag_types: usize,
    pub max_variables_per_dataset: usize,
    pub min_variables_per_dataset: usize,
    pub max_tags_per_dataset: usize,
    pub min_tags_per_dataset: usize,
    pub mean_tags_per_dataset: f64,
}

impl CatalogStats {
    pub fn compute(catalog: &Catalog) -> Result<Self, CatalogError> {
        if catalog.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut variable_types = BTreeSet::new();
        let mut tag_types = BTreeSet::new();
        let mut variable_occurrences = 0;
        let mut tag_occurrences = 0;
        let (mut max_v, mut min_v) = (0, usize::MAX);
        let (mut max_t, mut min_t) = (0, usize::MAX);

        for record in catalog.iter() {
            let vars = record.variable_set();
            let tags = record.tag_keys();
            variable_occurrences += vars.len();
            tag_occurrences += tags.len();
            max_v = max_v.max(vars.len());
            min_v = min_v.min(vars.len());
            max_t = max_t.max(tags.len());
            min_t = min_t.min(tags.len());
            variable_types.extend(vars.into_iter());
            tag_types.extend(tags);
        }

        Ok(CatalogStats {
            dataset_count: catalog.len(),
            variable_occurrences,
            variable_types: variable_types.len(),
            tag_occurrences,
            tag_types: tag_types.len(),
            max_variables_per_dataset: max_v,
            min_variables_per_dataset: min_v,
            max_tags_per_dataset: max_t,
            min_tags_per_dataset: min_t,
            mean_tags_per_dataset: tag_occurrences as f64 / catalog.len() as f64,
        })
    }
}

impl fmt::Display for CatalogStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<36}{:>10}", "datasets", self.dataset_count)?;
        writeln!(f, "{:<36}{:>10}", "# of variables", self.variable_occurrences)?;
        writeln!(f, "{:<36}{:>10}", "# of variable types", self.variable_types)?;
        writeln!(f, "{:<36}{:>10}", "max # of variables in a dataset", self.max_variables_per_dataset)?;
        writeln!(f, "{:<36}{:>10}", "min # of variables in a dataset", self.min_variables_per_dataset)?;
        writeln!(f, "{:<36}{:>10}", "# of tags", self.tag_occurrences)?;
        writeln!(f, "{:<36}{:>10}", "# of tag types", self.tag_types)?;
        writeln!(f, "{:<36}{:>10}", "max # of tags in a dataset", self.max_tags_per_dataset)?;
        writeln!(f, "{:<36}{:>10}", "min # of tags in a dataset", self.min_tags_per_dataset)?;
        write!(f, "{:<36}{:>10.3}", "mean # of tags per dataset", self.mean_tags_per_dataset)
    }
}
