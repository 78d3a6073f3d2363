//! Reader for Humanitarian Data Exchange (CKAN) package metadata.
//!
//! Each input line holds either a package object, a `package_show` response
//! (`{"result": {...}}`), a `package_search` page (`{"result": {"results": [...]}}`)
//! or a JSON array of packages. Title, notes and tags map onto name, summary
//! and tags. Variables come from a `variables` array when present, otherwise
//! from the header row of `<csv_dir>/<package name>.csv` (or `<id>.csv`).

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde_json::Value;

use crate::catalog::{admit, Catalog, CatalogError, IngestIssue, Ingested, IssueKind, RawRecord};

pub const DATASET_URL_PREFIX: &str = "https://data.humdata.org/dataset/";

fn packages(value: Value) -> Vec<Value> {
    match value {
        Value::Array(items) => items,
        Value::Object(mut obj) => match obj.remove("result") {
            Some(Value::Object(mut result)) => match result.remove("results") {
                Some(Value::Array(items)) => items,
                Some(other) => {
                    result.insert("results".into(), other);
                    vec![Value::Object(result)]
                }
                None => vec![Value::Object(result)],
            },
            Some(other) => vec![other],
            None => vec![Value::Object(obj)],
        },
        other => vec![other],
    }
}

fn string_field(pkg: &Value, key: &str) -> Option<String> {
    pkg.get(key).and_then(Value::as_str).map(str::to_string)
}

fn csv_header(path: &Path) -> Option<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path).ok()?;
    let headers = reader.headers().ok()?;
    Some(headers.iter().map(|h| h.trim_start_matches('\u{feff}').to_string()).collect())
}

/// Maps one CKAN package onto the catalog input record.
pub fn convert_package(pkg: &Value, csv_dir: Option<&Path>) -> Result<RawRecord, String> {
    if !pkg.is_object() {
        return Err("package is not a JSON object".into());
    }
    let slug = string_field(pkg, "name");
    let id = string_field(pkg, "id").or_else(|| slug.clone());
    let name = string_field(pkg, "title").or_else(|| slug.clone());
    let tags = pkg.get("tags").and_then(Value::as_array).map(|tags| {
        tags.iter()
            .filter_map(|t| match t {
                Value::String(s) => Some(s.clone()),
                Value::Object(_) => t
                    .get("display_name")
                    .or_else(|| t.get("name"))
                    .and_then(Value::as_str)
                    .map(str::to_string),
                _ => None,
            })
            .collect()
    });
    let mut variables = pkg.get("variables").and_then(Value::as_array).map(|vs| {
        vs.iter()
            .filter_map(Value::as_str)
            .map(str::to_string)
            .collect::<Vec<_>>()
    });
    if variables.is_none() {
        if let Some(dir) = csv_dir {
            variables = [slug.as_deref(), id.as_deref()]
                .into_iter()
                .flatten()
                .map(|stem| dir.join(format!("{stem}.csv")))
                .find(|p| p.is_file())
                .and_then(|p| csv_header(&p));
        }
    }
    let source_url = string_field(pkg, "url")
        .filter(|u| !u.is_empty())
        .or_else(|| slug.as_ref().map(|s| format!("{DATASET_URL_PREFIX}{s}")));
    Ok(RawRecord {
        id,
        name,
        summary: string_field(pkg, "notes"),
        variables,
        tags,
        source_url,
    })
}

/// Reads HDX package metadata into a catalog, with the same per-record
/// validation as [`crate::catalog::ingest`]. Line numbers refer to the input
/// line a package came from.
pub fn ingest_packages<R: BufRead>(reader: R, csv_dir: Option<&Path>) -> Result<Ingested, CatalogError> {
    let mut catalog = Catalog::default();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    let mut warnings = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
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
        for pkg in packages(value) {
            match convert_package(&pkg, csv_dir) {
                Ok(raw) => admit(raw, line_no, &mut catalog, &mut first_line, &mut warnings, &mut errors),
                Err(message) => errors.push(IngestIssue {
                    line: line_no,
                    kind: IssueKind::Malformed { message, column: 0 },
                }),
            }
        }
    }
    Ok(Ingested {
        catalog,
        warnings,
        errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::WarningKind;

    const PACKAGE: &str = r#"{"id":"3f1c","name":"daily-summaries-canada","title":"Daily Summaries of Precipitation Indicators for Canada","notes":"Daily summaries.","tags":[{"name":"el nino"},{"name":"weather and climate","display_name":"weather and climate"}]}"#;

    #[test]
    fn package_fields_map_onto_record() {
        let raw = convert_package(&serde_json::from_str(PACKAGE).unwrap(), None).unwrap();
        assert_eq!(raw.id.as_deref(), Some("3f1c"));
        assert_eq!(raw.name.as_deref(), Some("Daily Summaries of Precipitation Indicators for Canada"));
        assert_eq!(raw.tags.unwrap(), vec!["el nino", "weather and climate"]);
        assert_eq!(
            raw.source_url.as_deref(),
            Some("https://data.humdata.org/dataset/daily-summaries-canada")
        );
        assert!(raw.variables.is_none());
    }

    #[test]
    fn variables_from_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("daily-summaries-canada.csv"),
            "\u{feff}indicator,value,station,fl_cmiss,date,fl_miss,datatype,country\n#x,#y,,,,,,\n",
        )
        .unwrap();
        let out = ingest_packages(PACKAGE.as_bytes(), Some(dir.path())).unwrap();
        let rec = out.catalog.get("3f1c").unwrap();
        assert_eq!(rec.variables.len(), 8);
        assert_eq!(rec.variables[0], "indicator");
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn search_pages_and_show_responses() {
        let page = r#"{"success":true,"result":{"count":2,"results":[{"id":"a","title":"A","tags":[{"name":"health"}],"variables":["x"]},{"id":"b","title":"B","tags":[],"variables":["y"]}]}}"#;
        let show = r#"{"success":true,"result":{"id":"c","title":"C","tags":["education"],"variables":["z"]}}"#;
        let out = ingest_packages(format!("{page}\n{show}\n").as_bytes(), None).unwrap();
        assert_eq!(out.catalog.len(), 3);
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.warnings[0].kind, WarningKind::EmptyTags);
        assert_eq!(out.warnings[0].line, 1);
    }

    #[test]
    fn bad_lines_reported() {
        let out = ingest_packages("nope\n42\n".as_bytes(), None).unwrap();
        assert_eq!(out.errors.len(), 2);
        assert!(out.catalog.is_empty());
    }
}
