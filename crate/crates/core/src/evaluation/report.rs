use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{CellRecord, CellStatus};
use super::metrics::{mean_std, pool, Metric, PrfScore, SimilarityDelta, SourceCounts};
use super::EvalError;
use crate::embedding::CompositionMode;
use crate::pipeline::TaskKind;
use crate::similarity::SourceClass;

pub const CELLS_FILE: &str = "cells.jsonl";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const FIGURES_FILE: &str = "figures.csv";

/// Mean precision, recall and F1 over the cells of one (task, mode) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrfSummary {
    pub cells: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub f1_std: f64,
}

impl PrfSummary {
    fn from_scores<'a>(scores: impl Iterator<Item = &'a PrfScore>) -> Option<Self> {
        let scores: Vec<&PrfScore> = scores.collect();
        let p = mean_std(&scores.iter().map(|s| s.precision).collect::<Vec<_>>())?;
        let r = mean_std(&scores.iter().map(|s| s.recall).collect::<Vec<_>>())?;
        let f = mean_std(&scores.iter().map(|s| s.f1).collect::<Vec<_>>())?;
        Some(PrfSummary {
            cells: scores.len(),
            precision: p.0,
            recall: r.0,
            f1: f.0,
            f1_std: f.1,
        })
    }
}

/// Totals for one (task, mode) group. Similarity deltas pool the member
/// values of all cells, as if every sample's group were one population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub task: TaskKind,
    pub mode: CompositionMode,
    pub cells: usize,
    pub failed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_counts: Option<SourceCounts>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub counts: Option<SourceCounts>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deltas: Vec<SimilarityDelta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prf_baseline: Option<PrfSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prf_llm: Option<PrfSummary>,
}

fn pooled_deltas(cells: &[&CellRecord]) -> Vec<SimilarityDelta> {
    let mut out = Vec::new();
    for group in [SourceClass::SameCategory, SourceClass::DifferentCategory] {
        for metric in [Metric::Variable, Metric::Description] {
            let parts: Vec<&SimilarityDelta> = cells
                .iter()
                .flat_map(|c| c.deltas.iter())
                .filter(|d| d.group == group && d.metric == metric)
                .collect();
            if parts.is_empty() {
                continue;
            }
            let side = |f: fn(&SimilarityDelta) -> (usize, Option<f64>, Option<f64>)| {
                let xs: Vec<(usize, f64, f64)> = parts
                    .iter()
                    .filter_map(|d| match f(d) {
                        (n, Some(m), Some(s)) if n > 0 => Some((n, m, s)),
                        _ => None,
                    })
                    .collect();
                pool(&xs)
            };
            let b = side(|d| (d.count_before, d.mean_before, d.std_before));
            let a = side(|d| (d.count_after, d.mean_after, d.std_after));
            out.push(SimilarityDelta {
                group,
                metric,
                count_before: b.map_or(0, |x| x.0),
                mean_before: b.map(|x| x.1),
                std_before: b.map(|x| x.2),
                count_after: a.map_or(0, |x| x.0),
                mean_after: a.map(|x| x.1),
                std_after: a.map(|x| x.2),
            });
        }
    }
    out
}

fn sum_counts<'a>(counts: impl Iterator<Item = &'a SourceCounts>) -> Option<SourceCounts> {
    counts.fold(None, |acc, c| {
        let mut total = acc.unwrap_or_default();
        total += *c;
        Some(total)
    })
}

/// Cell records plus per-(task, mode) aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provider_id: String,
    pub cells: Vec<CellRecord>,
    pub aggregates: Vec<AggregateRow>,
}

impl EvalReport {
    pub fn new(provider_id: &str, cells: Vec<CellRecord>) -> Self {
        let mut keys: Vec<(TaskKind, CompositionMode)> = Vec::new();
        for c in &cells {
            if !keys.contains(&(c.task, c.mode)) {
                keys.push((c.task, c.mode));
            }
        }
        let aggregates = keys
            .into_iter()
            .map(|(task, mode)| {
                let group: Vec<&CellRecord> = cells.iter().filter(|c| c.task == task && c.mode == mode).collect();
                AggregateRow {
                    task,
                    mode,
                    cells: group.len(),
                    failed: group.iter().filter(|c| c.status == CellStatus::Failed).count(),
                    retrieval_counts: sum_counts(group.iter().filter_map(|c| c.retrieval_counts.as_ref())),
                    counts: sum_counts(group.iter().filter_map(|c| c.counts.as_ref())),
                    deltas: pooled_deltas(&group),
                    prf_baseline: PrfSummary::from_scores(group.iter().filter_map(|c| c.prf_baseline.as_ref())),
                    prf_llm: PrfSummary::from_scores(group.iter().filter_map(|c| c.prf_llm.as_ref())),
                }
            })
            .collect();
        EvalReport {
            provider_id: provider_id.to_string(),
            cells,
            aggregates,
        }
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Failed).count()
    }

    pub fn cells_jsonl(&self) -> String {
        let mut out = String::new();
        for cell in &self.cells {
            out.push_str(&serde_json::to_string(cell).expect("cell records serialize"));
            out.push('\n');
        }
        out
    }

    /// Long-format table behind the plots: one value per row.
    pub fn figures_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["figure", "task", "mode", "series", "stage", "statistic", "value"])
            .expect("in-memory write");
        let mut row = |figure: &str, a: &AggregateRow, series: &str, stage: &str, stat: &str, value: String| {
            w.write_record([figure, a.task.slug(), a.mode.slug(), series, stage, stat, value.as_str()])
                .expect("in-memory write");
        };
        for a in &self.aggregates {
            for (stage, counts) in [("retrieval", &a.retrieval_counts), ("llm", &a.counts)] {
                if let Some(c) = counts {
                    for (class, n) in [
                        (SourceClass::SameCategory, c.same_category),
                        (SourceClass::DifferentCategory, c.different_category),
                        (SourceClass::GeneratedByLlm, c.generated_by_llm),
                    ] {
                        if stage == "retrieval" && class == SourceClass::GeneratedByLlm {
                            continue;
                        }
                        row("sources", a, class.as_str(), stage, "count", n.to_string());
                    }
                }
            }
            for d in &a.deltas {
                let series = format!("{}/{}", d.group.as_str(), d.metric);
                for (stage, n, mean, std) in [
                    ("before", d.count_before, d.mean_before, d.std_before),
                    ("after", d.count_after, d.mean_after, d.std_after),
                ] {
                    row("similarity", a, &series, stage, "count", n.to_string());
                    if let (Some(m), Some(s)) = (mean, std) {
                        row("similarity", a, &series, stage, "mean", m.to_string());
                        row("similarity", a, &series, stage, "std", s.to_string());
                    }
                }
            }
            for (stage, prf) in [("baseline", &a.prf_baseline), ("llm", &a.prf_llm)] {
                if let Some(p) = prf {
                    for (stat, v) in [
                        ("precision", p.precision),
                        ("recall", p.recall),
                        ("f1", p.f1),
                        ("f1_std", p.f1_std),
                    ] {
                        row("estimation", a, "all", stage, stat, v.to_string());
                    }
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "provider: {}", self.provider_id);
        let _ = writeln!(s, "cells: {} (failed: {})", self.cells.len(), self.failed_cells());

        let recs: Vec<&AggregateRow> = self.aggregates.iter().filter(|a| a.task.is_recommendation()).collect();
        if !recs.is_empty() {
            let _ = writeln!(s, "\nrecommendation sources");
            let _ = writeln!(
                s,
                "{:<12} {:<4} {:>5} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}",
                "task", "mode", "cells", "failed", "ret_same", "ret_diff", "same", "different", "generated"
            );
            for a in &recs {
                let r = a.retrieval_counts.unwrap_or_default();
                let c = a.counts.unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{:<12} {:<4} {:>5} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9}",
                    a.task.slug(),
                    a.mode.to_string(),
                    a.cells,
                    a.failed,
                    r.same_category,
                    r.different_category,
                    c.same_category,
                    c.different_category,
                    c.generated_by_llm
                );
            }

            let _ = writeln!(s, "\nsimilarity to the sample, before and after the LLM (mean ± std, n)");
            let _ = writeln!(
                s,
                "{:<12} {:<4} {:<20} {:<12} {:<24} {:<24}",
                "task", "mode", "group", "metric", "before", "after"
            );
            for a in &recs {
                for d in &a.deltas {
                    let _ = writeln!(
                        s,
                        "{:<12} {:<4} {:<20} {:<12} {:<24} {:<24}",
                        a.task.slug(),
                        a.mode.to_string(),
                        d.group.as_str(),
                        d.metric.to_string(),
                        side(d.count_before, d.mean_before, d.std_before),
                        side(d.count_after, d.mean_after, d.std_after)
                    );
                }
            }
        }

        let ests: Vec<&AggregateRow> = self.aggregates.iter().filter(|a| !a.task.is_recommendation()).collect();
        if !ests.is_empty() {
            let _ = writeln!(s, "\nestimation (mean over cells)");
            let _ = writeln!(
                s,
                "{:<12} {:<4} {:<9} {:>5} {:>9} {:>9} {:>9} {:>9}",
                "task", "mode", "method", "cells", "precision", "recall", "f1", "f1_std"
            );
            for a in &ests {
                for (method, p) in [("baseline", &a.prf_baseline), ("llm", &a.prf_llm)] {
                    if let Some(p) = p {
                        let _ = writeln!(
                            s,
                            "{:<12} {:<4} {:<9} {:>5} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
                            a.task.slug(),
                            a.mode.to_string(),
                            method,
                            p.cells,
                            p.precision,
                            p.recall,
                            p.f1,
                            p.f1_std
                        );
                    }
                }
            }
        }

        let failed: Vec<&CellRecord> = self.cells.iter().filter(|c| c.status == CellStatus::Failed).collect();
        if !failed.is_empty() {
            let _ = writeln!(s, "\nfailed cells");
            for c in failed {
                let _ = writeln!(
                    s,
                    "{} {} {}: {}",
                    c.task.slug(),
                    c.mode,
                    c.sample_id,
                    c.error.as_deref().unwrap_or("")
                );
            }
        }
        s
    }

    /// Writes `cells.jsonl`, `summary.txt` and `figures.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), EvalError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(CELLS_FILE), self.cells_jsonl())?;
        std::fs::write(dir.join(SUMMARY_FILE), self.summary_text())?;
        std::fs::write(dir.join(FIGURES_FILE), self.figures_csv())?;
        Ok(())
    }
}

fn side(n: usize, mean: Option<f64>, std: Option<f64>) -> String {
    match (mean, std) {
        (Some(m), Some(s)) => format!("{m:.3} ± {s:.3} ({n})"),
        _ => "-".into(),
    }
}
