//! Acceptance gate. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails. Lines go straight to stderr so they show up without
//! `--nocapture`.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scout_core::catalog::ingest;
use scout_core::embedding::{embed, HashingEmbedder};
use scout_core::evaluation::{prf, run_experiment, Experiment, ExperimentConfig, IndexSet, SampleEntry, SamplePlan};
use scout_core::pipeline::{EchoPolicy, Pipeline, ScriptedLlm, TaskOutcome};
use scout_core::similarity::dice;
use scout_core::testing::MockProviderServer;
use scout_core::vector_store::{build_index, IndexError};
use scout_core::{Catalog, CategoryLabel, CompositionMode, EmbeddingProvider, SourceClass, TaskKind, VariableSet, VectorIndex};
use serde_json::{json, Value};

const DICE_BUDGET: Duration = Duration::from_secs(1);
const TOP_N_BUDGET: Duration = Duration::from_secs(5);
const E2E_BUDGET: Duration = Duration::from_secs(30);
const F1_TOL: f64 = 1e-9;
const DELTA_TOL: f64 = 1e-9;

type Outcome = Result<String, String>;

fn repo() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fixture_catalog() -> Catalog {
    let file = std::fs::File::open(repo().join("fixtures/catalog.jsonl")).unwrap();
    ingest(std::io::BufReader::new(file)).unwrap().catalog
}

fn scout() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scout"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn brute_dice(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let common = a.iter().filter(|x| b.iter().any(|y| y == *x)).count();
    if a.len() + b.len() == 0 {
        0.0
    } else {
        2.0 * common as f64 / (a.len() + b.len()) as f64
    }
}

fn dice_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let vocab: Vec<String> = (0..30).map(|i| format!("v{i}")).collect();
    let draw = |rng: &mut ChaCha8Rng| -> BTreeSet<String> {
        let k = rng.random_range(0..12);
        (0..k).map(|_| vocab.choose(rng).unwrap().clone()).collect()
    };
    let empty = VariableSet::default();
    ensure(dice(&empty, &empty) == 0.0, || "empty/empty is not 0".into())?;
    for i in 0..1000 {
        let (a, b) = (draw(&mut rng), draw(&mut rng));
        let (sa, sb) = (VariableSet::from_names(&a), VariableSet::from_names(&b));
        let d = dice(&sa, &sb);
        ensure(d == brute_dice(&a, &b), || format!("pair {i}: {d} vs oracle {}", brute_dice(&a, &b)))?;
        ensure(d == dice(&sb, &sa), || format!("pair {i}: asymmetric"))?;
        ensure((0.0..=1.0).contains(&d), || format!("pair {i}: {d} out of bounds"))?;
        if !a.is_empty() {
            ensure(dice(&sa, &sa) == 1.0, || format!("pair {i}: identity is not 1"))?;
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < DICE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("1000 seeded pairs exact, {:.3} s", elapsed.as_secs_f64()))
}

fn top_n_correctness() -> Outcome {
    let start = Instant::now();
    let provider = HashingEmbedder::new(64, 7);
    let words = [
        "rain", "school", "price", "clinic", "road", "flood", "census", "market", "drought", "vaccine", "port",
        "teacher", "income", "water", "storm", "refugee",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    let text = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.random_range(2..8)).map(|_| *words.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
    };
    let mut index = VectorIndex::new(provider.provider_id(), CompositionMode::D, 64);
    for i in 0..500 {
        let v = embed(&text(&mut rng), CompositionMode::D, &provider).map_err(|e| e.to_string())?;
        index.insert(format!("r{:03}", (i * 37) % 500), v).map_err(|e| e.to_string())?;
    }
    for q in 0..100 {
        let query = embed(&text(&mut rng), CompositionMode::D, &provider).map_err(|e| e.to_string())?;
        let got: Vec<(String, u64)> = index
            .top_n(&query, 10, &HashSet::new())
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|h| (h.dataset_id, h.score.to_bits()))
            .collect();
        let mut scan: Vec<(String, f64)> = index
            .records()
            .iter()
            .map(|r| {
                let dot: f64 = query.values.iter().zip(&r.values).fold(0.0, |s, (a, b)| s + a * b);
                let na = query.values.iter().fold(0.0, |s: f64, a| s + a * a).sqrt();
                let nb = r.values.iter().fold(0.0, |s: f64, a| s + a * a).sqrt();
                (r.dataset_id.clone(), (dot / (na * nb)).clamp(-1.0, 1.0))
            })
            .collect();
        scan.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let want: Vec<(String, u64)> = scan.into_iter().take(10).map(|(id, s)| (id, s.to_bits())).collect();
        ensure(got == want, || format!("query {q}: {got:?} != {want:?}"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < TOP_N_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("500 x dim 64, 100 queries exact, {:.3} s", elapsed.as_secs_f64()))
}

fn f1_anchors() -> Outcome {
    let s = prf(
        ["value", "origin", "year", "country/territory of asylum/residence"],
        ["value", "indicator name", "country iso3", "year", "indicator code", "country name"],
    )
    .map_err(|e| e.to_string())?;
    ensure((s.precision - 0.5).abs() < F1_TOL, || format!("P = {}", s.precision))?;
    ensure((s.recall - 1.0 / 3.0).abs() < F1_TOL, || format!("R = {}", s.recall))?;
    ensure((s.f1 - 0.40).abs() < F1_TOL, || format!("F1 = {}", s.f1))?;

    // Complete variable estimate for the social development record under D+V.
    let catalog = fixture_catalog();
    let japan = catalog.find_by_name("Japan - Social Development").ok_or("fixture record missing")?.clone();
    let provider = HashingEmbedder::new(256, 42);
    let indices = IndexSet::build(&catalog, &[CompositionMode::DV], &provider).map_err(|e| e.to_string())?;
    let stage = Pipeline::new(&catalog, indices.get(CompositionMode::DV).unwrap(), &provider)
        .map_err(|e| e.to_string())?
        .retrieve(TaskKind::VariableEstimation, &japan.id, 10)
        .map_err(|e| e.to_string())?;
    let mut llm = ScriptedLlm::new();
    llm.insert(
        &stage.prompt.rendered,
        japan.variables.iter().enumerate().map(|(i, v)| format!("{}. {v}", i + 1)).collect::<Vec<_>>().join("\n"),
    );
    let plan = SamplePlan {
        samples: vec![SampleEntry {
            category: CategoryLabel::new("education"),
            dataset_id: japan.id.clone(),
        }],
    };
    let config = ExperimentConfig {
        tasks: vec![TaskKind::VariableEstimation],
        modes: vec![CompositionMode::DV],
        ..ExperimentConfig::default()
    };
    let ctx = Experiment {
        catalog: &catalog,
        indices: &indices,
        provider: &provider,
        llm: &llm,
        run_log: None,
    };
    let report = run_experiment(&ctx, &plan, &config).map_err(|e| e.to_string())?;
    let f1 = report.cells[0].prf_llm.as_ref().ok_or("no LLM score")?.f1;
    ensure((f1 - 1.0).abs() < F1_TOL, || format!("complete prediction F1 = {f1}"))?;
    Ok(format!("P={:.4} R={:.4} F1={:.4}; complete set F1={f1:.2}", s.precision, s.recall, s.f1))
}

const REPORT_FILES: [&str; 3] = ["cells.jsonl", "summary.txt", "figures.csv"];

fn run_evaluate(out: &Path) -> Result<(), String> {
    let status = scout()
        .args(["evaluate", "--catalog"])
        .arg(repo().join("fixtures/catalog.jsonl"))
        .args(["--provider", "test", "--dimension", "256", "--seed", "42", "--llm", "scripted"])
        .args(["--tasks", "1,2,3,4", "--modes", "d,v,dv", "--out"])
        .arg(out)
        .env_remove("SCOUT_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("evaluate exited {:?}: {}", status.status.code(), String::from_utf8_lossy(&status.stderr))
    })
}

fn end_to_end(work: &Path) -> Outcome {
    let start = Instant::now();
    let (a, b) = (work.join("run-a"), work.join("run-b"));
    run_evaluate(&a)?;
    run_evaluate(&b)?;
    let golden = repo().join("fixtures/golden");
    for name in REPORT_FILES {
        let fa = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let fb = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        let fg = std::fs::read(golden.join(name)).map_err(|e| format!("golden {name}: {e}"))?;
        ensure(fa == fb, || format!("{name} differs between runs"))?;
        ensure(fa == fg, || format!("{name} differs from the golden report"))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < E2E_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("2 runs byte-identical to golden ({} files), {:.2} s", REPORT_FILES.len(), elapsed.as_secs_f64()))
}

fn read_cells(dir: &Path) -> Result<Vec<Value>, String> {
    let text = std::fs::read_to_string(dir.join("cells.jsonl")).map_err(|e| e.to_string())?;
    text.lines().map(|l| serde_json::from_str(l).map_err(|e| e.to_string())).collect()
}

fn pop_stats(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt())
}

fn delta_oracle(work: &Path) -> Outcome {
    let cells = read_cells(&work.join("run-a"))?;
    let catalog = fixture_catalog();
    let provider = HashingEmbedder::new(256, 42);
    let description = build_index(&catalog, CompositionMode::D, &provider).map_err(|e| e.to_string())?;
    let lower = |xs: &[String]| -> BTreeSet<String> { xs.iter().map(|s| s.to_lowercase()).collect() };
    let mut checked = 0;
    for cell in cells.iter().filter(|c| c["deltas"].is_array()) {
        let sample = catalog.get(cell["sample_id"].as_str().unwrap()).unwrap();
        let category = cell["category"].as_str().unwrap().to_lowercase();
        let before: Vec<&str> = cell["retrieved"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
        let after: Vec<&str> = cell["recommended"]
            .as_array()
            .map(|es| es.iter().filter_map(|e| e["resolved_id"].as_str()).collect())
            .unwrap_or_default();
        for d in cell["deltas"].as_array().unwrap() {
            let same = d["group"] == "same_category";
            for (ids, side) in [(&before, "before"), (&after, "after")] {
                let values: Vec<f64> = ids
                    .iter()
                    .map(|id| catalog.get(id).unwrap())
                    .filter(|m| m.tags.iter().any(|t| t.to_lowercase() == category) == same)
                    .map(|m| {
                        if d["metric"] == "variable" {
                            brute_dice(&lower(&sample.variables), &lower(&m.variables))
                        } else {
                            let (a, b) = (description.values(&sample.id).unwrap(), description.values(&m.id).unwrap());
                            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                            dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
                        }
                    })
                    .collect();
                let n = d[format!("count_{side}")].as_u64().unwrap() as usize;
                ensure(n == values.len(), || format!("{} {side}: count {n} vs {}", sample.id, values.len()))?;
                let (mean, std) = (&d[format!("mean_{side}")], &d[format!("std_{side}")]);
                if values.is_empty() {
                    ensure(mean.is_null() && std.is_null(), || "empty group reported a value".into())?;
                    continue;
                }
                let (m, s) = pop_stats(&values);
                ensure((mean.as_f64().unwrap() - m).abs() < DELTA_TOL, || format!("{} {side} mean", sample.id))?;
                ensure((std.as_f64().unwrap() - s).abs() < DELTA_TOL, || format!("{} {side} std", sample.id))?;
                checked += 1;
            }
        }
    }
    ensure(checked > 0, || "no deltas to check".into())?;
    Ok(format!("{checked} group summaries match brute force within {DELTA_TOL:e}"))
}

fn conservation(work: &Path) -> Outcome {
    let cells = read_cells(&work.join("run-a"))?;
    let mut rec_cells = 0;
    for cell in cells.iter().filter(|c| c["counts"].is_object()) {
        let c = &cell["counts"];
        let total: u64 = ["same_category", "different_category", "generated_by_llm"]
            .iter()
            .map(|k| c[*k].as_u64().unwrap())
            .sum();
        let len = cell["recommended"].as_array().map_or(0, Vec::len) as u64;
        ensure(total == len, || format!("{}: counts {total} vs {len} entries", cell["sample_id"]))?;
        rec_cells += 1;
    }

    // Two invented names among five.
    let catalog = fixture_catalog();
    let provider = HashingEmbedder::new(256, 42);
    let index = build_index(&catalog, CompositionMode::D, &provider).map_err(|e| e.to_string())?;
    let sample = catalog.find_by_name("Food Prices for Nigeria").unwrap();
    let pipeline = Pipeline::new(&catalog, &index, &provider).map_err(|e| e.to_string())?;
    let stage = pipeline.retrieve(TaskKind::Similar, &sample.id, 10).map_err(|e| e.to_string())?;
    let mut llm = ScriptedLlm::new();
    llm.insert(
        &stage.prompt.rendered,
        "1. Food Prices for Afghanistan\n2. West Africa Cereal Price Monitor 2030\n3. Exchange Rates in Lebanon\n\
         4. Nigeria Fuel Price Tracker\n5. Remittance Inflows by Country",
    );
    let outcome = pipeline
        .with_llm(&llm)
        .run_task(TaskKind::Similar, &sample.id, Some(CategoryLabel::new("economics")), 10)
        .map_err(|e| e.to_string())?;
    let TaskOutcome::Recommendation(rec) = outcome else {
        return Err("expected a recommendation".into());
    };
    let generated = rec.entries.iter().filter(|e| e.source == SourceClass::GeneratedByLlm).count();
    ensure(rec.entries.len() == 5 && generated == 2, || {
        format!("{} entries, {generated} generated", rec.entries.len())
    })?;
    Ok(format!("{rec_cells} fixture cells conserve counts; scripted response yields 2 of 2 invented entries"))
}

/// 100 CKAN-shaped packages, 20 per category. Half list variables inline,
/// half get them from a CSV header in `csv_dir`.
fn synthetic_hdx_slice(path: &Path, csv_dir: &Path) {
    let countries = ["Kenya", "Peru", "Nepal", "Chad", "Haiti", "Yemen", "Mali", "Iraq", "Laos", "Fiji"];
    let extra = [
        ("education", ["schools", "literacy", "teachers"]),
        ("economics", ["markets", "prices", "poverty"]),
        ("health", ["malaria", "nutrition", "outbreaks"]),
        ("facilities and infrastructure", ["roads", "water points", "energy"]),
        ("weather and climate", ["rainfall", "drought", "temperature"]),
    ];
    let vocab = [
        "admin1", "admin2", "year", "month", "value", "indicator", "country", "population", "latitude", "longitude",
        "source", "date", "category", "unit",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut out = std::fs::File::create(path).unwrap();
    for i in 0..100 {
        let (category, topics) = extra[i % 5];
        let topic = topics[i % 3];
        let country = countries[(i / 5) % countries.len()];
        let slug = format!("{}-{}-{i}", country.to_lowercase(), topic.replace(' ', "-"));
        let k = rng.random_range(3..8);
        let mut variables: Vec<&str> = vocab.choose_multiple(&mut rng, k).copied().collect();
        variables.push(topic);
        let mut pkg = json!({
            "id": format!("pkg-{i:03}"),
            "name": slug,
            "title": format!("{country} {topic} statistics {i}"),
            "notes": format!("Subnational {topic} figures for {country}, collected for {category} analysis."),
            "tags": [{"name": category}, {"name": topic}],
        });
        if i % 2 == 0 {
            pkg["variables"] = json!(variables);
        } else {
            std::fs::write(csv_dir.join(format!("{slug}.csv")), format!("{}\n", variables.join(","))).unwrap();
        }
        writeln!(out, "{pkg}").unwrap();
    }
}

fn hdx_smoke(work: &Path) -> Outcome {
    let dir = work.join("hdx");
    std::fs::create_dir_all(dir.join("csv")).map_err(|e| e.to_string())?;
    let (slice, csv_dir) = match std::env::var_os("SCOUT_HDX_SLICE") {
        Some(p) => (PathBuf::from(p), std::env::var_os("SCOUT_HDX_CSV_DIR").map(PathBuf::from)),
        None => {
            synthetic_hdx_slice(&dir.join("slice.jsonl"), &dir.join("csv"));
            (dir.join("slice.jsonl"), Some(dir.join("csv")))
        }
    };
    let catalog = dir.join("catalog.jsonl");
    let mut ingest = scout();
    ingest.args(["ingest", "--format", "hdx", "--input"]).arg(&slice).arg("--output").arg(&catalog);
    if let Some(csv) = &csv_dir {
        ingest.arg("--csv-dir").arg(csv);
    }
    let out = ingest.output().map_err(|e| e.to_string())?;
    ensure(out.status.code() != Some(1), || format!("ingest failed: {}", String::from_utf8_lossy(&out.stderr)))?;

    let server = MockProviderServer::start(HashingEmbedder::new(64, 5), EchoPolicy::default()).map_err(|e| e.to_string())?;
    let report = dir.join("report");
    let out = scout()
        .args(["evaluate", "--catalog"])
        .arg(&catalog)
        .args(["--provider", "remote", "--dimension", "64", "--llm", "remote"])
        .args(["--tasks", "1,2,3,4", "--modes", "d,v,dv", "--out"])
        .arg(&report)
        .env("EMBED_API_BASE", server.base_url())
        .env("EMBED_API_KEY", "smoke-key")
        .env("EMBED_MODEL", "mock-embed")
        .env("LLM_API_BASE", server.base_url())
        .env("LLM_MODEL", "mock-chat")
        .env_remove("SCOUT_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("evaluate exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr))
    })?;
    let csv = std::fs::read_to_string(report.join("figures.csv")).map_err(|e| e.to_string())?;
    let mut rows = 0;
    for task in ["similar", "combinable", "tags", "variables"] {
        for mode in ["d", "v", "dv"] {
            let n = csv.lines().filter(|l| l.contains(&format!(",{task},{mode},"))).count();
            ensure(n > 0, || format!("no figure rows for {task}/{mode}"))?;
            rows += n;
        }
    }
    ensure(server.chat_calls() == 120, || format!("{} chat calls, expected 120", server.chat_calls()))?;
    Ok(format!(
        "{} packages through remote-protocol mock: {} embed calls, {} chat calls, {rows} CSV rows",
        std::fs::read_to_string(&slice).map_err(|e| e.to_string())?.lines().count(),
        server.embed_calls(),
        server.chat_calls()
    ))
}

fn non_reproducibility(work: &Path) -> Outcome {
    let smoke = hdx_smoke(work)?;
    Ok(format!(
        "reported bar values (e.g. 32 vs 61 LLM-generated datasets over the two recommendation tasks) need the \
         full 9,630-dataset HDX corpus, four hosted embedding models and Llama 3.1, so they are not reproduced here; \
         the property checks above stand in for them. Harness smoke: {smoke}"
    ))
}

fn index_persistence(work: &Path) -> Outcome {
    let catalog = fixture_catalog();
    let provider = HashingEmbedder::new(96, 3);
    let index = build_index(&catalog, CompositionMode::DV, &provider).map_err(|e| e.to_string())?;
    let path = work.join("dv.idx");
    index.save(&path).map_err(|e| e.to_string())?;
    let loaded = VectorIndex::load(&path).map_err(|e| e.to_string())?;
    ensure(loaded.records().len() == index.records().len(), || "record count changed".into())?;
    for (a, b) in index.records().iter().zip(loaded.records()) {
        let exact = a.dataset_id == b.dataset_id
            && a.values.iter().map(|v| v.to_bits()).eq(b.values.iter().map(|v| v.to_bits()));
        ensure(exact, || format!("{} not bit-exact", a.dataset_id))?;
    }

    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    let mut flipped = bytes.clone();
    let mid = flipped.len() / 2;
    flipped[mid] ^= 0x40;
    std::fs::write(&path, &flipped).map_err(|e| e.to_string())?;
    let corrupt = VectorIndex::load(&path);
    ensure(matches!(corrupt, Err(IndexError::Corrupt(_))), || format!("flipped byte gave {corrupt:?}"))?;

    let mut truncated = bytes.clone();
    truncated.truncate(bytes.len() - 100);
    std::fs::write(&path, &truncated).map_err(|e| e.to_string())?;
    let short = VectorIndex::load(&path);
    ensure(matches!(short, Err(IndexError::Corrupt(_))), || format!("truncated file gave {short:?}"))?;

    let mut future = bytes;
    future[8..12].copy_from_slice(&2u32.to_le_bytes());
    std::fs::write(&path, &future).map_err(|e| e.to_string())?;
    let version = VectorIndex::load(&path);
    ensure(
        matches!(version, Err(IndexError::UnsupportedVersion { found: 2, .. })),
        || format!("version 2 gave {version:?}"),
    )?;
    Ok(format!("{} vectors bit-exact; corrupt, truncated and version-2 files rejected", index.len()))
}

#[test]
fn acceptance() {
    let work = tempfile::tempdir().unwrap();
    let w = work.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("dice-metric-suite", Box::new(dice_suite)),
        ("cosine-top-n-correctness", Box::new(top_n_correctness)),
        ("f1-anchors", Box::new(f1_anchors)),
        ("end-to-end-determinism", Box::new(|| end_to_end(w))),
        ("similarity-delta-oracle", Box::new(|| delta_oracle(w))),
        ("classification-conservation", Box::new(|| conservation(w))),
        ("non-reproducibility-and-hdx-smoke", Box::new(|| non_reproducibility(w))),
        ("index-persistence", Box::new(|| index_persistence(w))),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr();
    for (name, check) in &criteria {
        let line = match check() {
            Ok(detail) => format!("PASS {name}: {detail}"),
            Err(detail) => {
                failed.push(*name);
                format!("FAIL {name}: {detail}")
            }
        };
        let _ = writeln!(err, "{line}");
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
