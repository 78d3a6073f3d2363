use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn catalog() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/catalog.jsonl")
}

fn scout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scout"))
        .args(args)
        .env_remove("SCOUT_CONFIG")
        .env_remove("EMBED_API_BASE")
        .env_remove("EMBED_MODEL")
        .env_remove("LLM_API_BASE")
        .env_remove("LLM_MODEL")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn index_twice_writes_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let cat = catalog();
    let mut files = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let o = scout(&[
            "index",
            "--catalog",
            cat.to_str().unwrap(),
            "--mode",
            "d,v,dv",
            "--index-dir",
            out_dir.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut names: Vec<_> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names, ["hash-d256-s42.d.idx", "hash-d256-s42.dv.idx", "hash-d256-s42.v.idx"]);
        files.push(names.iter().map(|n| std::fs::read(out_dir.join(n)).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn query_uses_saved_index_and_matches_in_memory() {
    let dir = tempfile::tempdir().unwrap();
    let cat = catalog();
    let ix = dir.path().to_str().unwrap();
    let o = scout(&["index", "--catalog", cat.to_str().unwrap(), "--mode", "dv", "--index-dir", ix]);
    assert!(o.status.success());
    let base = ["query", "--catalog", cat.to_str().unwrap(), "--task", "similar", "--dataset", "Food Prices for Nigeria", "--json"];
    let saved = scout(&[&base[..], &["--index-dir", ix]].concat());
    let memory = scout(&base);
    assert!(saved.status.success(), "{}", stderr(&saved));
    assert_eq!(stdout(&saved), stdout(&memory));
    let lines: Vec<Value> = stdout(&saved).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    assert!(lines.iter().all(|v| v["kind"] == "hit"));
}

#[test]
fn query_with_llm_prints_recommendations() {
    let cat = catalog();
    let o = scout(&[
        "query", "--catalog", cat.to_str().unwrap(), "--task", "2", "--dataset", "Food Prices for Nigeria", "--use-llm", "--json",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let kinds: Vec<String> = stdout(&o)
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
        .collect();
    assert!(kinds.iter().any(|k| k == "recommendation"));
}

#[test]
fn unknown_dataset_exits_1_and_names_it() {
    let cat = catalog();
    let o = scout(&["query", "--catalog", cat.to_str().unwrap(), "--task", "1", "--dataset", "no-such-id"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no-such-id"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(scout(&["query", "--task", "9", "--dataset", "x"]).status.code(), Some(1));
    assert_eq!(scout(&["frobnicate"]).status.code(), Some(1));
    let o = scout(&["stats"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("catalog"));
}

#[test]
fn stale_index_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.jsonl");
    let text = std::fs::read_to_string(catalog()).unwrap();
    std::fs::write(&small, text.lines().take(20).collect::<Vec<_>>().join("\n")).unwrap();
    let ix = dir.path().join("ix");
    let o = scout(&["index", "--catalog", small.to_str().unwrap(), "--mode", "d", "--index-dir", ix.to_str().unwrap()]);
    assert!(o.status.success());
    let cat = catalog();
    let o = scout(&[
        "query", "--catalog", cat.to_str().unwrap(), "--task", "1", "--dataset", "Food Prices for Nigeria",
        "--mode", "d", "--index-dir", ix.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("does not match the catalog"), "{}", stderr(&o));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("scout.toml");
    std::fs::write(
        &config,
        format!("catalog = {:?}\ndimension = 32\nseed = 7\nn = 3\n", catalog().to_str().unwrap()),
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let base = ["--config", cfg, "query", "--task", "1", "--dataset", "Food Prices for Nigeria", "--json"];

    let o = scout(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);

    let o = scout(&[&base[..], &["--n", "5", "--dimension", "64"]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 5);

    let human = scout(&["--config", cfg, "query", "--task", "1", "--dataset", "Food Prices for Nigeria"]);
    assert!(stdout(&human).contains("hash-d32-s7"), "{}", stdout(&human));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    std::fs::write(&config, "catlog = \"x\"\n").unwrap();
    let o = scout(&["--config", config.to_str().unwrap(), "stats"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("catlog"));
}

#[test]
fn stats_reports_record_count() {
    let cat = catalog();
    let o = scout(&["stats", "--catalog", cat.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("50"), "{}", stdout(&o));
}
