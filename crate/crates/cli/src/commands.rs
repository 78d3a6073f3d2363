use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, ValueEnum};
use scout_core::catalog::{ingest as ingest_jsonl, Ingested};
use scout_core::evaluation::{
    default_categories, run_experiment, select_samples, Experiment, ExperimentConfig, SamplePlan,
    DEFAULT_PER_CATEGORY,
};
use scout_core::hdx::ingest_packages;
use scout_core::pipeline::{ResolveOptions, RunLog, DEFAULT_N};
use scout_core::vector_store::index_file_name;
use scout_core::{Catalog, CategoryLabel, CompositionMode, TaskKind};
use scout_server::{run_query, AppState, OutcomeView, QueryRequest, QueryResponse, ServerConfig, DEFAULT_ADDR};
use serde_json::json;

use crate::config::{pick, FileConfig};
use crate::setup::{index_error, load_indices, CatalogArgs, LlmArgs, ProviderArgs};
use crate::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    /// One `{id?, name, summary, variables, tags, source_url?}` object per line.
    Jsonl,
    /// HDX/CKAN package metadata, one package or API response per line.
    Hdx,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Raw metadata file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: InputFormat,
    /// Directory of `<package>.csv` files whose header rows supply variables (hdx format).
    #[arg(long)]
    csv_dir: Option<PathBuf>,
    /// Where to write the catalog. Defaults to `catalog` from the config file.
    #[arg(long)]
    output: Option<PathBuf>,
}

pub fn ingest(args: IngestArgs, file: &FileConfig) -> Result<(), CliError> {
    let output = pick(&args.output, &file.catalog)
        .ok_or_else(|| CliError::usage("no output path (--output or `catalog` in the config file)"))?;
    let input = std::fs::File::open(&args.input)
        .map_err(|e| CliError::usage(format!("cannot open {}: {e}", args.input.display())))?;
    if let Some(dir) = &args.csv_dir {
        if !dir.is_dir() {
            return Err(CliError::usage(format!("--csv-dir {} is not a directory", dir.display())));
        }
    }
    let reader = std::io::BufReader::new(input);
    let Ingested {
        catalog,
        warnings,
        errors,
    } = match args.format {
        InputFormat::Jsonl => ingest_jsonl(reader),
        InputFormat::Hdx => ingest_packages(reader, args.csv_dir.as_deref()),
    }
    .map_err(CliError::fatal)?;

    for w in warnings.iter().take(50) {
        eprintln!("warning: line {} ({}): {}", w.line, w.id, w.kind);
    }
    for e in errors.iter().take(50) {
        eprintln!("rejected: {e}");
    }
    if catalog.is_empty() {
        return Err(CliError::usage("no valid records in input"));
    }
    let out = std::fs::File::create(&output)
        .map_err(|e| CliError::usage(format!("cannot write {}: {e}", output.display())))?;
    catalog
        .write_jsonl(std::io::BufWriter::new(out))
        .map_err(CliError::fatal)?;
    println!(
        "wrote {} datasets to {} ({} warnings, {} rejected)",
        catalog.len(),
        output.display(),
        warnings.len(),
        errors.len()
    );
    if !errors.is_empty() {
        return Err(CliError::partial(format!("{} input records were rejected", errors.len())));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
}

pub fn stats(args: StatsArgs, file: &FileConfig) -> Result<(), CliError> {
    let catalog = args.catalog.load(file)?;
    let table = catalog.stats().map_err(CliError::fatal)?.to_string();
    println!("{}", table.trim_end());
    Ok(())
}

fn index_dir(flag: &Option<PathBuf>, file: &FileConfig, must_exist: bool) -> Result<Option<PathBuf>, CliError> {
    let dir = pick(flag, &file.index_dir);
    if let Some(d) = &dir {
        if must_exist && !d.is_dir() {
            return Err(CliError::usage(format!("index directory {} does not exist", d.display())));
        }
    }
    Ok(dir)
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    /// Composition modes to index (d, v, dv).
    #[arg(long = "mode", value_delimiter = ',', required = true)]
    modes: Vec<CompositionMode>,
    /// Output directory for index files.
    #[arg(long)]
    index_dir: Option<PathBuf>,
}

pub fn index(args: IndexArgs, file: &FileConfig) -> Result<(), CliError> {
    let dir = index_dir(&args.index_dir, file, false)?
        .ok_or_else(|| CliError::usage("no index directory (--index-dir or `index_dir` in the config file)"))?;
    let catalog = args.catalog.load(file)?;
    let provider = args.provider.build(file)?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
    for mode in dedup(args.modes) {
        let index = scout_core::vector_store::build_index(&catalog, mode, &*provider).map_err(index_error)?;
        let path = dir.join(index_file_name(provider.provider_id(), mode));
        index.save(&path).map_err(CliError::fatal)?;
        println!("{mode}: {} vectors -> {}", index.len(), path.display());
    }
    Ok(())
}

fn dedup<T: PartialEq>(items: Vec<T>) -> Vec<T> {
    let mut out = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    llm: LlmArgs,
    /// Directory with index files; missing indices are built in memory.
    #[arg(long)]
    index_dir: Option<PathBuf>,
    /// 1-4 or similar, combinable, tags, variables.
    #[arg(long)]
    task: TaskKind,
    /// Dataset id or exact name.
    #[arg(long)]
    dataset: String,
    #[arg(long, default_value = "dv")]
    mode: CompositionMode,
    /// Retrieval depth.
    #[arg(long)]
    n: Option<usize>,
    /// Send the retrieved context to the LLM and resolve its answer.
    #[arg(long)]
    use_llm: bool,
    /// Category tag for source classification (defaults to any shared tag).
    #[arg(long)]
    category: Option<String>,
    /// One JSON record per result line.
    #[arg(long)]
    json: bool,
}

pub fn query(args: QueryArgs, file: &FileConfig) -> Result<(), CliError> {
    let dir = index_dir(&args.index_dir, file, true)?;
    let catalog = args.catalog.load(file)?;
    let dataset_id = catalog
        .get(&args.dataset)
        .or_else(|| catalog.find_by_name(&args.dataset))
        .map(|m| m.id.clone())
        .ok_or_else(|| CliError::usage(format!("unknown dataset `{}`", args.dataset)))?;
    let provider = args.provider.build(file)?;
    let llm = if args.use_llm { args.llm.build(file)? } else { None };
    if args.use_llm && llm.is_none() {
        return Err(CliError::usage("--use-llm needs an LLM (--llm scripted or remote)"));
    }
    let indices = load_indices(&catalog, &*provider, &[args.mode], dir.as_deref())?;
    let state = AppState::new(catalog, indices, provider, llm);
    let request = QueryRequest {
        task: args.task,
        dataset_id,
        mode: args.mode,
        n: Some(pick(&args.n, &file.n).unwrap_or(DEFAULT_N)),
        use_llm: args.use_llm,
        category: args.category,
    };
    match run_query(&state, request) {
        Ok(resp) => {
            print_query(&resp, &state.catalog, args.json);
            Ok(())
        }
        Err(e) => match e.body.partial {
            Some(partial) => {
                print_query(&partial, &state.catalog, args.json);
                Err(CliError::partial(e.body.message))
            }
            None => Err(CliError::usage(e.body.message)),
        },
    }
}

fn print_query(resp: &QueryResponse, catalog: &Catalog, json_lines: bool) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    if json_lines {
        for h in &resp.hits {
            let mut v = serde_json::to_value(h).expect("hit serializes");
            v["kind"] = json!("hit");
            let _ = writeln!(out, "{v}");
        }
        match &resp.outcome {
            Some(OutcomeView::Recommendation { entries, .. }) => {
                for e in entries {
                    let mut v = serde_json::to_value(e).expect("entry serializes");
                    v["kind"] = json!("recommendation");
                    let _ = writeln!(out, "{v}");
                }
            }
            Some(OutcomeView::Estimation { predicted, .. }) => {
                for (i, label) in predicted.iter().enumerate() {
                    let _ = writeln!(out, "{}", json!({"kind": "label", "rank": i + 1, "label": label}));
                }
            }
            None => {}
        }
        return;
    }

    let sample = catalog.get(&resp.dataset_id).map_or("", |m| m.name.as_str());
    let _ = writeln!(
        out,
        "{} for {} ({}), mode {}, provider {}",
        resp.task, sample, resp.dataset_id, resp.mode, resp.provider_id
    );
    let _ = writeln!(
        out,
        "{:>4}  {:>7}  {:>5}  {:>6}  {:<20}  dataset",
        "rank", "score", "dice", "desc", "source"
    );
    for h in &resp.hits {
        let _ = writeln!(
            out,
            "{:>4}  {:>7.4}  {:>5.3}  {:>6}  {:<20}  {} ({})",
            h.rank,
            h.score,
            h.dice,
            h.description_similarity.map_or("-".into(), |d| format!("{d:.3}")),
            h.source.as_str(),
            h.name,
            h.dataset_id
        );
    }
    match &resp.outcome {
        Some(OutcomeView::Recommendation { entries, warnings, .. }) => {
            let _ = writeln!(out, "\nLLM recommendations:");
            for e in entries {
                let _ = writeln!(
                    out,
                    "{:>4}  {:<20}  {}{}",
                    e.rank,
                    e.source.as_str(),
                    e.name.as_deref().unwrap_or(&e.raw_name),
                    e.resolved_id.as_deref().map_or(String::new(), |id| format!(" ({id})"))
                );
            }
            for w in warnings {
                let _ = writeln!(out, "warning: {w}");
            }
        }
        Some(OutcomeView::Estimation {
            predicted,
            candidates,
            warnings,
            ..
        }) => {
            let _ = writeln!(out, "\ncandidates ({}): {}", candidates.len(), candidates.join(", "));
            let _ = writeln!(out, "LLM estimate ({}): {}", predicted.len(), predicted.join(", "));
            for w in warnings {
                let _ = writeln!(out, "warning: {w}");
            }
        }
        None => {}
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    llm: LlmArgs,
    /// Directory with index files; missing indices are built in memory.
    #[arg(long)]
    index_dir: Option<PathBuf>,
    /// Tasks to run (1-4 or names).
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    tasks: Vec<TaskKind>,
    /// Composition modes to run.
    #[arg(long, value_delimiter = ',', default_value = "d,v,dv")]
    modes: Vec<CompositionMode>,
    /// Retrieval depth.
    #[arg(long)]
    n: Option<usize>,
    /// Category tags to sample from.
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<String>>,
    /// Samples per category.
    #[arg(long, default_value_t = DEFAULT_PER_CATEGORY)]
    per_category: usize,
    /// Explicit samples: JSONL `{"category": .., "dataset": id or name}`.
    #[arg(long)]
    samples: Option<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Cells evaluated concurrently.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Append every prompt and response to this JSONL file.
    #[arg(long)]
    run_log: Option<PathBuf>,
    /// Resolve LLM names by edit distance at this similarity (0-1).
    #[arg(long)]
    fuzzy: Option<f64>,
}

pub fn evaluate(args: EvaluateArgs, file: &FileConfig) -> Result<(), CliError> {
    let out_dir = pick(&args.out, &file.report_dir)
        .ok_or_else(|| CliError::usage("no report directory (--out or `report_dir` in the config file)"))?;
    let dir = index_dir(&args.index_dir, file, true)?;
    if args.tasks.is_empty() || args.modes.is_empty() {
        return Err(CliError::usage("--tasks and --modes must not be empty"));
    }
    let catalog = args.catalog.load(file)?;
    let seed = args.provider.seed(file);
    let plan = match &args.samples {
        Some(path) => SamplePlan::open_override(path, &catalog)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?,
        None => {
            let categories = match &args.categories {
                Some(c) => c.iter().map(CategoryLabel::new).collect(),
                None => default_categories(),
            };
            select_samples(&catalog, &categories, args.per_category, seed).map_err(CliError::fatal)?
        }
    };
    let provider = args.provider.build(file)?;
    let llm = args
        .llm
        .build(file)?
        .ok_or_else(|| CliError::usage("evaluate needs an LLM (--llm scripted or remote)"))?;
    let modes = dedup(args.modes);
    let indices = load_indices(&catalog, &*provider, &modes, dir.as_deref())?;
    let run_log = pick(&args.run_log, &file.run_log).map(|p| open_log(&p)).transpose()?;
    let config = ExperimentConfig {
        tasks: dedup(args.tasks),
        modes,
        n: pick(&args.n, &file.n).unwrap_or(DEFAULT_N),
        parallelism: pick(&args.parallelism, &file.parallelism).unwrap_or(4),
        resolve: ResolveOptions {
            fuzzy_threshold: args.fuzzy,
        },
    };
    let ctx = Experiment {
        catalog: &catalog,
        indices: &indices,
        provider: &*provider,
        llm: &*llm,
        run_log: run_log.as_ref(),
    };
    let report = run_experiment(&ctx, &plan, &config).map_err(CliError::fatal)?;
    report.write_dir(&out_dir).map_err(CliError::fatal)?;
    print!("{}", report.summary_text());
    println!("report written to {}", out_dir.display());
    let failed = report.failed_cells();
    if failed > 0 {
        return Err(CliError::partial(format!("{failed} of {} cells failed", report.cells.len())));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    catalog: CatalogArgs,
    #[command(flatten)]
    provider: ProviderArgs,
    #[command(flatten)]
    llm: LlmArgs,
    /// Directory with index files; missing indices are built in memory.
    #[arg(long)]
    index_dir: Option<PathBuf>,
    /// Modes to serve.
    #[arg(long, value_delimiter = ',', default_value = "d,v,dv")]
    modes: Vec<CompositionMode>,
    /// Listen address.
    #[arg(long, env = "SCOUT_ADDR")]
    addr: Option<String>,
    /// Browser origin allowed by CORS (`*` for any).
    #[arg(long)]
    cors_origin: Option<String>,
    /// Concurrent pipeline calls.
    #[arg(long)]
    max_inflight: Option<usize>,
    /// Append every prompt and response to this JSONL file.
    #[arg(long)]
    run_log: Option<PathBuf>,
}

pub fn serve(args: ServeArgs, file: &FileConfig) -> Result<(), CliError> {
    let addr_text = pick(&args.addr, &file.addr).unwrap_or_else(|| DEFAULT_ADDR.to_string());
    let addr: SocketAddr = addr_text
        .parse()
        .map_err(|e| CliError::usage(format!("invalid address `{addr_text}`: {e}")))?;
    let dir = index_dir(&args.index_dir, file, true)?;
    let catalog = args.catalog.load(file)?;
    let provider = args.provider.build(file)?;
    let llm = args.llm.build(file)?;
    let indices = load_indices(&catalog, &*provider, &dedup(args.modes), dir.as_deref())?;
    let mut state = AppState::new(catalog, indices, Arc::clone(&provider), llm)
        .with_max_inflight(pick(&args.max_inflight, &file.max_inflight).unwrap_or(8));
    if let Some(p) = pick(&args.run_log, &file.run_log) {
        state = state.with_run_log(open_log(&p)?);
    }
    let config = ServerConfig {
        cors_origin: pick(&args.cors_origin, &file.cors_origin),
    };
    let app = scout_server::router(state, &config);
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::fatal)?;
    eprintln!("serving on http://{addr}");
    runtime
        .block_on(scout_server::serve(addr, app))
        .map_err(|e| CliError::usage(format!("cannot serve on {addr}: {e}")))
}

fn open_log(path: &Path) -> Result<RunLog, CliError> {
    RunLog::append(path).map_err(|e| CliError::usage(format!("cannot open {}: {e}", path.display())))
}
