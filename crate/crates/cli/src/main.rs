//! `scgt`: ingest, resolve, consolidate, report and export ground-truth datasets.
//!
//! Every stage reads the previous stage's files under `--out` and writes its own:
//!
//! ```text
//! out/ingest/{Dataset}.assessments.jsonl   .report.json   .sources.jsonl
//! out/resolved/assessments.jsonl           resolve.report.json
//! out/store/assessments.jsonl              groups.jsonl
//! out/reports/{coverage,overlap,disagreements,ignored,variability,quality}.{csv,txt}
//! out/export/consolidated.{jsonl,csv}
//! out/run-meta.json                        timestamps of the last command
//! ```
//!
//! Diagnostics go to stderr. Stdout carries one JSON summary line.
//! Exit codes: 0 success, 1 validation error or missing prior stage, 2 I/O error.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use scgt::consolidate::{consolidate, read_jsonl, ConsolidatedStore};
use scgt::ingest::{canonicalize, ingest_dataset, load_manifest, merge_sources, DatasetManifest, IngestReport, SourceRecord};
use scgt::report::{self, ErrorsFixture, Table};
use scgt::resolve::{load_cache, resolve_all, save_cache, ChainCache};
use scgt::taxonomy::{map_all, MappingTable};
use scgt::{Assessment, ErrorKind};

#[derive(Parser, Debug)]
#[command(name = "scgt", version, about = "Consolidate smart-contract weakness ground-truth datasets")]
struct Cli {
    /// Dataset manifest (repeatable).
    #[arg(long = "manifest", global = true)]
    manifests: Vec<PathBuf>,
    /// Dataset root as NAME=PATH (repeatable). Defaults to the manifest's directory.
    #[arg(long = "root", global = true, value_parser = parse_root)]
    roots: Vec<(String, PathBuf)>,
    /// Chain cache (JSON Lines).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    /// Allow network lookups during `resolve`.
    #[arg(long, global = true)]
    online: bool,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Weakness mapping CSV. Defaults to the shipped table.
    #[arg(long, global = true)]
    mapping: Option<PathBuf>,
    /// Confirmed-error counts (dataset,swc_id,n_errors) for the quality report.
    #[arg(long = "errors-fixture", global = true)]
    errors_fixture: Option<PathBuf>,
    #[arg(long = "log-level", global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read datasets into canonical assessments.
    Ingest {
        /// Only this dataset (manifest name).
        dataset: Option<String>,
    },
    /// Complete contract identities from the chain cache.
    Resolve,
    /// Map weaknesses, mark duplicates and conflicts, build match groups.
    Consolidate,
    /// Write report tables.
    Report {
        #[arg(value_enum, default_value = "all")]
        which: Which,
    },
    /// Write the consolidated ground truth as flat rows.
    Export {
        #[arg(value_enum)]
        format: Format,
        /// Include ignored assessments.
        #[arg(long)]
        all: bool,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Which {
    All,
    Coverage,
    Overlap,
    Disagreements,
    Ignored,
    Variability,
    Quality,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Jsonl,
    Csv,
}

fn parse_root(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=PATH, got {s:?}")),
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn missing(path: &Path) -> Self {
        Failure::validation(format!("missing input {}", path.display()))
    }
}

impl From<scgt::Error> for Failure {
    fn from(e: scgt::Error) -> Self {
        Failure {
            code: if e.kind() == ErrorKind::Io { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

type Outcome = Result<Value, Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    }
}

/// Writes `bytes` to a temp file next to `path` and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(())
}

fn jsonl<T: serde::Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, &item).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn pretty<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

fn require(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::missing(path))
    }
}

struct Config {
    manifests: Vec<(DatasetManifest, PathBuf)>,
    cache: Option<PathBuf>,
    online: bool,
    out: PathBuf,
    mapping: Option<PathBuf>,
    errors_fixture: Option<PathBuf>,
}

impl Config {
    /// Checks every referenced path before any work starts.
    fn from_cli(cli: &Cli) -> Result<Self, Failure> {
        for p in cli.manifests.iter().chain(&cli.cache).chain(&cli.mapping).chain(&cli.errors_fixture) {
            require(p)?;
        }
        let roots: BTreeMap<&str, &PathBuf> = cli.roots.iter().map(|(n, p)| (n.as_str(), p)).collect();
        let mut manifests = Vec::new();
        for path in &cli.manifests {
            let m = load_manifest(path)?;
            let root = match roots.get(m.name.as_str()) {
                Some(r) => (*r).clone(),
                None => match path.parent() {
                    Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
                    _ => PathBuf::from("."),
                },
            };
            require(&root)?;
            manifests.push((m, root));
        }
        for name in roots.keys() {
            if !manifests.iter().any(|(m, _)| m.name == *name) {
                return Err(Failure::validation(format!("--root {name}: no manifest with that name")));
            }
        }
        Ok(Config {
            manifests,
            cache: cli.cache.clone(),
            online: cli.online,
            out: cli.out.clone(),
            mapping: cli.mapping.clone(),
            errors_fixture: cli.errors_fixture.clone(),
        })
    }

    fn dir(&self, stage: &str) -> PathBuf {
        self.out.join(stage)
    }
}

fn cmd_ingest(cfg: &Config, only: Option<&str>) -> Outcome {
    let selected: Vec<&(DatasetManifest, PathBuf)> =
        cfg.manifests.iter().filter(|(m, _)| only.is_none_or(|n| m.name == n)).collect();
    if selected.is_empty() {
        return Err(Failure::validation(match only {
            Some(n) => format!("no --manifest for dataset {n}"),
            None => "ingest needs at least one --manifest".to_string(),
        }));
    }
    let dir = cfg.dir("ingest");
    let results: Vec<Result<IngestReport, Failure>> = selected
        .par_iter()
        .map(|(manifest, root)| {
            let (entries, mut report) = ingest_dataset(manifest, root);
            let canonical = canonicalize(&entries)?;
            for w in canonical.warnings {
                report.warn(w);
            }
            let name = &manifest.name;
            write_atomic(&dir.join(format!("{name}.assessments.jsonl")), &jsonl(&canonical.assessments))?;
            write_atomic(&dir.join(format!("{name}.sources.jsonl")), &jsonl(&canonical.sources))?;
            write_atomic(&dir.join(format!("{name}.report.json")), &pretty(&report))?;
            Ok(report)
        })
        .collect();
    let mut summary = serde_json::Map::new();
    let mut incomplete = Vec::new();
    for r in results {
        let r = r?;
        if !r.errors.is_empty() {
            incomplete.push(r.dataset.clone());
        }
        summary.insert(
            r.dataset.clone(),
            json!({"entries": r.entries, "assessments": r.assessments, "warnings": r.warnings.len(), "errors": r.errors.len()}),
        );
    }
    if !incomplete.is_empty() {
        return Err(Failure {
            code: 2,
            message: format!("unreadable files in {}; see the ingest reports", incomplete.join(", ")),
        });
    }
    Ok(json!({"command": "ingest", "datasets": summary}))
}

/// Files in `dir` ending in `suffix`, sorted by name.
fn stage_files(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>, Failure> {
    require(dir)?;
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_failure(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix)))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::missing(&dir.join(format!("*{suffix}"))));
    }
    Ok(files)
}

fn cmd_resolve(cfg: &Config) -> Outcome {
    #[cfg(feature = "online")]
    let http_config = if cfg.online {
        Some(scgt::resolve::http::HttpConfig::from_env()?)
    } else {
        None
    };
    #[cfg(not(feature = "online"))]
    if cfg.online {
        return Err(Failure::validation("built without the online feature"));
    }

    let mut assessments: Vec<Assessment> = Vec::new();
    for f in stage_files(&cfg.dir("ingest"), ".assessments.jsonl")? {
        assessments.extend(read_jsonl::<Assessment>(&f)?);
    }
    let mut cache = match &cfg.cache {
        Some(p) => load_cache(p)?,
        None => {
            log::warn!("no --cache given; resolving against an empty cache");
            ChainCache::new()
        }
    };
    let snapshot = cache.clone();
    #[cfg(feature = "online")]
    let report = match http_config {
        Some(c) => {
            let mut source = scgt::resolve::http::HttpSource::new(c, &mut cache);
            let report = resolve_all(&mut assessments, &mut source, &snapshot)?;
            drop(source);
            if let Some(p) = &cfg.cache {
                save_cache(&cache, p)?;
            }
            report
        }
        None => resolve_all(&mut assessments, &mut cache, &snapshot)?,
    };
    #[cfg(not(feature = "online"))]
    let report = resolve_all(&mut assessments, &mut cache, &snapshot)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    scgt::model::sort_canonical(&mut assessments);
    let dir = cfg.dir("resolved");
    write_atomic(&dir.join("assessments.jsonl"), &jsonl(&assessments))?;
    write_atomic(&dir.join("resolve.report.json"), &pretty(&report))?;
    Ok(json!({"command": "resolve", "assessments": assessments.len(), "identities": report.identities, "outcomes": report.outcomes}))
}

fn mapping(cfg: &Config) -> Result<MappingTable, Failure> {
    Ok(match &cfg.mapping {
        Some(p) => MappingTable::load(p)?,
        None => MappingTable::shipped(),
    })
}

fn store_paths(cfg: &Config) -> (PathBuf, PathBuf) {
    let dir = cfg.dir("store");
    (dir.join("assessments.jsonl"), dir.join("groups.jsonl"))
}

fn counts(store: &ConsolidatedStore) -> Value {
    let b = report::ignored_breakdown(store);
    let per: BTreeMap<&String, Value> = b
        .datasets
        .iter()
        .map(|d| (d, json!({"retained": b.retained[d], "ignored": b.ignored[d]})))
        .collect();
    json!({
        "assessments": store.assessments.len(),
        "retained": b.retained.values().sum::<usize>(),
        "ignored": b.ignored.values().sum::<usize>(),
        "groups": store.groups.len(),
        "datasets": per,
    })
}

fn cmd_consolidate(cfg: &Config) -> Outcome {
    let input = cfg.dir("resolved").join("assessments.jsonl");
    require(&input)?;
    let mut assessments: Vec<Assessment> = read_jsonl(&input)?;
    map_all(&mut assessments, &mapping(cfg)?)?;
    let store = consolidate(assessments)?;
    let (mut a, mut g) = (Vec::new(), Vec::new());
    store.write_jsonl(&mut a, &mut g)?;
    let (ap, gp) = store_paths(cfg);
    write_atomic(&ap, &a)?;
    write_atomic(&gp, &g)?;
    let mut summary = counts(&store);
    summary["command"] = "consolidate".into();
    Ok(summary)
}

fn load_store(cfg: &Config) -> Result<ConsolidatedStore, Failure> {
    let (ap, gp) = store_paths(cfg);
    require(&ap)?;
    require(&gp)?;
    Ok(ConsolidatedStore::load(&ap, &gp)?)
}

fn write_table(dir: &Path, name: &str, t: &Table) -> Result<(), Failure> {
    write_atomic(&dir.join(format!("{name}.csv")), t.to_csv().as_bytes())?;
    write_atomic(&dir.join(format!("{name}.txt")), t.to_text().as_bytes())
}

fn cmd_report(cfg: &Config, which: Which) -> Outcome {
    let store = load_store(cfg)?;
    let dir = cfg.dir("reports");
    let wants = |w: Which| which == Which::All || which == w;
    let mut written = Vec::new();
    if wants(Which::Coverage) {
        write_table(&dir, "coverage", &report::coverage_report(&report::coverage_table(&store)))?;
        written.push("coverage");
    }
    if wants(Which::Overlap) {
        write_table(&dir, "overlap", &report::overlap_report(&report::overlap_matrix(&store)))?;
        written.push("overlap");
    }
    if wants(Which::Disagreements) {
        write_table(&dir, "disagreements", &report::disagreement_report(&report::disagreement_table(&store)))?;
        written.push("disagreements");
    }
    if wants(Which::Ignored) {
        write_table(&dir, "ignored", &report::ignored_report(&report::ignored_breakdown(&store)))?;
        written.push("ignored");
    }
    if wants(Which::Variability) {
        let mut sources: Vec<SourceRecord> = Vec::new();
        for f in stage_files(&cfg.dir("ingest"), ".sources.jsonl")? {
            sources.extend(read_jsonl::<SourceRecord>(&f)?);
        }
        let stats = report::variability_stats(&store, &merge_sources(sources));
        write_table(&dir, "variability", &report::variability_report(&stats))?;
        written.push("variability");
    }
    if wants(Which::Quality) {
        let mut profiles = BTreeMap::new();
        for f in stage_files(&cfg.dir("ingest"), ".report.json")? {
            let text = std::fs::read_to_string(&f).map_err(|e| io_failure(&f, e))?;
            let r: IngestReport = serde_json::from_str(&text).map_err(|e| Failure::validation(format!("{}: {e}", f.display())))?;
            profiles.insert(r.dataset, r.content);
        }
        let errors = match &cfg.errors_fixture {
            Some(p) => ErrorsFixture::load(p)?,
            None => {
                log::warn!("no --errors-fixture given; consistency assumes no confirmed errors");
                ErrorsFixture::default()
            }
        };
        let scores = report::quality_scores(&report::quality_inputs(&store, &profiles, &errors));
        write_table(&dir, "quality", &report::quality_report(&scores))?;
        written.push("quality");
    }
    Ok(json!({"command": "report", "written": written}))
}

const EXPORT_COLUMNS: [&str; 16] = [
    "id", "dataset", "entry_id", "property_label", "judgment", "swc_id", "dasp_id", "address", "chain",
    "contract_name", "source_fp", "deploy_fp", "runtime_fp", "ignored", "ignore_reason", "group_id",
];

fn flat(a: &Assessment, group: Option<u32>) -> Vec<Value> {
    let c = &a.contract;
    let s = |v: Option<String>| v.map(Value::from).unwrap_or(Value::Null);
    vec![
        a.id.clone().into(),
        a.dataset.clone().into(),
        a.entry_id.clone().into(),
        a.property_label.clone().into(),
        serde_json::to_value(a.judgment).expect("serializable"),
        a.swc_id.map(Value::from).unwrap_or(Value::Null),
        a.dasp_id.map(Value::from).unwrap_or(Value::Null),
        s(c.address.map(|x| x.to_string())),
        s(c.chain.map(|x| x.as_str().to_string())),
        s(c.contract_name.clone()),
        s(c.source_fp.map(|x| x.to_string())),
        s(c.deploy_fp.map(|x| x.to_string())),
        s(c.runtime_fp.map(|x| x.to_string())),
        a.ignored.into(),
        s(a.ignore_reason.map(|r| r.as_str().to_string())),
        group.map(Value::from).unwrap_or(Value::Null),
    ]
}

fn cmd_export(cfg: &Config, format: Format, all: bool) -> Outcome {
    let store = load_store(cfg)?;
    let rows: Vec<Vec<Value>> = store
        .assessments
        .iter()
        .filter(|a| all || !a.ignored)
        .map(|a| flat(a, store.group_of(&a.id)))
        .collect();
    let dir = cfg.dir("export");
    let path = match format {
        Format::Jsonl => {
            let objects = rows.iter().map(|r| {
                EXPORT_COLUMNS
                    .iter()
                    .zip(r)
                    .map(|(k, v)| (k.to_string(), v.clone()))
                    .collect::<serde_json::Map<_, _>>()
            });
            let path = dir.join("consolidated.jsonl");
            write_atomic(&path, &jsonl(objects))?;
            path
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(EXPORT_COLUMNS).expect("in-memory write");
            for r in &rows {
                w.write_record(r.iter().map(|v| match v {
                    Value::Null => String::new(),
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                }))
                .expect("in-memory write");
            }
            let path = dir.join("consolidated.csv");
            write_atomic(&path, &w.into_inner().expect("in-memory write"))?;
            path
        }
    };
    Ok(json!({"command": "export", "rows": rows.len(), "path": path}))
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn run(cli: &Cli) -> Outcome {
    let cfg = Config::from_cli(cli)?;
    let started = now();
    let (name, summary) = match &cli.command {
        Command::Ingest { dataset } => ("ingest", cmd_ingest(&cfg, dataset.as_deref())?),
        Command::Resolve => ("resolve", cmd_resolve(&cfg)?),
        Command::Consolidate => ("consolidate", cmd_consolidate(&cfg)?),
        Command::Report { which } => ("report", cmd_report(&cfg, *which)?),
        Command::Export { format, all } => ("export", cmd_export(&cfg, *format, *all)?),
    };
    let meta = json!({"command": name, "started_unix": started, "finished_unix": now(), "version": env!("CARGO_PKG_VERSION")});
    write_atomic(&cfg.out.join("run-meta.json"), &pretty(&meta))?;
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            println!("{}", json!({"error": f.message, "exit": f.code}));
            ExitCode::from(f.code)
        }
    }
}
