//! File-to-file pipeline stages behind the `rank-brittle` subcommands.
//!
//! Every stage reads and validates all of its inputs and computes all of its
//! outputs in memory before the first file is written, then writes its
//! artifacts plus a single `manifest.json` into the output directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::parse_kv;
use crate::embedstore::{
    load_store, normalize, read_jsonl, read_originals, EmbeddingStore, JsonlError, QueryRecord, StoreError,
};
use crate::metrics::{evaluate_with, CorpusRanker, MetricsConfig, MetricsError, MetricsRecord, PrecomputedRankings, LOG_BASE};
use crate::perturb::{
    generate_suite, ingest_suite, parse_stopwords, IngestError, PerturbError, PerturbationType, Perturber, TagTable,
    STOPWORDS_VERSION,
};
use crate::ranker::{rank_batch, RankError};
use crate::stats::{
    csv_field,    brittleness_heatmap, fit_fixed_effects, scatter_by_record, scatter_to_csv, summarize, Factor, Response, StatsError,
};
use crate::table::{self, TableError};

pub const MANIFEST: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Perturb(#[from] PerturbError),
    #[error(transparent)]
    Rank(#[from] RankError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{0}")]
    Invalid(String),
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&fs::read(path).map_err(io(path))?))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Provenance record written once per output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite_seed: Option<u64>,
    pub log_base: String,
    pub warnings: Vec<String>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    fn new(subcommand: &str, config: serde_json::Value) -> Self {
        Self {
            tool_version: TOOL_VERSION.to_owned(),
            subcommand: subcommand.to_owned(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            suite_seed: None,
            log_base: LOG_BASE.to_owned(),
            warnings: Vec::new(),
            started_at: now(),
            finished_at: String::new(),
        }
    }

    fn input(&mut self, path: &Path) -> Result<(), PipelineError> {
        self.inputs.push(FileHash {
            path: path.display().to_string(),
            sha256: hash_file(path)?,
        });
        Ok(())
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// In-memory artifacts of one stage, flushed together.
struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn new() -> Self {
        Self { files: Vec::new() }
    }

    fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_owned(), bytes.into()));
    }

    fn write(self, out_dir: &Path, mut manifest: RunManifest) -> Result<RunManifest, PipelineError> {
        fs::create_dir_all(out_dir).map_err(io(out_dir))?;
        for (name, bytes) in &self.files {
            manifest.outputs.push(FileHash {
                path: name.clone(),
                sha256: sha256_hex(bytes),
            });
            let path = out_dir.join(name);
            fs::write(&path, bytes).map_err(io(&path))?;
        }
        manifest.finished_at = now();
        let path = out_dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest") + "\n";
        fs::write(&path, text).map_err(io(&path))?;
        Ok(manifest)
    }
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, PipelineError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io(&path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))
}

/// Reads a `key=value` config file.
pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    parse_kv(&text).map_err(|e| PipelineError::Invalid(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone)]
pub struct PerturbArgs {
    pub queries: PathBuf,
    pub types: Vec<PerturbationType>,
    pub seed: u64,
    pub tags: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub out_dir: PathBuf,
}

pub const SUITE_FILE: &str = "suite.jsonl";
pub const NOOPS_FILE: &str = "noops.jsonl";

/// Generates a perturbation suite. No-ops are written to `noops.jsonl` and
/// counted as warnings.
pub fn run_perturb(args: &PerturbArgs) -> Result<RunManifest, PipelineError> {
    let originals = read_originals(&args.queries)?;
    let tags = args.tags.as_deref().map(TagTable::load).transpose()?;
    let mut perturber = Perturber::default();
    let mut stopword_source = STOPWORDS_VERSION.to_owned();
    if let Some(path) = &args.stopwords {
        let text = fs::read_to_string(path).map_err(io(path))?;
        perturber = perturber.with_stopwords(parse_stopwords(&text));
        stopword_source = path.display().to_string();
    }
    let out = generate_suite(&perturber, &originals, &args.types, args.seed, tags.as_ref())?;

    let mut manifest = RunManifest::new(
        "perturb",
        serde_json::json!({
            "types": args.types.iter().map(|t| t.name()).collect::<Vec<_>>(),
            "stopwords": stopword_source,
            "provenance": out.suite.provenance,
        }),
    );
    manifest.suite_seed = Some(args.seed);
    manifest.input(&args.queries)?;
    for p in args.tags.iter().chain(&args.stopwords) {
        manifest.input(p)?;
    }
    manifest.warnings = out
        .no_ops
        .iter()
        .map(|m| format!("{} / {}: {}", m.parent_id, m.perturbation_type, m.reason))
        .collect();
    let mut art = Artifacts::new();
    art.add(SUITE_FILE, out.suite.to_jsonl());
    art.add(NOOPS_FILE, crate::embedstore::to_jsonl(&out.no_ops));
    art.write(&args.out_dir, manifest)
}

#[derive(Debug, Clone)]
pub struct RankArgs {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub k: usize,
    pub depth: Option<usize>,
    pub out_dir: PathBuf,
}

pub const RANKINGS_FILE: &str = "rankings.jsonl";

/// Loads a corpus, normalizing it when the file is not flagged as normalized.
pub fn load_corpus(path: &Path) -> Result<(EmbeddingStore, bool), PipelineError> {
    let store = load_store(path)?;
    if store.is_normalized() {
        Ok((store, false))
    } else {
        Ok((normalize(&store)?, true))
    }
}

pub fn run_rank(args: &RankArgs) -> Result<RunManifest, PipelineError> {
    if let Some(depth) = args.depth {
        if depth > args.k {
            return Err(PipelineError::Invalid(format!(
                "depth {depth} exceeds k {}; rankings would be {} items short",
                args.k,
                depth - args.k
            )));
        }
    }
    let (corpus, renormalized) = load_corpus(&args.corpus)?;
    let queries = load_store(&args.queries)?;
    let lists = rank_batch(&corpus, &queries, args.k)?;
    let mut manifest = RunManifest::new(
        "rank",
        serde_json::json!({
            "k": args.k,
            "depth": args.depth.unwrap_or(args.k),
            "corpus_normalized_on_load": renormalized,
            "corpus_size": corpus.len(),
        }),
    );
    if args.k > corpus.len() {
        manifest.warnings.push(format!(
            "k = {} exceeds corpus size {}; lists truncated to {}",
            args.k,
            corpus.len(),
            corpus.len()
        ));
    }
    manifest.input(&args.corpus)?;
    manifest.input(&args.queries)?;
    let mut art = Artifacts::new();
    art.add(RANKINGS_FILE, table::rankings_to_jsonl(&lists));
    art.write(&args.out_dir, manifest)
}

#[derive(Debug, Clone)]
pub enum RankingInput {
    Corpus(PathBuf),
    Rankings(PathBuf),
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub rankings: RankingInput,
    pub originals_emb: PathBuf,
    pub originals_jsonl: PathBuf,
    pub perturbed_emb: PathBuf,
    pub suite: PathBuf,
    pub cfg: MetricsConfig,
    pub model_id: String,
    pub out_dir: PathBuf,
}

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSONL: &str = "metrics.jsonl";

pub fn evaluate_files(args: &EvaluateArgs) -> Result<(Vec<MetricsRecord>, RunManifest), PipelineError> {
    args.cfg.validate()?;
    let originals = read_originals(&args.originals_jsonl)?;
    let suite = ingest_suite(&args.suite, &originals, "suite-file")?;
    let orig_emb = load_store(&args.originals_emb)?;
    let pert_emb = load_store(&args.perturbed_emb)?;
    let listed: HashSet<&str> = originals.iter().map(|o| o.query_id.as_str()).collect();
    let stored: HashSet<&str> = orig_emb.ids().iter().map(String::as_str).collect();
    if listed != stored {
        let mut missing: Vec<&&str> = listed.symmetric_difference(&stored).collect();
        missing.sort();
        return Err(PipelineError::Invalid(format!(
            "original query ids in {} and {} differ: {missing:?}",
            args.originals_jsonl.display(),
            args.originals_emb.display()
        )));
    }
    let mut manifest_cfg = serde_json::to_value(&args.cfg).expect("serializable config");
    let records = match &args.rankings {
        RankingInput::Corpus(path) => {
            let (corpus, renormalized) = load_corpus(path)?;
            manifest_cfg["corpus_normalized_on_load"] = renormalized.into();
            evaluate_with(&CorpusRanker(&corpus), &orig_emb, &pert_emb, &suite, &args.cfg, &args.model_id)?
        }
        RankingInput::Rankings(path) => {
            let lists = table::read_rankings(path)?;
            let map: HashMap<String, _> = lists.into_iter().map(|l| (l.query_id.clone(), l)).collect();
            evaluate_with(&PrecomputedRankings(map), &orig_emb, &pert_emb, &suite, &args.cfg, &args.model_id)?
        }
    };
    manifest_cfg["model_id"] = args.model_id.clone().into();
    let mut manifest = RunManifest::new("evaluate", manifest_cfg);
    for p in [
        match &args.rankings {
            RankingInput::Corpus(p) | RankingInput::Rankings(p) => p,
        },
        &args.originals_emb,
        &args.originals_jsonl,
        &args.perturbed_emb,
        &args.suite,
    ] {
        manifest.input(p)?;
    }
    Ok((records, manifest))
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<RunManifest, PipelineError> {
    let (records, manifest) = evaluate_files(args)?;
    let mut art = Artifacts::new();
    art.add(METRICS_CSV, table::metrics_to_csv(&records, &args.cfg.overlap_ks));
    art.add(METRICS_JSONL, table::metrics_to_jsonl(&records));
    art.write(&args.out_dir, manifest)
}

#[derive(Debug, Clone)]
pub struct ReportArgs {
    pub metrics: Vec<PathBuf>,
    pub group_by: Vec<Factor>,
    pub out_dir: PathBuf,
}

pub const REPORT_FILES: [&str; 7] = [
    "summary.csv",
    "regression.json",
    "scatter.csv",
    "heatmap.csv",
    "heatmap_long.csv",
    "overlap.csv",
    "long.csv",
];

/// Mean overlap@k per (model, perturbation type, k).
pub fn overlap_curves(records: &[MetricsRecord]) -> String {
    let mut groups: BTreeMap<(&str, &str, usize), Vec<f64>> = BTreeMap::new();
    for r in records {
        for (&k, &v) in &r.overlap_at_k {
            groups
                .entry((&r.model_id, &r.perturbation_type, k))
                .or_default()
                .push(v);
        }
    }
    let mut out = String::from("model_id,perturbation_type,k,mean_overlap,count\n");
    for ((m, t, k), v) in groups {
        out.push_str(&format!(
            "{},{},{k},{},{}\n",
            csv_field(m),
            csv_field(t),
            crate::stats::ordered_mean(&v),
            v.len()
        ));
    }
    out
}

pub fn run_report(args: &ReportArgs) -> Result<RunManifest, PipelineError> {
    if args.metrics.is_empty() {
        return Err(PipelineError::Invalid("no metrics files given".into()));
    }
    let mut records = Vec::new();
    for path in &args.metrics {
        records.extend(table::read_metrics(path)?);
    }
    records.sort_by(|a, b| {
        (&a.model_id, &a.parent_id, &a.perturbation_type, &a.query_id).cmp(&(
            &b.model_id,
            &b.parent_id,
            &b.perturbation_type,
            &b.query_id,
        ))
    });
    let summary = summarize(&records, &args.group_by)?;
    let inst = fit_fixed_effects(&records, Response::Instability)?;
    let brit = fit_fixed_effects(&records, Response::Brittleness)?;
    let scatter = scatter_by_record(&records)?;
    let heatmap = brittleness_heatmap(&records)?;

    let regression = serde_json::json!({
        "model": "fixed-effects OLS: response ~ 1 + model_id + perturbation_class",
        "log_base": LOG_BASE,
        "instability": inst,
        "brittleness": brit,
    });
    let mut manifest = RunManifest::new(
        "report",
        serde_json::json!({ "group_by": args.group_by.iter().map(|f| f.name()).collect::<Vec<_>>() }),
    );
    for p in &args.metrics {
        manifest.input(p)?;
    }
    if heatmap.missing_cells() > 0 {
        manifest
            .warnings
            .push(format!("{} heatmap cell(s) have no records", heatmap.missing_cells()));
    }
    let mut art = Artifacts::new();
    art.add("summary.csv", summary.to_csv());
    art.add(
        "regression.json",
        serde_json::to_string_pretty(&regression).expect("serializable") + "\n",
    );
    art.add("scatter.csv", scatter_to_csv(&scatter));
    art.add("heatmap.csv", heatmap.to_csv());
    art.add("heatmap_long.csv", heatmap.to_long_csv());
    art.add("overlap.csv", overlap_curves(&records));
    art.add("long.csv", table::metrics_to_csv(&records, &table::overlap_ks(&records)));
    art.write(&args.out_dir, manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileKind {
    Embeddings,
    Queries,
    Suite,
    Tags,
    Rankings,
    Metrics,
}

impl std::str::FromStr for FileKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "emb" | "embeddings" => Self::Embeddings,
            "queries" => Self::Queries,
            "suite" => Self::Suite,
            "tags" => Self::Tags,
            "rankings" => Self::Rankings,
            "metrics" => Self::Metrics,
            _ => return Err(format!("unknown file kind {s:?}")),
        })
    }
}

/// Format checks only; returns a one-line description of the valid file.
pub fn validate_file(kind: FileKind, path: &Path, originals: Option<&Path>) -> Result<String, PipelineError> {
    Ok(match kind {
        FileKind::Embeddings => {
            let s = load_store(path)?;
            format!("{} rows, dim {}, normalized={}", s.len(), s.dim(), s.is_normalized())
        }
        FileKind::Queries => format!("{} original queries", read_originals(path)?.len()),
        FileKind::Suite => {
            let originals_path = originals.ok_or_else(|| {
                PipelineError::Invalid("suite validation needs the original queries (--originals)".into())
            })?;
            let originals: Vec<QueryRecord> = read_originals(originals_path)?;
            format!("{} perturbed records", ingest_suite(path, &originals, "validate")?.len())
        }
        FileKind::Tags => format!("{} tag entries", TagTable::load(path)?.len()),
        FileKind::Rankings => format!("{} rankings", table::read_rankings(path)?.len()),
        FileKind::Metrics => format!("{} metrics records", table::read_metrics(path)?.len()),
    })
}

/// Reads the JSONL suite written by [`run_perturb`].
pub fn read_suite_records(path: &Path) -> Result<Vec<QueryRecord>, PipelineError> {
    Ok(read_jsonl(path)?)
}
