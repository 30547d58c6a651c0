use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rank_brittle::config::parse_list;
use rank_brittle::pipeline::{
    self, EvaluateArgs, FileKind, PerturbArgs, RankArgs, RankingInput, ReportArgs, RunManifest,
};
use rank_brittle::ranker::DEFAULT_K;
use rank_brittle::stats::Factor;
use rank_brittle::{MetricsConfig, PerturbationType};

const THREADS_ENV: &str = "RANK_BRITTLE_THREADS";

/// Ranking brittleness of embedding retrievers under query perturbations.
#[derive(Parser)]
#[command(name = "rank-brittle", version)]
struct Cli {
    /// key=value file; explicit flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate lexical and syntactic variants of original queries.
    Perturb {
        #[arg(long)]
        queries: PathBuf,
        /// Comma-separated type names, or "all" for every built-in type.
        #[arg(long)]
        types: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// POS tag table (JSONL); required for noun-based types.
        #[arg(long)]
        tags: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact top-k retrieval of query embeddings against a corpus.
    Rank {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long)]
        k: Option<usize>,
        /// Depth later used for RBO; must not exceed k.
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Overlap, RBO, instability and brittleness for every perturbed query.
    Evaluate {
        #[arg(long, conflicts_with = "rankings", required_unless_present = "rankings")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        rankings: Option<PathBuf>,
        #[arg(long = "originals_emb", alias = "originals-emb")]
        originals_emb: PathBuf,
        #[arg(long)]
        originals: PathBuf,
        #[arg(long = "perturbed_emb", alias = "perturbed-emb")]
        perturbed_emb: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        #[arg(long = "model_id", alias = "model-id")]
        model_id: Option<String>,
        #[command(flatten)]
        metrics: MetricFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summaries, regressions, scatter and heatmap tables from metrics files.
    Report {
        #[arg(long, required = true, num_args = 1..)]
        metrics: Vec<PathBuf>,
        /// Comma-separated grouping factors.
        #[arg(long = "group_by", alias = "group-by")]
        group_by: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check that a file is well formed.
    Validate {
        /// emb, queries, suite, tags, rankings or metrics
        #[arg(long)]
        kind: String,
        path: PathBuf,
        /// Original queries, needed for suites.
        #[arg(long)]
        originals: Option<PathBuf>,
    },
}

#[derive(Args)]
struct MetricFlags {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long = "overlap_ks", alias = "overlap-ks")]
    overlap_ks: Option<String>,
    #[arg(long = "rbo_mode", alias = "rbo-mode")]
    rbo_mode: Option<String>,
    #[arg(long = "overlap_mode", alias = "overlap-mode")]
    overlap_mode: Option<String>,
    #[arg(long = "epsilon_intra", alias = "epsilon-intra")]
    epsilon_intra: Option<f64>,
    #[arg(long = "epsilon_instability", alias = "epsilon-instability")]
    epsilon_instability: Option<f64>,
}

impl MetricFlags {
    fn resolve(&self, file: &BTreeMap<String, String>) -> Result<MetricsConfig> {
        let mut cfg = MetricsConfig::default();
        cfg.apply(file).map_err(anyhow::Error::msg).context("config file")?;
        if let Some(v) = self.p {
            cfg.p = v;
        }
        if let Some(v) = self.depth {
            cfg.depth = v;
        }
        if let Some(v) = &self.overlap_ks {
            cfg.overlap_ks = parse_list(v).map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = &self.rbo_mode {
            cfg.rbo_mode = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = &self.overlap_mode {
            cfg.overlap_mode = v.parse().map_err(anyhow::Error::msg)?;
        }
        if let Some(v) = self.epsilon_intra {
            cfg.epsilon_intra = v;
        }
        if let Some(v) = self.epsilon_instability {
            cfg.epsilon_instability = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_types(s: &str) -> Result<Vec<PerturbationType>> {
    if s.trim() == "all" {
        return Ok(PerturbationType::builtin().collect());
    }
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(anyhow::Error::msg))
        .collect()
}

fn parse_factors(s: &str) -> Result<Vec<Factor>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<Factor>().map_err(Into::into))
        .collect()
}

/// Flag value, else config value, else default.
fn pick<T: std::str::FromStr>(flag: Option<T>, file: &BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(v);
    }
    match file.get(key) {
        Some(s) => s.parse().map_err(|e| anyhow::anyhow!("config {key}: {e}")),
        None => Ok(default),
    }
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?}"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool")?;
    }
    Ok(())
}

fn report(manifest: &RunManifest, out: &Path) {
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "{}: wrote {} file(s) to {}",
        manifest.subcommand,
        manifest.outputs.len() + 1,
        out.display()
    );
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let file = match &cli.config {
        Some(p) => pipeline::read_config(p)?,
        None => BTreeMap::new(),
    };
    match cli.cmd {
        Cmd::Perturb { queries, types, seed, tags, stopwords, out } => {
            let types = match types.or_else(|| file.get("types").cloned()) {
                Some(t) => parse_types(&t)?,
                None => PerturbationType::builtin().collect(),
            };
            if types.is_empty() {
                bail!("no perturbation types selected");
            }
            let args = PerturbArgs {
                queries,
                types,
                seed: pick(seed, &file, "seed", 0)?,
                tags: tags.or_else(|| file.get("tags").map(PathBuf::from)),
                stopwords: stopwords.or_else(|| file.get("stopwords").map(PathBuf::from)),
                out_dir: out,
            };
            report(&pipeline::run_perturb(&args)?, &args.out_dir);
        }
        Cmd::Rank { corpus, queries, k, depth, out } => {
            let args = RankArgs {
                corpus,
                queries,
                k: pick(k, &file, "k", DEFAULT_K)?,
                depth: match depth {
                    Some(d) => Some(d),
                    None => file.get("depth").map(|d| d.parse()).transpose()?,
                },
                out_dir: out,
            };
            if args.k == 0 {
                bail!("k must be at least 1");
            }
            report(&pipeline::run_rank(&args)?, &args.out_dir);
        }
        Cmd::Evaluate {
            corpus,
            rankings,
            originals_emb,
            originals,
            perturbed_emb,
            suite,
            model_id,
            metrics,
            out,
        } => {
            let rankings = match (corpus, rankings) {
                (Some(c), None) => RankingInput::Corpus(c),
                (None, Some(r)) => RankingInput::Rankings(r),
                _ => bail!("give exactly one of --corpus or --rankings"),
            };
            let args = EvaluateArgs {
                rankings,
                originals_emb,
                originals_jsonl: originals,
                perturbed_emb,
                suite,
                cfg: metrics.resolve(&file)?,
                model_id: pick(model_id, &file, "model_id", "model".to_owned())?,
                out_dir: out,
            };
            report(&pipeline::run_evaluate(&args)?, &args.out_dir);
        }
        Cmd::Report { metrics, group_by, out } => {
            let group_by = match group_by.or_else(|| file.get("group_by").cloned()) {
                Some(g) => parse_factors(&g)?,
                None => vec![Factor::ModelId, Factor::PerturbationType],
            };
            let args = ReportArgs { metrics, group_by, out_dir: out };
            report(&pipeline::run_report(&args)?, &args.out_dir);
        }
        Cmd::Validate { kind, path, originals } => {
            let kind: FileKind = kind.parse().map_err(anyhow::Error::msg)?;
            let desc = pipeline::validate_file(kind, &path, originals.as_deref())?;
            println!("ok: {}: {desc}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
