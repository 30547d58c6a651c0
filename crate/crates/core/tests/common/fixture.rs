//! Two originals, three perturbation types, a ten-item corpus in four
//! dimensions, and two toy "models" that differ only in corpus geometry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rank_brittle::embedstore::{to_jsonl, write_store};
use rank_brittle::pipeline::{
    self, EvaluateArgs, PerturbArgs, RankArgs, RankingInput, ReportArgs, METRICS_CSV, RANKINGS_FILE, SUITE_FILE,
};
use rank_brittle::stats::Factor;
use rank_brittle::{EmbeddingStore, MetricsConfig, PerturbationType, QueryRecord, RboMode};

use super::{oracle_cosine, oracle_rbo};

pub const SEED: u64 = 2024;
pub const TYPES: [PerturbationType; 3] = [
    PerturbationType::Lowercase,
    PerturbationType::KeywordOnly,
    PerturbationType::WordShuffle,
];
pub const ORIGINALS: [(&str, &str); 2] = [("o1", "A Dog Runs On The Beach"), ("o2", "Red Car In The City")];

const CORPUS: [[f32; 4]; 10] = [
    [4.0, 1.0, 0.0, 0.0],
    [3.0, 2.0, 0.0, 0.0],
    [2.0, 3.0, 0.0, 0.0],
    [1.0, 4.0, 0.0, 0.0],
    [0.0, 4.0, 1.0, 0.0],
    [0.0, 0.0, 4.0, 1.0],
    [0.0, 0.0, 3.0, 2.0],
    [0.0, 0.0, 2.0, 3.0],
    [0.0, 0.0, 1.0, 4.0],
    [1.0, 0.0, 0.0, 4.0],
];

pub const MODELS: [&str; 2] = ["alpha", "beta"];

/// Query vectors keyed by query id. `o1::lowercase` coincides with its
/// parent, which exercises both floors.
pub fn query_vectors() -> BTreeMap<&'static str, [f32; 4]> {
    BTreeMap::from([
        ("o1", [1.0, 0.0, 0.0, 0.0]),
        ("o2", [0.0, 0.0, 1.0, 0.0]),
        ("o1::lowercase", [1.0, 0.0, 0.0, 0.0]),
        ("o1::keyword_only", [3.0, 1.0, 0.0, 0.0]),
        ("o1::word_shuffle", [2.0, 1.0, 1.0, 0.0]),
        ("o2::lowercase", [0.0, 0.5, 4.0, 0.0]),
        ("o2::keyword_only", [0.0, 0.0, 1.0, 1.0]),
        ("o2::word_shuffle", [1.0, 0.0, 1.0, 1.0]),
    ])
}

/// Corpus rows for a model; "beta" swaps the first two coordinates.
pub fn corpus_rows(model: &str) -> Vec<(String, Vec<f32>)> {
    CORPUS
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.to_vec();
            if model == "beta" {
                r.swap(0, 1);
            }
            (format!("c{i}"), r)
        })
        .collect()
}

pub fn config() -> MetricsConfig {
    MetricsConfig {
        p: 0.9,
        depth: 10,
        overlap_ks: vec![1, 3, 5, 10],
        ..MetricsConfig::default()
    }
}

pub struct Run {
    pub dir: PathBuf,
    pub suite: Vec<QueryRecord>,
}

impl Run {
    pub fn path(&self, parts: &[&str]) -> PathBuf {
        parts.iter().fold(self.dir.clone(), |p, s| p.join(s))
    }
}

fn store(rows: impl IntoIterator<Item = (String, Vec<f32>)>) -> EmbeddingStore {
    EmbeddingStore::from_rows(rows).unwrap()
}

/// perturb → (external embedding) → rank → evaluate → report, all through
/// the file-level pipeline entry points.
pub fn run_pipeline(dir: &Path) -> Run {
    let originals: Vec<QueryRecord> = ORIGINALS.iter().map(|(id, t)| QueryRecord::original(*id, *t)).collect();
    let queries = dir.join("queries.jsonl");
    fs::write(&queries, to_jsonl(&originals)).unwrap();
    pipeline::run_perturb(&PerturbArgs {
        queries: queries.clone(),
        types: TYPES.to_vec(),
        seed: SEED,
        tags: None,
        stopwords: None,
        out_dir: dir.join("perturb"),
    })
    .unwrap();
    let suite = pipeline::read_suite_records(&dir.join("perturb").join(SUITE_FILE)).unwrap();

    let vecs = query_vectors();
    let orig_emb = dir.join("orig.emb");
    let pert_emb = dir.join("pert.emb");
    let all_emb = dir.join("all.emb");
    let row = |id: &str| (id.to_owned(), vecs[id].to_vec());
    write_store(&store(ORIGINALS.iter().map(|(id, _)| row(id))), &orig_emb).unwrap();
    write_store(&store(suite.iter().map(|r| row(&r.query_id))), &pert_emb).unwrap();
    write_store(&store(vecs.keys().map(|id| row(id))), &all_emb).unwrap();

    let mut metrics = Vec::new();
    for model in MODELS {
        let corpus = dir.join(format!("{model}_corpus.emb"));
        write_store(&store(corpus_rows(model)), &corpus).unwrap();
        let rank_dir = dir.join(format!("{model}_rank"));
        pipeline::run_rank(&RankArgs {
            corpus,
            queries: all_emb.clone(),
            k: 10,
            depth: Some(10),
            out_dir: rank_dir.clone(),
        })
        .unwrap();
        let eval_dir = dir.join(format!("{model}_eval"));
        pipeline::run_evaluate(&EvaluateArgs {
            rankings: RankingInput::Rankings(rank_dir.join(RANKINGS_FILE)),
            originals_emb: orig_emb.clone(),
            originals_jsonl: queries.clone(),
            perturbed_emb: pert_emb.clone(),
            suite: dir.join("perturb").join(SUITE_FILE),
            cfg: config(),
            model_id: model.to_owned(),
            out_dir: eval_dir.clone(),
        })
        .unwrap();
        metrics.push(eval_dir.join(METRICS_CSV));
    }
    pipeline::run_report(&ReportArgs {
        metrics,
        group_by: vec![Factor::ModelId, Factor::PerturbationType],
        out_dir: dir.join("report"),
    })
    .unwrap();
    Run {
        dir: dir.to_path_buf(),
        suite,
    }
}

/// Expected metrics computed by brute force from the raw vectors.
#[derive(Debug, Clone)]
pub struct Expected {
    pub model: String,
    pub query_id: String,
    pub overlap: BTreeMap<usize, f64>,
    pub rbo: f64,
    pub intra: f64,
    pub inter: f64,
    pub brittleness: f64,
    pub intra_floored: bool,
    pub instability_floored: bool,
}

fn cos_rank(corpus: &[(String, Vec<f32>)], q: &[f32]) -> Vec<String> {
    let norm = |v: &[f32]| v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    let mut scored: Vec<(f64, &str)> = corpus
        .iter()
        .map(|(id, c)| {
            let d: f64 = c.iter().zip(q).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum();
            (d / (norm(c) * norm(q)), id.as_str())
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().map(|(_, id)| id.to_owned()).collect()
}

pub fn expected() -> Vec<Expected> {
    let cfg = config();
    let vecs = query_vectors();
    let inter = oracle_cosine(&vecs["o1"], &vecs["o2"]);
    let mut out = Vec::new();
    for model in MODELS {
        let corpus = corpus_rows(model);
        for (parent, _) in ORIGINALS {
            let a = cos_rank(&corpus, &vecs[parent]);
            for ty in TYPES {
                let id = format!("{parent}::{}", ty.name());
                let b = cos_rank(&corpus, &vecs[id.as_str()]);
                let overlap = cfg
                    .overlap_ks
                    .iter()
                    .map(|&k| {
                        let sa: BTreeSet<&String> = a[..k].iter().collect();
                        let n = b[..k].iter().filter(|x| sa.contains(x)).count();
                        (k, n as f64 / k as f64)
                    })
                    .collect();
                let ar: Vec<&str> = a.iter().map(String::as_str).collect();
                let br: Vec<&str> = b.iter().map(String::as_str).collect();
                let rbo = oracle_rbo(&ar, &br, cfg.p, cfg.depth, RboMode::Standard);
                let inst = 1.0 - rbo;
                let intra = oracle_cosine(&vecs[parent], &vecs[id.as_str()]);
                let brittleness =
                    (inst.max(cfg.epsilon_instability) * inter / intra.max(cfg.epsilon_intra)).ln();
                out.push(Expected {
                    model: model.to_owned(),
                    query_id: id,
                    overlap,
                    rbo,
                    intra,
                    inter,
                    brittleness,
                    intra_floored: intra < cfg.epsilon_intra,
                    instability_floored: inst < cfg.epsilon_instability,
                });
            }
        }
    }
    out
}

pub const GOLDEN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden");
pub const GOLDEN_FILES: [&str; 2] = ["long.csv", "summary.csv"];
