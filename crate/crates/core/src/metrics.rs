//! Rank-similarity and brittleness metrics.
//!
//! Two RBO variants are provided. `Standard` is truncated rank-biased overlap
//! with the residual weight `p^D` assigned to the agreement observed at depth
//! `D`, so identical rankings score exactly 1:
//!
//! ```text
//! rbo = (1-p) * sum_{d=1..D} p^(d-1) * |A_d ∩ B_d| / d  +  p^D * |A_D ∩ B_D| / D
//! ```
//!
//! `PaperLiteral` weights Jaccard agreement by `p^(k-1)/k` with no residual:
//!
//! ```text
//! rbo = (1-p) * sum_{k=1..D} (p^(k-1) / k) * |A_k ∩ B_k| / |A_k ∪ B_k|
//! ```
//!
//! Its maximum (identical lists) is far below 1; at p = 0.99 and D = 1000 it
//! is 0.0465168...

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedstore::{cosine_distance, mean_pairwise_distance, EmbeddingStore, PerturbationClass, StoreError};
use crate::perturb::PerturbationSuite;
use crate::ranker::{rank_topk_named, RankError, RankedList};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RboMode {
    Standard,
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    FractionOfK,
    Jaccard,
}

impl FromStr for RboMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Self::Standard),
            "paper_literal" => Ok(Self::PaperLiteral),
            _ => Err(format!("unknown rbo_mode {s:?} (standard | paper_literal)")),
        }
    }
}

impl FromStr for OverlapMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fraction_of_k" => Ok(Self::FractionOfK),
            "jaccard" => Ok(Self::Jaccard),
            _ => Err(format!("unknown overlap_mode {s:?} (fraction_of_k | jaccard)")),
        }
    }
}

impl fmt::Display for RboMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::PaperLiteral => "paper_literal",
        })
    }
}

impl fmt::Display for OverlapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FractionOfK => "fraction_of_k",
            Self::Jaccard => "jaccard",
        })
    }
}

/// Logarithm base of the brittleness index, recorded in every output header.
pub const LOG_BASE: &str = "e";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub p: f64,
    pub depth: usize,
    pub overlap_ks: Vec<usize>,
    pub rbo_mode: RboMode,
    pub overlap_mode: OverlapMode,
    pub epsilon_intra: f64,
    pub epsilon_instability: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            p: 0.99,
            depth: 1000,
            overlap_ks: vec![1, 5, 10, 25, 50, 100, 500, 1000],
            rbo_mode: RboMode::Standard,
            overlap_mode: OverlapMode::FractionOfK,
            epsilon_intra: 1e-6,
            epsilon_instability: 1e-9,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let bad = |m: String| Err(MetricsError::Config(m));
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad(format!("p must lie strictly between 0 and 1, got {}", self.p));
        }
        if self.depth == 0 {
            return bad("depth must be positive".into());
        }
        if self.overlap_ks.contains(&0) {
            return bad("overlap_ks must be positive".into());
        }
        if let Some(&max) = self.overlap_ks.iter().max() {
            if max > self.depth {
                return bad(format!("depth {} is smaller than overlap k {max}", self.depth));
            }
        }
        if !(self.epsilon_intra > 0.0 && self.epsilon_instability > 0.0) {
            return bad("epsilons must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid metrics config: {0}")]
    Config(String),
    #[error("overlap k = {k} exceeds list length {len}")]
    KExceedsList { k: usize, len: usize },
    #[error("ranking for {query_id:?} has {len} items, depth {depth} needs {deficit} more")]
    ListTooShort {
        query_id: String,
        len: usize,
        depth: usize,
        deficit: usize,
    },
    #[error("inter-query distance must be positive, got {0}")]
    NonPositiveInter(f64),
    #[error("missing embedding for {0:?}")]
    MissingEmbedding(String),
    #[error("missing ranking for {0:?}")]
    MissingRanking(String),
    #[error("suite record {0:?} has no parent")]
    NoParent(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Rank(#[from] RankError),
}

/// Counts `|A_d ∩ B_d|` for every prefix length `d = 1..=depth`.
fn prefix_overlaps(a: &[&str], b: &[&str], depth: usize) -> Vec<usize> {
    let mut seen_a = HashSet::with_capacity(depth);
    let mut seen_b = HashSet::with_capacity(depth);
    let mut overlap = 0;
    let mut out = Vec::with_capacity(depth);
    for d in 0..depth {
        let (x, y) = (a[d], b[d]);
        if x == y {
            overlap += 1;
        } else {
            overlap += usize::from(seen_b.contains(x)) + usize::from(seen_a.contains(y));
        }
        seen_a.insert(x);
        seen_b.insert(y);
        out.push(overlap);
    }
    out
}

fn overlap_ids(a: &[&str], b: &[&str], k: usize, mode: OverlapMode) -> Result<f64, MetricsError> {
    let len = a.len().min(b.len());
    if k == 0 || k > len {
        return Err(MetricsError::KExceedsList { k, len });
    }
    let sa: HashSet<&str> = a[..k].iter().copied().collect();
    let inter = b[..k].iter().filter(|x| sa.contains(*x)).count();
    Ok(match mode {
        OverlapMode::FractionOfK => inter as f64 / k as f64,
        OverlapMode::Jaccard => inter as f64 / (2 * k - inter) as f64,
    })
}

pub fn overlap_at_k(a: &RankedList, b: &RankedList, k: usize, mode: OverlapMode) -> Result<f64, MetricsError> {
    let a: Vec<&str> = a.ids().collect();
    let b: Vec<&str> = b.ids().collect();
    overlap_ids(&a, &b, k, mode)
}

/// RBO over raw id sequences. Both must hold at least `depth` items.
pub fn rbo_ids(a: &[&str], b: &[&str], p: f64, depth: usize, mode: RboMode) -> f64 {
    assert!(depth > 0 && a.len() >= depth && b.len() >= depth);
    let overlaps = prefix_overlaps(a, b, depth);
    match mode {
        RboMode::Standard => {
            // Accumulating the weight mass alongside the weighted agreement and
            // dividing makes identical lists come out at exactly 1.0.
            let mut weighted = 0.0;
            let mut mass = 0.0;
            let mut pw = 1.0;
            for (i, &x) in overlaps.iter().enumerate() {
                let w = (1.0 - p) * pw;
                weighted += w * (x as f64 / (i + 1) as f64);
                mass += w;
                pw *= p;
            }
            let tail = overlaps[depth - 1] as f64 / depth as f64;
            weighted += pw * tail;
            mass += pw;
            (weighted / mass).clamp(0.0, 1.0)
        }
        RboMode::PaperLiteral => {
            let mut sum = 0.0;
            let mut pw = 1.0;
            for (i, &x) in overlaps.iter().enumerate() {
                let k = i + 1;
                let jaccard = x as f64 / (2 * k - x) as f64;
                sum += pw / k as f64 * jaccard;
                pw *= p;
            }
            (1.0 - p) * sum
        }
    }
}

fn check_depth(list: &RankedList, depth: usize) -> Result<(), MetricsError> {
    if list.len() < depth {
        return Err(MetricsError::ListTooShort {
            query_id: list.query_id.clone(),
            len: list.len(),
            depth,
            deficit: depth - list.len(),
        });
    }
    Ok(())
}

pub fn rbo(a: &RankedList, b: &RankedList, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    check_depth(a, cfg.depth)?;
    check_depth(b, cfg.depth)?;
    let a: Vec<&str> = a.ids().collect();
    let b: Vec<&str> = b.ids().collect();
    Ok(rbo_ids(&a, &b, cfg.p, cfg.depth, cfg.rbo_mode))
}

pub fn instability(a: &RankedList, b: &RankedList, cfg: &MetricsConfig) -> Result<f64, MetricsError> {
    Ok(1.0 - rbo(a, b, cfg)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Flags {
    pub intra_floored: bool,
    pub instability_floored: bool,
}

impl fmt::Display for Flags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.intra_floored {
            parts.push("intra_floored");
        }
        if self.instability_floored {
            parts.push("instability_floored");
        }
        f.write_str(&parts.join("|"))
    }
}

impl FromStr for Flags {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut flags = Flags::default();
        for part in s.split('|').filter(|p| !p.is_empty()) {
            match part {
                "intra_floored" => flags.intra_floored = true,
                "instability_floored" => flags.instability_floored = true,
                other => return Err(format!("unknown flag {other:?}")),
            }
        }
        Ok(flags)
    }
}

impl Serialize for Flags {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Flags {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `ln(max(instability, eps) * inter / max(intra, eps))`.
pub fn brittleness(
    instability_val: f64,
    intra: f64,
    inter: f64,
    cfg: &MetricsConfig,
) -> Result<(f64, Flags), MetricsError> {
    if inter.is_nan() || inter <= 0.0 {
        return Err(MetricsError::NonPositiveInter(inter));
    }
    let flags = Flags {
        intra_floored: intra < cfg.epsilon_intra,
        instability_floored: instability_val < cfg.epsilon_instability,
    };
    let num = instability_val.max(cfg.epsilon_instability) * inter;
    Ok(((num / intra.max(cfg.epsilon_intra)).ln(), flags))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub model_id: String,
    pub query_id: String,
    pub parent_id: String,
    pub perturbation_class: PerturbationClass,
    pub perturbation_type: String,
    pub overlap_at_k: BTreeMap<usize, f64>,
    pub rbo: f64,
    pub instability: f64,
    pub intra_distance: f64,
    pub inter_distance: f64,
    pub brittleness: f64,
    pub flags: Flags,
}

/// Scores one (original, perturbed) ranking pair.
#[allow(clippy::too_many_arguments)]
pub fn score_pair(
    model_id: &str,
    record: &crate::embedstore::QueryRecord,
    parent_list: &RankedList,
    perturbed_list: &RankedList,
    intra: f64,
    inter: f64,
    cfg: &MetricsConfig,
) -> Result<MetricsRecord, MetricsError> {
    check_depth(parent_list, cfg.depth)?;
    check_depth(perturbed_list, cfg.depth)?;
    let a: Vec<&str> = parent_list.ids().take(cfg.depth).collect();
    let b: Vec<&str> = perturbed_list.ids().take(cfg.depth).collect();
    let overlap_at_k = cfg
        .overlap_ks
        .iter()
        .map(|&k| overlap_ids(&a, &b, k, cfg.overlap_mode).map(|v| (k, v)))
        .collect::<Result<_, _>>()?;
    let rbo = rbo_ids(&a, &b, cfg.p, cfg.depth, cfg.rbo_mode);
    let instability = 1.0 - rbo;
    let (brittleness, flags) = brittleness(instability, intra, inter, cfg)?;
    Ok(MetricsRecord {
        model_id: model_id.to_owned(),
        query_id: record.query_id.clone(),
        parent_id: record.parent_id.clone().unwrap_or_default(),
        perturbation_class: record.perturbation_class,
        perturbation_type: record.perturbation_type.clone(),
        overlap_at_k,
        rbo,
        instability,
        intra_distance: intra,
        inter_distance: inter,
        brittleness,
        flags,
    })
}

/// Source of rankings for [`evaluate_with`].
pub trait RankingSource: Sync {
    fn ranking(&self, query_id: &str, vector: &[f32], depth: usize) -> Result<RankedList, MetricsError>;
}

/// Ranks on demand against a normalized corpus.
pub struct CorpusRanker<'a>(pub &'a EmbeddingStore);

impl RankingSource for CorpusRanker<'_> {
    fn ranking(&self, query_id: &str, vector: &[f32], depth: usize) -> Result<RankedList, MetricsError> {
        let list = rank_topk_named(self.0, query_id, vector, depth)?;
        check_depth(&list, depth)?;
        Ok(list)
    }
}

/// Precomputed rankings keyed by query id.
pub struct PrecomputedRankings(pub HashMap<String, RankedList>);

impl RankingSource for PrecomputedRankings {
    fn ranking(&self, query_id: &str, _vector: &[f32], depth: usize) -> Result<RankedList, MetricsError> {
        let list = self
            .0
            .get(query_id)
            .ok_or_else(|| MetricsError::MissingRanking(query_id.to_owned()))?;
        check_depth(list, depth)?;
        Ok(list.clone())
    }
}

/// One [`MetricsRecord`] per suite record, sorted by (parent_id, type).
pub fn evaluate(
    corpus: &EmbeddingStore,
    original_queries: &EmbeddingStore,
    perturbed_queries: &EmbeddingStore,
    suite: &PerturbationSuite,
    cfg: &MetricsConfig,
    model_id: &str,
) -> Result<Vec<MetricsRecord>, MetricsError> {
    if !corpus.is_normalized() {
        return Err(RankError::CorpusNotNormalized.into());
    }
    evaluate_with(&CorpusRanker(corpus), original_queries, perturbed_queries, suite, cfg, model_id)
}

pub fn evaluate_with(
    source: &dyn RankingSource,
    original_queries: &EmbeddingStore,
    perturbed_queries: &EmbeddingStore,
    suite: &PerturbationSuite,
    cfg: &MetricsConfig,
    model_id: &str,
) -> Result<Vec<MetricsRecord>, MetricsError> {
    cfg.validate()?;
    // resolve every reference before doing any work
    for r in &suite.records {
        let parent = r.parent_id.as_deref().ok_or_else(|| MetricsError::NoParent(r.query_id.clone()))?;
        if original_queries.get(parent).is_none() {
            return Err(MetricsError::MissingEmbedding(parent.to_owned()));
        }
        if perturbed_queries.get(&r.query_id).is_none() {
            return Err(MetricsError::MissingEmbedding(r.query_id.clone()));
        }
    }
    let inter = mean_pairwise_distance(original_queries, original_queries.ids())?;

    let mut parents: Vec<&str> = suite.records.iter().filter_map(|r| r.parent_id.as_deref()).collect();
    parents.sort_unstable();
    parents.dedup();
    let parent_lists: HashMap<&str, RankedList> = parents
        .into_iter()
        .map(|id| {
            let v = original_queries.get(id).expect("checked above");
            source.ranking(id, v, cfg.depth).map(|l| (id, l))
        })
        .collect::<Result<_, _>>()?;

    let one = |r: &crate::embedstore::QueryRecord| -> Result<MetricsRecord, MetricsError> {
        let parent = r.parent_id.as_deref().expect("checked above");
        let pv = original_queries.get(parent).expect("checked above");
        let qv = perturbed_queries.get(&r.query_id).expect("checked above");
        let list = source.ranking(&r.query_id, qv, cfg.depth)?;
        let intra = cosine_distance(pv, qv)?;
        score_pair(model_id, r, &parent_lists[parent], &list, intra, inter, cfg)
    };
    #[cfg(feature = "parallel")]
    let mut out: Vec<MetricsRecord> = {
        use rayon::prelude::*;
        suite.records.par_iter().map(one).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let mut out: Vec<MetricsRecord> = suite.records.iter().map(one).collect::<Result<_, _>>()?;

    out.sort_by(|a, b| {
        (&a.parent_id, &a.perturbation_type, &a.query_id).cmp(&(&b.parent_id, &b.perturbation_type, &b.query_id))
    });
    Ok(out)
}
