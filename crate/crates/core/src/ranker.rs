//! Exact top-k cosine ranking over an [`EmbeddingStore`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedstore::EmbeddingStore;

/// Ranking depth used by the pipeline unless configured otherwise.
pub const DEFAULT_K: usize = 1000;

#[derive(Debug, Error, PartialEq)]
pub enum RankError {
    #[error("k must be positive")]
    ZeroK,
    #[error("query {query_id:?}: dimension {query} does not match corpus dimension {corpus}")]
    DimMismatch {
        query_id: String,
        query: usize,
        corpus: usize,
    },
    #[error("query {query_id:?}: zero or non-finite query vector")]
    BadQuery { query_id: String },
    #[error("corpus is not normalized")]
    CorpusNotNormalized,
}

/// Top-k corpus items for one query, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub k: usize,
    pub items: Vec<(String, f64)>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|(id, _)| id.as_str())
    }

    /// Copy with scores rounded to 6 significant digits, as written to disk.
    pub fn rounded(&self) -> Self {
        Self {
            query_id: self.query_id.clone(),
            k: self.k,
            items: self
                .items
                .iter()
                .map(|(id, s)| (id.clone(), round_sig6(*s)))
                .collect(),
        }
    }
}

pub fn round_sig6(x: f64) -> f64 {
    format!("{x:.5e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    row: usize,
}

/// Orders candidates best-first: higher score, then smaller corpus id.
fn better(corpus: &EmbeddingStore, a: &Candidate, b: &Candidate) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| corpus.id(a.row).cmp(corpus.id(b.row)))
}

/// Heap entry whose `Ord` puts the worst kept candidate on top.
struct Worst<'a> {
    c: Candidate,
    corpus: &'a EmbeddingStore,
}

impl PartialEq for Worst<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Worst<'_> {}

impl PartialOrd for Worst<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        better(self.corpus, &self.c, &other.c)
    }
}

fn unit_query(query_id: &str, query_vec: &[f32], dim: usize) -> Result<Vec<f64>, RankError> {
    if query_vec.len() != dim {
        return Err(RankError::DimMismatch {
            query_id: query_id.to_owned(),
            query: query_vec.len(),
            corpus: dim,
        });
    }
    let norm = query_vec
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(RankError::BadQuery {
            query_id: query_id.to_owned(),
        });
    }
    Ok(query_vec.iter().map(|&x| f64::from(x) / norm).collect())
}

/// Exact top-k by cosine similarity; ties broken by ascending corpus id.
pub fn rank_topk(
    corpus: &EmbeddingStore,
    query_vec: &[f32],
    k: usize,
) -> Result<RankedList, RankError> {
    rank_topk_named(corpus, "", query_vec, k)
}

pub fn rank_topk_named(
    corpus: &EmbeddingStore,
    query_id: &str,
    query_vec: &[f32],
    k: usize,
) -> Result<RankedList, RankError> {
    if k == 0 {
        return Err(RankError::ZeroK);
    }
    if !corpus.is_normalized() {
        return Err(RankError::CorpusNotNormalized);
    }
    let q = unit_query(query_id, query_vec, corpus.dim())?;
    let keep = k.min(corpus.len());
    let mut heap: BinaryHeap<Worst<'_>> = BinaryHeap::with_capacity(keep + 1);
    for (row, v) in corpus.rows().enumerate() {
        let score: f64 = v.iter().zip(&q).map(|(&a, &b)| f64::from(a) * b).sum();
        let c = Candidate { score, row };
        if heap.len() < keep {
            heap.push(Worst { c, corpus });
        } else if let Some(top) = heap.peek() {
            if better(corpus, &c, &top.c) == Ordering::Less {
                heap.pop();
                heap.push(Worst { c, corpus });
            }
        }
    }
    let items = heap
        .into_sorted_vec()
        .into_iter()
        .map(|w| (corpus.id(w.c.row).to_owned(), w.c.score))
        .collect();
    Ok(RankedList {
        query_id: query_id.to_owned(),
        k,
        items,
    })
}

/// Ranks every row of `queries`; output order follows query order.
pub fn rank_batch(
    corpus: &EmbeddingStore,
    queries: &EmbeddingStore,
    k: usize,
) -> Result<Vec<RankedList>, RankError> {
    let one = |row: usize| rank_topk_named(corpus, queries.id(row), queries.row(row), k);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..queries.len()).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..queries.len()).map(one).collect()
    }
}
