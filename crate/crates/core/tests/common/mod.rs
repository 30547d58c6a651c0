//! Independent reference implementations shared by the integration tests.
//! None of these call into the library code they are compared against.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rank_brittle::{EmbeddingStore, RboMode};

pub mod fixture;

/// Direct summation over freshly built prefix sets.
pub fn oracle_rbo(a: &[&str], b: &[&str], p: f64, depth: usize, mode: RboMode) -> f64 {
    let mut sum = 0.0;
    let mut last = 0.0;
    for d in 1..=depth {
        let sa: BTreeSet<&str> = a[..d].iter().copied().collect();
        let sb: BTreeSet<&str> = b[..d].iter().copied().collect();
        let inter = sa.intersection(&sb).count() as f64;
        let union = sa.union(&sb).count() as f64;
        let w = p.powi(d as i32 - 1);
        match mode {
            RboMode::Standard => sum += w * inter / d as f64,
            RboMode::PaperLiteral => sum += w / d as f64 * inter / union,
        }
        last = inter / d as f64;
    }
    match mode {
        RboMode::Standard => (1.0 - p) * sum + p.powi(depth as i32) * last,
        RboMode::PaperLiteral => (1.0 - p) * sum,
    }
}

/// Scores every row the same way the ranker does, then sorts everything.
pub fn oracle_rank(corpus: &EmbeddingStore, q: &[f32], k: usize) -> Vec<(String, f64)> {
    let norm = q.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    let qn: Vec<f64> = q.iter().map(|&x| f64::from(x) / norm).collect();
    let mut all: Vec<(String, f64)> = (0..corpus.len())
        .map(|i| {
            let s: f64 = corpus.row(i).iter().zip(&qn).map(|(&a, &b)| f64::from(a) * b).sum();
            (corpus.id(i).to_owned(), s)
        })
        .collect();
    all.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    all.truncate(k);
    all
}

/// Cosine distance computed from scratch in f64.
pub fn oracle_cosine(u: &[f32], v: &[f32]) -> f64 {
    let (mut uv, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = (f64::from(a), f64::from(b));
        uv += a * b;
        uu += a * a;
        vv += b * b;
    }
    (1.0 - uv / (uu.sqrt() * vv.sqrt())).clamp(0.0, 2.0)
}

/// Two duplicate-free lists of `len` ids drawn from a shared pool, so they
/// overlap partially.
pub fn random_list_pair(rng: &mut ChaCha8Rng, len: usize) -> (Vec<String>, Vec<String>) {
    let pool = len + rng.random_range(0..=len);
    let mut ids: Vec<String> = (0..pool).map(|i| format!("d{i}")).collect();
    ids.shuffle(rng);
    let a = ids[..len].to_vec();
    ids.shuffle(rng);
    let b = ids[..len].to_vec();
    (a, b)
}

pub fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

pub const VOCAB: [&str; 32] = [
    "a", "the", "dog", "Cat", "runs", "on", "beach", "red", "car", "in", "city", "Person", "riding", "bike", "of",
    "with", "blue", "sky", "over", "river", "old", "man", "Boat", "and", "green", "field", "at", "night", "two",
    "kids", "play", "park",
];

pub const TAGS: [&str; 6] = ["NOUN", "PROPN", "ADJ", "VERB", "DET", "ADP"];

/// A random query of 1–8 vocabulary words with optional trailing punctuation.
pub fn random_query(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(1..=8);
    let mut words: Vec<String> = (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_owned()).collect();
    if rng.random_bool(0.3) {
        let i = rng.random_range(0..n);
        words[i].push([',', '.', '!', '?', ';', ':'][rng.random_range(0..6)]);
    }
    words.join(" ")
}

pub fn multiset(tokens: &[&str]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry((*t).to_owned()).or_insert(0) += 1;
    }
    m
}

pub fn is_subsequence(sub: &[&str], full: &[&str]) -> bool {
    let mut it = full.iter();
    sub.iter().all(|s| it.any(|f| f == s))
}
