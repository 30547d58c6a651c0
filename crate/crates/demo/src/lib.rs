//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain values and returns a JSON string, so the page
//! needs no bundler or generated type glue beyond `wasm-bindgen`'s own.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rank_brittle::embedstore::normalize;
use rank_brittle::metrics::rbo_ids;
use rank_brittle::perturb::derive_seed;
use rank_brittle::ranker::rank_batch;
use rank_brittle::{EmbeddingStore, PerturbationSpec, PerturbationType, Perturber, RboMode};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn error(msg: impl std::fmt::Display) -> String {
    json(&serde_json::json!({ "error": msg.to_string() }))
}

fn split_list(s: &str) -> Vec<&str> {
    s.split([',', ' ', '\n']).map(str::trim).filter(|t| !t.is_empty()).collect()
}

#[derive(Serialize)]
struct RboReport {
    depth: usize,
    standard: f64,
    paper_literal: f64,
    /// Standard RBO evaluated at every prefix depth 1..=depth.
    standard_by_depth: Vec<f64>,
    /// Fraction of the top d shared by both lists.
    overlap_by_depth: Vec<f64>,
}

/// RBO of two comma- or space-separated id lists, truncated to the shorter
/// list, plus the per-depth curves the page plots.
#[wasm_bindgen]
pub fn rbo_explore(list_a: &str, list_b: &str, p: f64) -> String {
    if !(p > 0.0 && p < 1.0) {
        return error("p must lie strictly between 0 and 1");
    }
    let a = split_list(list_a);
    let b = split_list(list_b);
    for (name, l) in [("A", &a), ("B", &b)] {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = l.iter().find(|x| !seen.insert(**x)) {
            return error(format!("list {name} repeats {dup:?}"));
        }
    }
    let depth = a.len().min(b.len());
    if depth == 0 {
        return error("both lists need at least one id");
    }
    let mut overlap_by_depth = Vec::with_capacity(depth);
    let mut sa = std::collections::HashSet::new();
    let mut sb = std::collections::HashSet::new();
    for d in 0..depth {
        sa.insert(a[d]);
        sb.insert(b[d]);
        let shared = sa.intersection(&sb).count();
        overlap_by_depth.push(shared as f64 / (d + 1) as f64);
    }
    json(&RboReport {
        depth,
        standard: rbo_ids(&a, &b, p, depth, RboMode::Standard),
        paper_literal: rbo_ids(&a, &b, p, depth, RboMode::PaperLiteral),
        standard_by_depth: (1..=depth).map(|d| rbo_ids(&a, &b, p, d, RboMode::Standard)).collect(),
        overlap_by_depth,
    })
}

#[derive(Serialize)]
struct Variant {
    perturbation_type: &'static str,
    class: String,
    seed: u64,
    text: Option<String>,
    no_op: Option<String>,
}

/// Applies every built-in type that needs no POS tags to `text`, with
/// per-type seeds derived from `suite_seed` exactly as suite generation does.
#[wasm_bindgen]
pub fn perturb_all(text: &str, suite_seed: u32) -> String {
    let perturber = Perturber::default();
    let out: Vec<Variant> = PerturbationType::builtin()
        .filter(|t| !t.needs_tags())
        .map(|ty| {
            let seed = derive_seed(u64::from(suite_seed), "demo", ty);
            let result = perturber.perturb(text, &PerturbationSpec::new(ty, seed), None);
            let (text, no_op) = match result {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Variant {
                perturbation_type: ty.name(),
                class: ty.class().to_string(),
                seed,
                text,
                no_op,
            }
        })
        .collect();
    json(&out)
}

#[derive(Serialize)]
struct SweepPoint {
    sigma: f64,
    mean_instability: f64,
    min: f64,
    max: f64,
}

fn gaussian_store(rng: &mut ChaCha8Rng, n: usize, dim: usize, prefix: &str) -> EmbeddingStore {
    let normal = Normal::new(0.0f32, 1.0).expect("unit normal");
    EmbeddingStore::from_rows(
        (0..n).map(|i| (format!("{prefix}{i}"), (0..dim).map(|_| normal.sample(rng)).collect::<Vec<f32>>())),
    )
    .expect("gaussian rows are finite")
}

/// Mean instability of Gaussian queries against a Gaussian corpus when the
/// query embeddings receive additive noise of each listed standard deviation.
#[wasm_bindgen]
pub fn noise_sweep(sigmas: &str, queries: usize, corpus: usize, dim: usize, depth: usize, p: f64, seed: u32) -> String {
    let sigmas: Result<Vec<f64>, _> = split_list(sigmas).into_iter().map(str::parse::<f64>).collect();
    let Ok(sigmas) = sigmas else {
        return error("sigmas must be numbers");
    };
    if queries == 0 || dim == 0 || depth == 0 || depth > corpus {
        return error("need queries > 0, dim > 0 and 0 < depth <= corpus size");
    }
    if !(p > 0.0 && p < 1.0) {
        return error("p must lie strictly between 0 and 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
    let c = match normalize(&gaussian_store(&mut rng, corpus, dim, "c")) {
        Ok(c) => c,
        Err(e) => return error(e),
    };
    let q = gaussian_store(&mut rng, queries, dim, "q");
    let base = match rank_batch(&c, &q, depth) {
        Ok(b) => b,
        Err(e) => return error(e),
    };
    let unit = Normal::new(0.0f32, 1.0).expect("unit normal");
    let mut points = Vec::new();
    for sigma in sigmas {
        let noisy = EmbeddingStore::from_rows((0..q.len()).map(|i| {
            let v: Vec<f32> = q.row(i).iter().map(|&x| x + sigma as f32 * unit.sample(&mut rng)).collect();
            (q.id(i).to_owned(), v)
        }));
        let lists = match noisy.map_err(|e| e.to_string()).and_then(|n| rank_batch(&c, &n, depth).map_err(|e| e.to_string())) {
            Ok(l) => l,
            Err(e) => return error(e),
        };
        let inst: Vec<f64> = base
            .iter()
            .zip(&lists)
            .map(|(a, b)| {
                let a: Vec<&str> = a.ids().collect();
                let b: Vec<&str> = b.ids().collect();
                1.0 - rbo_ids(&a, &b, p, depth, RboMode::Standard)
            })
            .collect();
        points.push(SweepPoint {
            sigma,
            mean_instability: inst.iter().sum::<f64>() / inst.len() as f64,
            min: inst.iter().copied().fold(f64::INFINITY, f64::min),
            max: inst.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        });
    }
    json(&points)
}
