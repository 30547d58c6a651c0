use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rank_brittle::stats::{brittleness_heatmap, fit_fixed_effects, summarize, Factor, Response, StatsError};
use rank_brittle::{MetricsRecord, PerturbationClass};

const CLASSES: [PerturbationClass; 3] = [
    PerturbationClass::Lexical,
    PerturbationClass::Syntactic,
    PerturbationClass::Semantic,
];

fn record(model: &str, class: PerturbationClass, ty: &str, i: usize, inst: f64, brit: f64) -> MetricsRecord {
    MetricsRecord {
        model_id: model.into(),
        query_id: format!("q{i}::{ty}"),
        parent_id: format!("q{i}"),
        perturbation_class: class,
        perturbation_type: ty.into(),
        overlap_at_k: BTreeMap::new(),
        rbo: 1.0 - inst,
        instability: inst,
        intra_distance: 0.1,
        inter_distance: 0.5,
        brittleness: brit,
        flags: Default::default(),
    }
}

fn random_records(seed: u64, n: usize) -> Vec<MetricsRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let m = ["m0", "m1", "m2"][rng.random_range(0..3)];
            let c = CLASSES[rng.random_range(0..3)];
            let ty = format!("{c}_{}", rng.random_range(0..2));
            record(m, c, &ty, i, rng.random(), rng.random_range(-5.0..5.0))
        })
        .collect()
}

/// Textbook statistics, computed without any library helper.
fn naive(values: &[f64]) -> (usize, f64, f64, f64, f64, f64) {
    let n = values.len();
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = s.iter().sum::<f64>() / n as f64;
    let median = if n.is_multiple_of(2) { (s[n / 2 - 1] + s[n / 2]) / 2.0 } else { s[n / 2] };
    let var = if n > 1 { s.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    (n, mean, median, var.sqrt(), s[0], s[n - 1])
}

#[test]
fn summary_matches_independent_recomputation() {
    let records = random_records(1, 300);
    let table = summarize(&records, &[Factor::ModelId, Factor::PerturbationClass]).unwrap();
    let mut groups: BTreeMap<(String, String), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in &records {
        groups.entry((r.model_id.clone(), r.perturbation_class.to_string())).or_default().push(r);
    }
    assert_eq!(table.rows.len(), groups.len());
    for ((m, c), rs) in groups {
        let row = table.get(&[&m, &c]).unwrap();
        for (stat, values) in [
            (&row.instability, rs.iter().map(|r| r.instability).collect::<Vec<_>>()),
            (&row.brittleness, rs.iter().map(|r| r.brittleness).collect()),
        ] {
            let (n, mean, median, std, min, max) = naive(&values);
            assert_eq!(stat.count, n);
            assert!((stat.mean - mean).abs() < 1e-12);
            assert_eq!(stat.median, median);
            assert!((stat.std - std).abs() < 1e-12);
            assert_eq!((stat.min, stat.max), (min, max));
            assert!(stat.min <= stat.mean && stat.mean <= stat.max);
        }
    }
}

#[test]
fn heatmap_equals_summary_means_bit_for_bit() {
    let records = random_records(2, 500);
    let table = summarize(&records, &[Factor::ModelId, Factor::PerturbationClass]).unwrap();
    let heat = brittleness_heatmap(&records).unwrap();
    for (i, m) in heat.models.iter().enumerate() {
        for (j, c) in heat.classes.iter().enumerate() {
            let row = table.get(&[m, c]).unwrap();
            assert_eq!(heat.cells[i][j].unwrap().to_bits(), row.brittleness.mean.to_bits(), "{m} {c}");
            assert_eq!(heat.counts[i][j], row.brittleness.count);
        }
    }
}

#[test]
fn heatmap_marks_missing_cells() {
    let records = vec![
        record("a", PerturbationClass::Lexical, "lowercase", 0, 0.1, 1.0),
        record("b", PerturbationClass::Syntactic, "word_shuffle", 0, 0.2, 2.0),
    ];
    let heat = brittleness_heatmap(&records).unwrap();
    assert_eq!(heat.missing_cells(), 2);
    assert_eq!(heat.to_csv(), "model_id,lexical,syntactic\na,1,NA\nb,NA,2\n");
}

proptest! {
    #[test]
    fn summarize_ignores_record_order(seed: u64, n in 1usize..120) {
        let records = random_records(seed, n);
        let mut shuffled = records.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 1));
        for by in [vec![Factor::ModelId], vec![Factor::PerturbationType, Factor::ModelId], vec![]] {
            prop_assert_eq!(summarize(&records, &by).unwrap(), summarize(&shuffled, &by).unwrap());
        }
    }

    #[test]
    fn residuals_sum_to_zero(seed: u64) {
        let records = random_records(seed, 90);
        match fit_fixed_effects(&records, Response::Instability) {
            Ok(fit) => {
                prop_assert!(fit.residuals.iter().sum::<f64>().abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&fit.r_squared));
                let models = records.iter().map(|r| &r.model_id).collect::<std::collections::BTreeSet<_>>().len();
                let classes = records.iter().map(|r| r.perturbation_class).collect::<std::collections::BTreeSet<_>>().len();
                prop_assert_eq!(fit.coefficients.len(), models - 1 + classes - 1);
            }
            Err(e) => prop_assert!(matches!(e, StatsError::InsufficientLevels { .. }), "{}", e),
        }
    }
}

#[test]
fn noise_free_one_factor_design_reproduces_group_means() {
    let means = [(PerturbationClass::Lexical, 0.25), (PerturbationClass::Semantic, 0.7), (PerturbationClass::Syntactic, 0.5)];
    let mut records = Vec::new();
    for m in ["x", "y"] {
        for (c, v) in means {
            for i in 0..5 {
                records.push(record(m, c, "t", i, v, v * 2.0));
            }
        }
    }
    let fit = fit_fixed_effects(&records, Response::Instability).unwrap();
    assert!((fit.intercept.estimate - 0.25).abs() < 1e-12);
    assert!((fit.coefficients["perturbation_class:semantic"].estimate - 0.45).abs() < 1e-12);
    assert!((fit.coefficients["perturbation_class:syntactic"].estimate - 0.25).abs() < 1e-12);
    assert!(fit.coefficients["model_id:y"].estimate.abs() < 1e-12);
    assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
    assert_eq!(fit.reference_levels["perturbation_class"], "lexical");
    let brit = fit_fixed_effects(&records, Response::Brittleness).unwrap();
    assert!((brit.intercept.estimate - 0.5).abs() < 1e-12);
}

#[test]
fn one_model_cannot_be_regressed() {
    let records = vec![
        record("only", PerturbationClass::Lexical, "a", 0, 0.1, 0.0),
        record("only", PerturbationClass::Syntactic, "b", 1, 0.3, 0.0),
        record("only", PerturbationClass::Lexical, "a", 2, 0.2, 0.0),
    ];
    assert_eq!(
        fit_fixed_effects(&records, Response::Instability).unwrap_err(),
        StatsError::InsufficientLevels { factor: "model_id", levels: 1 }
    );
}
