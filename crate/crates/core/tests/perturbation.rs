mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rank_brittle::embedstore::Origin;
use rank_brittle::perturb::{generate_suite, tokens, validate_suite, IngestError};
use rank_brittle::{PerturbationClass, PerturbationSpec, PerturbationType, Perturber, QueryRecord};

use common::{is_subsequence, multiset, random_query, TAGS};

fn query() -> impl Strategy<Value = String> {
    any::<u64>().prop_map(|s| random_query(&mut ChaCha8Rng::seed_from_u64(s)))
}

fn tags_for(text: &str, seed: u64) -> Vec<String> {
    tokens(text)
        .iter()
        .enumerate()
        .map(|(i, _)| TAGS[(seed as usize).wrapping_add(i * 7) % TAGS.len()].to_owned())
        .collect()
}

const LEXICAL: [PerturbationType; 9] = [
    PerturbationType::Lowercase,
    PerturbationType::Uppercase,
    PerturbationType::PunctuationAdd,
    PerturbationType::PunctuationRemove,
    PerturbationType::TypoKeyboard,
    PerturbationType::CharSwap,
    PerturbationType::CharDelete,
    PerturbationType::CharAdd,
    PerturbationType::CharSubstitute,
];

proptest! {
    #[test]
    fn lexical_edits_stay_within_two(text in query(), i in 0usize..9, seed: u64) {
        let ty = LEXICAL[i];
        if let Ok(out) = Perturber::default().perturb_lexical(&text, &PerturbationSpec::new(ty, seed)) {
            let d = if matches!(ty, PerturbationType::Lowercase | PerturbationType::Uppercase) {
                strsim::levenshtein(&text.to_lowercase(), &out.to_lowercase())
            } else {
                strsim::levenshtein(&text, &out)
            };
            prop_assert!(d <= 2, "{} {:?} -> {:?}", ty, text, out);
        }
    }

    #[test]
    fn word_shuffle_preserves_tokens(text in query(), seed: u64) {
        let out = Perturber::default()
            .perturb_syntactic(&text, &PerturbationSpec::new(PerturbationType::WordShuffle, seed), None)
            .unwrap();
        prop_assert_eq!(multiset(&tokens(&out)), multiset(&tokens(&text)));
    }

    #[test]
    fn extraction_is_a_subsequence(text in query(), seed: u64, which in 0usize..3) {
        let ty = [PerturbationType::KeywordOnly, PerturbationType::NounOnly, PerturbationType::AdjectiveNounOnly][which];
        let tags = tags_for(&text, seed);
        match Perturber::default().perturb_syntactic(&text, &PerturbationSpec::new(ty, seed), Some(&tags)) {
            Ok(out) => prop_assert!(is_subsequence(&tokens(&out), &tokens(&text))),
            Err(e) => prop_assert!(e.is_skippable(), "{}", e),
        }
    }

    #[test]
    fn generation_is_a_pure_function(seed: u64, n in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let originals: Vec<QueryRecord> =
            (0..n).map(|i| QueryRecord::original(format!("q{i}"), random_query(&mut rng))).collect();
        let types: Vec<PerturbationType> = PerturbationType::builtin().filter(|t| !t.needs_tags()).collect();
        let p = Perturber::default();
        let a = generate_suite(&p, &originals, &types, seed, None).unwrap();
        let b = generate_suite(&p, &originals, &types, seed, None).unwrap();
        prop_assert_eq!(a.suite.to_jsonl(), b.suite.to_jsonl());
        prop_assert_eq!(&a.no_ops, &b.no_ops);
        prop_assert_eq!(a.suite.len() + a.no_ops.len(), n * types.len());
    }
}

#[test]
fn full_sentence_types_have_no_shuffled_variant() {
    for ty in PerturbationType::ALL {
        if ty.is_shuffled() && ty != PerturbationType::WordShuffle {
            let base = PerturbationType::ALL.into_iter().find(|b| b.shuffled_variant() == Some(ty));
            assert!(base.is_some_and(|b| b.is_extractive()), "{ty}");
        }
        if matches!(ty.class(), PerturbationClass::Lexical | PerturbationClass::Semantic) {
            assert_eq!(ty.shuffled_variant(), None, "{ty}");
        }
    }
}

#[test]
fn suite_of_190_by_9_regenerates_and_ingests() {
    let mut rng = ChaCha8Rng::seed_from_u64(190);
    let originals: Vec<QueryRecord> =
        (0..190).map(|i| QueryRecord::original(format!("t{i:03}"), random_query(&mut rng))).collect();
    let p = Perturber::default();
    let first = generate_suite(&p, &originals, &LEXICAL, 42, None).unwrap();
    let again = generate_suite(&p, &originals, &LEXICAL, 42, None).unwrap();
    assert_eq!(first.suite.len() + first.no_ops.len(), 1710);
    assert_eq!(first.suite.to_jsonl(), again.suite.to_jsonl());
    assert_eq!(first.no_ops, again.no_ops);
    // only punctuation-dependent types and empty-result deletions can be no-ops
    for m in &first.no_ops {
        assert!(
            ["punctuation_add", "punctuation_remove", "char_delete", "char_swap"].contains(&m.perturbation_type.as_str()),
            "{m:?}"
        );
    }
    let ingested = validate_suite(first.suite.records.clone(), &originals, "regen").unwrap();
    assert_eq!(ingested.records, first.suite.records);
    assert!(first.suite.records.iter().all(|r| r.origin == Origin::Perturbed));
}

fn perturbed(parent: &str, ty: &str, class: PerturbationClass) -> QueryRecord {
    QueryRecord {
        query_id: format!("{parent}::{ty}"),
        text: "x".into(),
        origin: Origin::Perturbed,
        perturbation_class: class,
        perturbation_type: ty.into(),
        parent_id: Some(parent.into()),
        seed: None,
    }
}

#[test]
fn ingest_rejects_bad_external_records() {
    let originals = vec![QueryRecord::original("q1", "a dog")];
    let err = validate_suite(vec![perturbed("missing", "paraphrase", PerturbationClass::Semantic)], &originals, "t")
        .unwrap_err();
    assert!(matches!(err, IngestError::UnresolvableParent { .. }));
    let err = validate_suite(vec![perturbed("q1", "paraphrase", PerturbationClass::Lexical)], &originals, "t")
        .unwrap_err();
    assert!(matches!(err, IngestError::ClassMismatch { .. }));
    let dup = vec![
        perturbed("q1", "paraphrase", PerturbationClass::Semantic),
        QueryRecord {
            query_id: "other".into(),
            ..perturbed("q1", "paraphrase", PerturbationClass::Semantic)
        },
    ];
    assert!(matches!(validate_suite(dup, &originals, "t").unwrap_err(), IngestError::DuplicatePair { .. }));
    let ok = validate_suite(
        vec![
            perturbed("q1", "paraphrase", PerturbationClass::Semantic),
            perturbed("q1", "back_translation", PerturbationClass::Semantic),
        ],
        &originals,
        "external-tool",
    )
    .unwrap();
    assert_eq!(ok.len(), 2);
}
