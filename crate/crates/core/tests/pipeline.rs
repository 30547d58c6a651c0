mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rank_brittle::embedstore::{load_store, read_jsonl, read_originals, write_store};
use rank_brittle::metrics::{evaluate, evaluate_with, PrecomputedRankings};
use rank_brittle::perturb::{ingest_suite, TagTable};
use rank_brittle::pipeline::{self, read_manifest, EvaluateArgs, FileKind, RankingInput, RunManifest, MANIFEST};
use rank_brittle::ranker::rank_batch;
use rank_brittle::{EmbeddingStore, PerturbationSuite, QueryRecord};

use common::fixture::{self, run_pipeline};

fn file_map(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in walk(dir) {
        if entry.file_name().unwrap() != MANIFEST {
            out.insert(entry.strip_prefix(dir).unwrap().display().to_string(), fs::read(&entry).unwrap());
        }
    }
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn full_chain_is_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(a.path());
    run_pipeline(b.path());
    assert_eq!(file_map(a.path()), file_map(b.path()));
    for stage in ["perturb", "alpha_rank", "alpha_eval", "beta_eval", "report"] {
        let ma = read_manifest(&a.path().join(stage)).unwrap();
        let mb = read_manifest(&b.path().join(stage)).unwrap();
        assert_eq!(ma.outputs, mb.outputs, "{stage}");
        assert_eq!(ma.config, mb.config, "{stage}");
        let hashes = |m: &RunManifest| m.inputs.iter().map(|h| h.sha256.clone()).collect::<Vec<_>>();
        assert_eq!(hashes(&ma), hashes(&mb), "{stage}");
    }
}

#[test]
fn manifests_record_hashes_and_settings() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(dir.path());
    let m = read_manifest(&run.path(&["perturb"])).unwrap();
    assert_eq!(m.suite_seed, Some(fixture::SEED));
    assert_eq!(m.log_base, "e");
    let suite_bytes = fs::read(run.path(&["perturb", "suite.jsonl"])).unwrap();
    let recorded = m.outputs.iter().find(|h| h.path == "suite.jsonl").unwrap();
    assert_eq!(recorded.sha256, pipeline::sha256_hex(&suite_bytes));
    let e = read_manifest(&run.path(&["alpha_eval"])).unwrap();
    assert_eq!(e.config["p"], 0.9);
    assert_eq!(e.config["depth"], 10);
    assert_eq!(e.config["rbo_mode"], "standard");
    let r = read_manifest(&run.path(&["alpha_rank"])).unwrap();
    assert_eq!(r.config["corpus_normalized_on_load"], true);
    // every stage directory has exactly one manifest
    for stage in ["perturb", "alpha_rank", "beta_rank", "alpha_eval", "beta_eval", "report"] {
        let n = walk(&run.path(&[stage])).iter().filter(|p| p.ends_with(MANIFEST)).count();
        assert_eq!(n, 1, "{stage}");
    }
}

fn eval_args(run: &fixture::Run, out: &str) -> EvaluateArgs {
    EvaluateArgs {
        rankings: RankingInput::Corpus(run.path(&["alpha_corpus.emb"])),
        originals_emb: run.path(&["orig.emb"]),
        originals_jsonl: run.path(&["queries.jsonl"]),
        perturbed_emb: run.path(&["pert.emb"]),
        suite: run.path(&["perturb", "suite.jsonl"]),
        cfg: fixture::config(),
        model_id: "alpha".into(),
        out_dir: run.path(&[out]),
    }
}

#[test]
fn corpus_and_precomputed_rankings_agree() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(dir.path());
    pipeline::run_evaluate(&eval_args(&run, "direct")).unwrap();
    assert_eq!(
        fs::read(run.path(&["direct", "metrics.csv"])).unwrap(),
        fs::read(run.path(&["alpha_eval", "metrics.csv"])).unwrap()
    );
}

#[test]
fn errors_leave_no_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(dir.path());
    // perturbed embeddings missing one record
    let pert = load_store(run.path(&["pert.emb"])).unwrap();
    let short = EmbeddingStore::from_rows((1..pert.len()).map(|i| (pert.id(i).to_owned(), pert.row(i).to_vec()))).unwrap();
    write_store(&short, run.path(&["short.emb"])).unwrap();
    let mut args = eval_args(&run, "bad_eval");
    args.perturbed_emb = run.path(&["short.emb"]);
    let err = pipeline::run_evaluate(&args).unwrap_err().to_string();
    assert!(err.contains(pert.id(0)), "{err}");
    assert!(!run.path(&["bad_eval"]).exists());

    let mut args = eval_args(&run, "bad_depth");
    args.rankings = RankingInput::Rankings(run.path(&["alpha_rank", "rankings.jsonl"]));
    args.cfg.depth = 12;
    let err = pipeline::run_evaluate(&args).unwrap_err().to_string();
    assert!(err.contains("needs 2 more"), "{err}");
    assert!(!run.path(&["bad_depth"]).exists());
}

#[test]
fn evaluate_ignores_suite_order() {
    let dir = tempfile::tempdir().unwrap();
    let run = run_pipeline(dir.path());
    let originals = read_originals(&run.path(&["queries.jsonl"])).unwrap();
    let suite = ingest_suite(&run.path(&["perturb", "suite.jsonl"]), &originals, "t").unwrap();
    let corpus = rank_brittle::embedstore::normalize(&load_store(run.path(&["beta_corpus.emb"])).unwrap()).unwrap();
    let orig = load_store(run.path(&["orig.emb"])).unwrap();
    let pert = load_store(run.path(&["pert.emb"])).unwrap();
    let cfg = fixture::config();
    let base = evaluate(&corpus, &orig, &pert, &suite, &cfg, "beta").unwrap();
    for rotation in 1..suite.len() {
        let mut records = suite.records.clone();
        records.rotate_left(rotation);
        let last = records.len() - 1;
        records.swap(0, last);
        let shuffled = PerturbationSuite {
            records,
            provenance: suite.provenance.clone(),
        };
        assert_eq!(evaluate(&corpus, &orig, &pert, &shuffled, &cfg, "beta").unwrap(), base);
    }

    // same result through precomputed rankings of every query
    let all = load_store(run.path(&["all.emb"])).unwrap();
    let lists: HashMap<String, _> = rank_batch(&corpus, &all, 10)
        .unwrap()
        .into_iter()
        .map(|l| (l.query_id.clone(), l))
        .collect();
    let via = evaluate_with(&PrecomputedRankings(lists), &orig, &pert, &suite, &cfg, "beta").unwrap();
    assert_eq!(via, base);
}

/// Files in the layout the external encoder/tagger adapter produces must
/// pass the loaders and validators unchanged.
#[test]
fn adapter_file_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let emb = d.join("text.emb");
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"EMB1");
    bytes.extend_from_slice(&1u32.to_le_bytes());
    bytes.extend_from_slice(&2u64.to_le_bytes());
    bytes.extend_from_slice(&3u32.to_le_bytes());
    bytes.extend_from_slice(&1u32.to_le_bytes());
    for v in [1.0f32, 0.0, 0.0, 0.0, 0.6, 0.8] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(&emb, bytes).unwrap();
    fs::write(d.join("text.ids"), "q1\nq2\n").unwrap();
    let s = load_store(&emb).unwrap();
    assert!(s.is_normalized());
    assert_eq!(s.get("q2").unwrap(), &[0.0, 0.6, 0.8]);
    assert!(pipeline::validate_file(FileKind::Embeddings, &emb, None).unwrap().contains("2 rows, dim 3"));

    let queries = d.join("queries.jsonl");
    fs::write(
        &queries,
        concat!(
            r#"{"query_id":"q1","text":"a person riding a bike","origin":"original","perturbation_class":"none","perturbation_type":"none","parent_id":null}"#,
            "\n",
            r#"{"query_id":"q2","text":"red car","origin":"original","perturbation_class":"none","perturbation_type":"none","parent_id":null}"#,
            "\n"
        ),
    )
    .unwrap();
    let originals: Vec<QueryRecord> = read_originals(&queries).unwrap();
    assert_eq!(originals.len(), 2);

    let tags = d.join("tags.jsonl");
    fs::write(
        &tags,
        r#"{"query_id":"q1","tokens":["a","person","riding","a","bike"],"tags":["DET","NOUN","VERB","DET","NOUN"]}"#.to_owned() + "\n",
    )
    .unwrap();
    let table = TagTable::load(&tags).unwrap();
    assert_eq!(table.tags_for(&originals[0]).unwrap().unwrap().len(), 5);

    let semantic = d.join("semantic.jsonl");
    fs::write(
        &semantic,
        concat!(
            r#"{"query_id":"q1::paraphrase","text":"someone cycling","origin":"perturbed","perturbation_class":"semantic","perturbation_type":"paraphrase","parent_id":"q1"}"#,
            "\n",
            r#"{"query_id":"q2::synonym_replace","text":"crimson car","origin":"perturbed","perturbation_class":"semantic","perturbation_type":"synonym_replace","parent_id":"q2"}"#,
            "\n"
        ),
    )
    .unwrap();
    let suite = ingest_suite(&semantic, &originals, "adapter").unwrap();
    assert_eq!(suite.len(), 2);
    let desc = pipeline::validate_file(FileKind::Suite, &semantic, Some(&queries)).unwrap();
    assert!(desc.contains("2 perturbed records"));
    let back: Vec<QueryRecord> = read_jsonl(&semantic).unwrap();
    assert_eq!(back[1].perturbation_type, "synonym_replace");
}
