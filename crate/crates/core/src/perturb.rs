//! Seeded query perturbations.
//!
//! Lexical edits operate on characters, syntactic ones on whitespace tokens.
//! Every output is a pure function of the input text, the perturbation type
//! and a 64-bit seed; per-record seeds inside a suite are derived from the
//! suite seed, the query id and the type name so that adding or removing
//! queries never changes the text generated for the others.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embedstore::{read_jsonl, JsonlError, Origin, PerturbationClass, QueryRecord};

pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en_v1.txt");
pub const STOPWORDS_VERSION: &str = "stopwords_en_v1";
pub const DEFAULT_KEYBOARD: &str = include_str!("../data/qwerty_adjacency.json");

/// Characters removed by `punctuation_remove` and treated as a terminator by
/// `punctuation_add`.
pub const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':'];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationType {
    Lowercase,
    Uppercase,
    PunctuationAdd,
    PunctuationRemove,
    TypoKeyboard,
    CharSwap,
    CharDelete,
    CharAdd,
    CharSubstitute,
    KeywordOnly,
    KeywordOnlyShuffled,
    NounOnly,
    NounOnlyShuffled,
    AdjectiveNounOnly,
    WordShuffle,
    SynonymReplace,
    Paraphrase,
}

use PerturbationType as P;

impl PerturbationType {
    pub const ALL: [Self; 17] = [
        P::Lowercase,
        P::Uppercase,
        P::PunctuationAdd,
        P::PunctuationRemove,
        P::TypoKeyboard,
        P::CharSwap,
        P::CharDelete,
        P::CharAdd,
        P::CharSubstitute,
        P::KeywordOnly,
        P::KeywordOnlyShuffled,
        P::NounOnly,
        P::NounOnlyShuffled,
        P::AdjectiveNounOnly,
        P::WordShuffle,
        P::SynonymReplace,
        P::Paraphrase,
    ];

    pub fn name(self) -> &'static str {
        match self {
            P::Lowercase => "lowercase",
            P::Uppercase => "uppercase",
            P::PunctuationAdd => "punctuation_add",
            P::PunctuationRemove => "punctuation_remove",
            P::TypoKeyboard => "typo_keyboard",
            P::CharSwap => "char_swap",
            P::CharDelete => "char_delete",
            P::CharAdd => "char_add",
            P::CharSubstitute => "char_substitute",
            P::KeywordOnly => "keyword_only",
            P::KeywordOnlyShuffled => "keyword_only_shuffled",
            P::NounOnly => "noun_only",
            P::NounOnlyShuffled => "noun_only_shuffled",
            P::AdjectiveNounOnly => "adjective_noun_only",
            P::WordShuffle => "word_shuffle",
            P::SynonymReplace => "synonym_replace",
            P::Paraphrase => "paraphrase",
        }
    }

    pub fn class(self) -> PerturbationClass {
        match self {
            P::Lowercase
            | P::Uppercase
            | P::PunctuationAdd
            | P::PunctuationRemove
            | P::TypoKeyboard
            | P::CharSwap
            | P::CharDelete
            | P::CharAdd
            | P::CharSubstitute => PerturbationClass::Lexical,
            P::KeywordOnly
            | P::KeywordOnlyShuffled
            | P::NounOnly
            | P::NounOnlyShuffled
            | P::AdjectiveNounOnly
            | P::WordShuffle => PerturbationClass::Syntactic,
            P::SynonymReplace | P::Paraphrase => PerturbationClass::Semantic,
        }
    }

    /// Types that keep a subset of the query's tokens.
    pub fn is_extractive(self) -> bool {
        matches!(
            self,
            P::KeywordOnly | P::KeywordOnlyShuffled | P::NounOnly | P::NounOnlyShuffled | P::AdjectiveNounOnly
        )
    }

    pub fn is_shuffled(self) -> bool {
        matches!(self, P::KeywordOnlyShuffled | P::NounOnlyShuffled | P::WordShuffle)
    }

    /// The shuffled counterpart of an extractive type, if one exists.
    pub fn shuffled_variant(self) -> Option<Self> {
        match self {
            P::KeywordOnly => Some(P::KeywordOnlyShuffled),
            P::NounOnly => Some(P::NounOnlyShuffled),
            _ => None,
        }
    }

    pub fn needs_tags(self) -> bool {
        matches!(self, P::NounOnly | P::NounOnlyShuffled | P::AdjectiveNounOnly)
    }

    /// Whether this crate can generate the type itself (semantic ones are external).
    pub fn is_builtin(self) -> bool {
        self.class() != PerturbationClass::Semantic
    }

    pub fn builtin() -> impl Iterator<Item = Self> {
        Self::ALL.into_iter().filter(|t| t.is_builtin())
    }
}

impl fmt::Display for PerturbationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown perturbation type {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub type_name: PerturbationType,
    pub class: PerturbationClass,
    pub seed: u64,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl PerturbationSpec {
    pub fn new(type_name: PerturbationType, seed: u64) -> Self {
        Self {
            type_name,
            class: type_name.class(),
            seed,
            params: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("no-op perturbation: {0}")]
    NoOp(String),
    #[error("extraction left no tokens")]
    EmptyExtraction,
    #[error("{0} requires POS tags")]
    MissingTags(PerturbationType),
    #[error("tag table has {tags} tags for {tokens} tokens")]
    TagMismatch { tokens: usize, tags: usize },
    #[error("tag table tokens {table:?} do not match query tokens {text:?}")]
    TokenMismatch { table: Vec<String>, text: Vec<String> },
    #[error("{ty} belongs to class {actual}, not {expected}")]
    WrongClass {
        ty: PerturbationType,
        expected: PerturbationClass,
        actual: PerturbationClass,
    },
    #[error("spec class {spec} disagrees with the fixed class {fixed} of {ty}")]
    SpecClass {
        ty: PerturbationType,
        spec: PerturbationClass,
        fixed: PerturbationClass,
    },
    #[error("empty input text")]
    EmptyText,
    #[error("{0} is not generated by this toolkit; ingest it from an external suite")]
    NotBuiltin(PerturbationType),
}

impl PerturbError {
    /// Per-record conditions the pipeline records and skips instead of aborting.
    pub fn is_skippable(&self) -> bool {
        matches!(
            self,
            Self::NoOp(_) | Self::EmptyExtraction | Self::MissingTags(_) | Self::EmptyText
        )
    }
}

/// Keyword and keyboard resources used by the builtin perturbations.
#[derive(Debug, Clone)]
pub struct Perturber {
    stopwords: HashSet<String>,
    keyboard: HashMap<char, Vec<char>>,
}

impl Default for Perturber {
    fn default() -> Self {
        Self::new(
            parse_stopwords(DEFAULT_STOPWORDS),
            parse_keyboard(DEFAULT_KEYBOARD).expect("bundled keyboard map is valid"),
        )
    }
}

pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Parses a JSON object mapping single characters to strings of neighbors.
pub fn parse_keyboard(json: &str) -> Result<HashMap<char, Vec<char>>, String> {
    let raw: BTreeMap<String, String> = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let mut map = HashMap::with_capacity(raw.len());
    for (key, neighbors) in raw {
        let mut chars = key.chars();
        let (Some(c), None) = (chars.next(), chars.next()) else {
            return Err(format!("keyboard key {key:?} is not a single character"));
        };
        let mut n: Vec<char> = neighbors.chars().filter(|&x| x != c).collect();
        n.sort_unstable();
        n.dedup();
        map.insert(c, n);
    }
    Ok(map)
}

fn simple_lower(c: char) -> char {
    let mut it = c.to_lowercase();
    match (it.next(), it.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

fn simple_upper(c: char) -> char {
    let mut it = c.to_uppercase();
    match (it.next(), it.next()) {
        (Some(u), None) => u,
        _ => c,
    }
}

fn match_case(template: char, c: char) -> char {
    if template.is_uppercase() {
        simple_upper(c)
    } else {
        c
    }
}

/// Whitespace tokens of a query.
pub fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn keyword_key(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .map(simple_lower)
        .collect()
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> Option<T> {
    if items.is_empty() {
        None
    } else {
        Some(items[rng.random_range(0..items.len())])
    }
}

impl Perturber {
    pub fn new(stopwords: HashSet<String>, keyboard: HashMap<char, Vec<char>>) -> Self {
        Self {
            stopwords,
            keyboard,
        }
    }

    pub fn with_stopwords(mut self, stopwords: HashSet<String>) -> Self {
        self.stopwords = stopwords;
        self
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(&keyword_key(token))
    }

    fn neighbors(&self, c: char) -> &[char] {
        self.keyboard
            .get(&simple_lower(c))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Applies a class-1 (surface) edit.
    pub fn perturb_lexical(&self, text: &str, spec: &PerturbationSpec) -> Result<String, PerturbError> {
        check_class(spec, PerturbationClass::Lexical)?;
        if text.is_empty() {
            return Err(PerturbError::EmptyText);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut chars: Vec<char> = text.chars().collect();
        let alpha: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_alphabetic()).collect();
        let no_op = |why: &str| Err(PerturbError::NoOp(format!("{}: {why}", spec.type_name)));
        match spec.type_name {
            P::Lowercase => return Ok(chars.into_iter().map(simple_lower).collect()),
            P::Uppercase => return Ok(chars.into_iter().map(simple_upper).collect()),
            P::PunctuationAdd => {
                if text.ends_with(PUNCTUATION) {
                    return no_op("text already ends with a terminator");
                }
                return Ok(format!("{text}."));
            }
            P::PunctuationRemove => {
                let marks: Vec<usize> = (0..chars.len()).filter(|&i| PUNCTUATION.contains(&chars[i])).collect();
                let Some(i) = pick(&mut rng, &marks) else {
                    return no_op("no punctuation to remove");
                };
                chars.remove(i);
            }
            P::TypoKeyboard => {
                let eligible: Vec<usize> = alpha
                    .iter()
                    .copied()
                    .filter(|&i| !self.neighbors(chars[i]).is_empty())
                    .collect();
                let Some(i) = pick(&mut rng, &eligible) else {
                    return no_op("no character with keyboard neighbors");
                };
                let n = pick(&mut rng, self.neighbors(chars[i])).expect("non-empty neighbors");
                chars[i] = match_case(chars[i], n);
            }
            P::CharSwap => {
                let eligible: Vec<usize> = (0..chars.len().saturating_sub(1))
                    .filter(|&i| {
                        chars[i].is_alphabetic() && chars[i + 1].is_alphabetic() && chars[i] != chars[i + 1]
                    })
                    .collect();
                let Some(i) = pick(&mut rng, &eligible) else {
                    return no_op("no adjacent distinct letters");
                };
                chars.swap(i, i + 1);
            }
            P::CharDelete => {
                let Some(i) = pick(&mut rng, &alpha) else {
                    return no_op("no letter to delete");
                };
                chars.remove(i);
                if chars.iter().all(|c| c.is_whitespace()) {
                    return no_op("deletion would leave an empty query");
                }
            }
            P::CharAdd => {
                let eligible: Vec<usize> = alpha
                    .iter()
                    .copied()
                    .filter(|&i| !self.neighbors(chars[i]).is_empty())
                    .collect();
                let Some(i) = pick(&mut rng, &eligible) else {
                    return no_op("no character with keyboard neighbors");
                };
                let n = pick(&mut rng, self.neighbors(chars[i])).expect("non-empty neighbors");
                chars.insert(i + 1, match_case(chars[i], n));
            }
            P::CharSubstitute => {
                let Some(i) = pick(&mut rng, &alpha) else {
                    return no_op("no letter to substitute");
                };
                let original = simple_lower(chars[i]);
                let letters: Vec<char> = ('a'..='z').filter(|&c| c != original).collect();
                let c = pick(&mut rng, &letters).expect("25 letters");
                chars[i] = match_case(chars[i], c);
            }
            other => unreachable!("{other} is checked to be lexical"),
        }
        Ok(chars.into_iter().collect())
    }

    /// Applies a class-2 (extraction / reordering) edit. POS tags align with
    /// the whitespace tokens of `text`.
    pub fn perturb_syntactic(
        &self,
        text: &str,
        spec: &PerturbationSpec,
        tags: Option<&[String]>,
    ) -> Result<String, PerturbError> {
        check_class(spec, PerturbationClass::Syntactic)?;
        let toks = tokens(text);
        if toks.is_empty() {
            return Err(PerturbError::EmptyText);
        }
        let ty = spec.type_name;
        let mut kept: Vec<&str> = match ty {
            P::WordShuffle => toks,
            P::KeywordOnly | P::KeywordOnlyShuffled => {
                toks.into_iter().filter(|t| !keyword_key(t).is_empty() && !self.is_stopword(t)).collect()
            }
            P::NounOnly | P::NounOnlyShuffled | P::AdjectiveNounOnly => {
                let tags = tags.ok_or(PerturbError::MissingTags(ty))?;
                if tags.len() != toks.len() {
                    return Err(PerturbError::TagMismatch {
                        tokens: toks.len(),
                        tags: tags.len(),
                    });
                }
                let wanted: &[&str] = if ty == P::AdjectiveNounOnly {
                    &["ADJ", "NOUN", "PROPN"]
                } else {
                    &["NOUN", "PROPN"]
                };
                toks.into_iter()
                    .zip(tags)
                    .filter(|(_, tag)| wanted.contains(&tag.as_str()))
                    .map(|(t, _)| t)
                    .collect()
            }
            other => unreachable!("{other} is checked to be syntactic"),
        };
        if kept.is_empty() {
            return Err(PerturbError::EmptyExtraction);
        }
        if ty.is_shuffled() {
            kept.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
        }
        Ok(kept.join(" "))
    }

    /// Dispatches on the spec's class. Semantic types are never generated here.
    pub fn perturb(
        &self,
        text: &str,
        spec: &PerturbationSpec,
        tags: Option<&[String]>,
    ) -> Result<String, PerturbError> {
        match spec.type_name.class() {
            PerturbationClass::Lexical => self.perturb_lexical(text, spec),
            PerturbationClass::Syntactic => self.perturb_syntactic(text, spec, tags),
            _ => Err(PerturbError::NotBuiltin(spec.type_name)),
        }
    }
}

fn check_class(spec: &PerturbationSpec, expected: PerturbationClass) -> Result<(), PerturbError> {
    let fixed = spec.type_name.class();
    if spec.class != fixed {
        return Err(PerturbError::SpecClass {
            ty: spec.type_name,
            spec: spec.class,
            fixed,
        });
    }
    if fixed != expected {
        return Err(PerturbError::WrongClass {
            ty: spec.type_name,
            expected,
            actual: fixed,
        });
    }
    Ok(())
}

pub fn perturb_lexical(text: &str, spec: &PerturbationSpec) -> Result<String, PerturbError> {
    Perturber::default().perturb_lexical(text, spec)
}

pub fn perturb_syntactic(
    text: &str,
    spec: &PerturbationSpec,
    tags: Option<&[String]>,
) -> Result<String, PerturbError> {
    Perturber::default().perturb_syntactic(text, spec, tags)
}

/// Stable per-record seed: first 8 bytes (LE) of
/// SHA-256(suite_seed LE || query_id || 0x1f || type_name).
pub fn derive_seed(suite_seed: u64, query_id: &str, ty: PerturbationType) -> u64 {
    let mut h = Sha256::new();
    h.update(suite_seed.to_le_bytes());
    h.update(query_id.as_bytes());
    h.update([0x1f]);
    h.update(ty.name().as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn perturbed_id(parent_id: &str, ty: &str) -> String {
    format!("{parent_id}::{ty}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagEntry {
    pub query_id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

/// POS tags per original query id.
#[derive(Debug, Clone, Default)]
pub struct TagTable {
    entries: HashMap<String, TagEntry>,
}

impl TagTable {
    pub fn from_entries(entries: Vec<TagEntry>) -> Result<Self, String> {
        let mut map = HashMap::new();
        for e in entries {
            if e.tokens.len() != e.tags.len() {
                return Err(format!(
                    "query {:?}: {} tokens but {} tags",
                    e.query_id,
                    e.tokens.len(),
                    e.tags.len()
                ));
            }
            let id = e.query_id.clone();
            if map.insert(id.clone(), e).is_some() {
                return Err(format!("duplicate tag entry for {id:?}"));
            }
        }
        Ok(Self { entries: map })
    }

    pub fn load(path: &Path) -> Result<Self, JsonlError> {
        let entries: Vec<TagEntry> = read_jsonl(path)?;
        Self::from_entries(entries).map_err(|message| JsonlError::Line {
            path: path.to_path_buf(),
            line: 0,
            message,
        })
    }

    pub fn get(&self, query_id: &str) -> Option<&TagEntry> {
        self.entries.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Tags for `record`, checked against its whitespace tokens.
    pub fn tags_for(&self, record: &QueryRecord) -> Result<Option<&[String]>, PerturbError> {
        let Some(e) = self.entries.get(&record.query_id) else {
            return Ok(None);
        };
        let text: Vec<String> = tokens(&record.text).into_iter().map(str::to_owned).collect();
        if text != e.tokens {
            return Err(PerturbError::TokenMismatch {
                table: e.tokens.clone(),
                text,
            });
        }
        Ok(Some(&e.tags))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "tool")]
pub enum Provenance {
    Builtin,
    External(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PerturbationSuite {
    pub records: Vec<QueryRecord>,
    pub provenance: BTreeMap<String, Provenance>,
}

impl PerturbationSuite {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        crate::embedstore::to_jsonl(&self.records)
    }

    fn sort(&mut self) {
        self.records.sort_by(|a, b| {
            (a.parent_id.as_deref(), a.perturbation_type.as_str())
                .cmp(&(b.parent_id.as_deref(), b.perturbation_type.as_str()))
        });
    }
}

/// A (query, type) pair that produced no record, and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoOpMarker {
    pub parent_id: String,
    pub perturbation_type: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteOutput {
    pub suite: PerturbationSuite,
    pub no_ops: Vec<NoOpMarker>,
}

/// One perturbed record per (original, type), minus recorded no-ops. Output
/// is sorted by (parent_id, type) regardless of generation order.
pub fn generate_suite(
    perturber: &Perturber,
    originals: &[QueryRecord],
    types: &[PerturbationType],
    suite_seed: u64,
    tags: Option<&TagTable>,
) -> Result<SuiteOutput, PerturbError> {
    if let Some(&t) = types.iter().find(|t| !t.is_builtin()) {
        return Err(PerturbError::NotBuiltin(t));
    }
    let jobs: Vec<(&QueryRecord, PerturbationType)> = originals
        .iter()
        .flat_map(|q| types.iter().map(move |&t| (q, t)))
        .collect();
    let run = |&(q, ty): &(&QueryRecord, PerturbationType)| -> Result<QueryRecord, NoOpMarker> {
        let seed = derive_seed(suite_seed, &q.query_id, ty);
        let spec = PerturbationSpec::new(ty, seed);
        let marker = |reason: String| NoOpMarker {
            parent_id: q.query_id.clone(),
            perturbation_type: ty.name().to_owned(),
            reason,
        };
        let q_tags = match tags.map(|t| t.tags_for(q)).transpose() {
            Ok(t) => t.flatten(),
            Err(e) => return Err(marker(e.to_string())),
        };
        let text = perturber
            .perturb(&q.text, &spec, q_tags)
            .map_err(|e| marker(e.to_string()))?;
        Ok(QueryRecord {
            query_id: perturbed_id(&q.query_id, ty.name()),
            text,
            origin: Origin::Perturbed,
            perturbation_class: ty.class(),
            perturbation_type: ty.name().to_owned(),
            parent_id: Some(q.query_id.clone()),
            seed: Some(seed),
        })
    };
    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        jobs.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = jobs.iter().map(run).collect();

    let mut out = SuiteOutput::default();
    for r in results {
        match r {
            Ok(rec) => out.suite.records.push(rec),
            Err(m) => out.no_ops.push(m),
        }
    }
    for t in types {
        out.suite.provenance.insert(t.name().to_owned(), Provenance::Builtin);
    }
    out.suite.sort();
    out.no_ops
        .sort_by(|a, b| (&a.parent_id, &a.perturbation_type).cmp(&(&b.parent_id, &b.perturbation_type)));
    Ok(out)
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("record {index} ({query_id:?}): {message}")]
    Shape {
        index: usize,
        query_id: String,
        message: String,
    },
    #[error("record {query_id:?}: parent {parent_id:?} is not a known original")]
    UnresolvableParent { query_id: String, parent_id: String },
    #[error("duplicate (parent_id, type) pair ({parent_id:?}, {ty:?})")]
    DuplicatePair { parent_id: String, ty: String },
    #[error("duplicate query_id {0:?}")]
    DuplicateId(String),
    #[error("record {query_id:?}: type {ty} belongs to class {expected}, found {found}")]
    ClassMismatch {
        query_id: String,
        ty: String,
        expected: PerturbationClass,
        found: PerturbationClass,
    },
}

/// Validates externally produced perturbed records against `originals`.
/// Unknown type names are accepted with any non-`none` class; known names
/// must carry their fixed class.
pub fn validate_suite(
    records: Vec<QueryRecord>,
    originals: &[QueryRecord],
    tool: &str,
) -> Result<PerturbationSuite, IngestError> {
    let parents: HashSet<&str> = originals.iter().map(|o| o.query_id.as_str()).collect();
    let mut pairs = HashSet::new();
    let mut ids = HashSet::new();
    let mut suite = PerturbationSuite::default();
    for (index, r) in records.into_iter().enumerate() {
        let shape_err = |message: String| IngestError::Shape {
            index,
            query_id: r.query_id.clone(),
            message,
        };
        r.check_shape().map_err(shape_err)?;
        if r.origin != Origin::Perturbed {
            return Err(shape_err("suite records must have origin perturbed".into()));
        }
        let parent = r.parent_id.clone().expect("checked by shape");
        if !parents.contains(parent.as_str()) {
            return Err(IngestError::UnresolvableParent {
                query_id: r.query_id,
                parent_id: parent,
            });
        }
        if let Ok(ty) = r.perturbation_type.parse::<PerturbationType>() {
            if ty.class() != r.perturbation_class {
                return Err(IngestError::ClassMismatch {
                    query_id: r.query_id,
                    ty: r.perturbation_type,
                    expected: ty.class(),
                    found: r.perturbation_class,
                });
            }
        }
        if !pairs.insert((parent.clone(), r.perturbation_type.clone())) {
            return Err(IngestError::DuplicatePair {
                parent_id: parent,
                ty: r.perturbation_type,
            });
        }
        if parents.contains(r.query_id.as_str()) || !ids.insert(r.query_id.clone()) {
            return Err(IngestError::DuplicateId(r.query_id));
        }
        suite
            .provenance
            .entry(r.perturbation_type.clone())
            .or_insert_with(|| Provenance::External(tool.to_owned()));
        suite.records.push(r);
    }
    suite.sort();
    Ok(suite)
}

pub fn ingest_suite(
    path: &Path,
    originals: &[QueryRecord],
    tool: &str,
) -> Result<PerturbationSuite, IngestError> {
    validate_suite(read_jsonl(path)?, originals, tool)
}
