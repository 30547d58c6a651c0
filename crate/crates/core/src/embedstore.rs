//! Embedding exchange format and vector geometry helpers.
//!
//! An `.emb` file carries a fixed 24-byte little-endian header followed by a
//! row-major `f32` payload. Row identifiers live in a UTF-8 sidecar next to
//! it (same stem, `.ids` extension), one id per LF-terminated line.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "EMB1"
//! 4       4     version (u32, = 1)
//! 8       8     count   (u64)
//! 16      4     dim     (u32)
//! 20      4     flags   (u32, bit 0 = normalized)
//! 24      ...   count * dim * f32
//! ```

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const FLAG_NORMALIZED: u32 = 1;

/// Rows flagged as normalized must have a norm within this distance of 1.
pub const NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic at byte 0: expected \"EMB1\", found {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("unsupported format version {version} at byte 4")]
    UnsupportedVersion { version: u32 },
    #[error("header truncated: {len} bytes, need {HEADER_LEN}")]
    TruncatedHeader { len: usize },
    #[error("dim must be positive (byte 16)")]
    ZeroDim,
    #[error("payload truncated at byte {offset}: header declares {expected} payload bytes, found {found}")]
    TruncatedPayload {
        offset: usize,
        expected: u64,
        found: u64,
    },
    #[error("{extra} trailing bytes after payload end at byte {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("non-finite value in row {row} (id {id:?}), column {col}, byte offset {offset}")]
    NonFinite {
        row: usize,
        col: usize,
        offset: usize,
        id: String,
    },
    #[error("id count mismatch: header declares {header} rows, ids sidecar has {sidecar} lines")]
    IdCountMismatch { header: u64, sidecar: usize },
    #[error("ids sidecar is not LF-terminated after line {line}")]
    UnterminatedIds { line: usize },
    #[error("empty id on sidecar line {line}")]
    EmptyId { line: usize },
    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },
    #[error("ids sidecar is not valid UTF-8: {0}")]
    IdsNotUtf8(std::string::FromUtf8Error),
    #[error("row {id:?} flagged normalized but has norm {norm}")]
    NotNormalized { id: String, norm: f64 },
    #[error("row {id:?} has zero norm")]
    ZeroNorm { id: String },
    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("vector data length {len} is not {rows} x {dim}")]
    Shape { len: usize, rows: usize, dim: usize },
    #[error("unknown id {0:?}")]
    UnknownId(String),
    #[error("need at least 2 ids for a pairwise mean, got {0}")]
    SubsetTooSmall(usize),
}

/// Dense `count x dim` matrix of `f32` rows, each addressed by a unique id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    ids: Vec<String>,
    dim: usize,
    vectors: Vec<f32>,
    normalized: bool,
    index: HashMap<String, usize>,
}

impl EmbeddingStore {
    /// Builds a store from parts, enforcing every store invariant.
    pub fn new(
        ids: Vec<String>,
        dim: usize,
        vectors: Vec<f32>,
        normalized: bool,
    ) -> Result<Self, StoreError> {
        if dim == 0 {
            return Err(StoreError::ZeroDim);
        }
        if vectors.len() != ids.len() * dim {
            return Err(StoreError::Shape {
                len: vectors.len(),
                rows: ids.len(),
                dim,
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(StoreError::EmptyId { line: row + 1 });
            }
            if index.insert(id.clone(), row).is_some() {
                return Err(StoreError::DuplicateId { id: id.clone() });
            }
        }
        for (i, v) in vectors.iter().enumerate() {
            if !v.is_finite() {
                let row = i / dim;
                return Err(StoreError::NonFinite {
                    row,
                    col: i % dim,
                    offset: HEADER_LEN + i * 4,
                    id: ids[row].clone(),
                });
            }
        }
        let store = Self {
            ids,
            dim,
            vectors,
            normalized,
            index,
        };
        if normalized {
            for (row, id) in store.ids.iter().enumerate() {
                let norm = l2_norm(store.row(row));
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(StoreError::NotNormalized {
                        id: id.clone(),
                        norm,
                    });
                }
            }
        }
        Ok(store)
    }

    /// Convenience constructor from nested rows.
    pub fn from_rows<S: Into<String>>(
        rows: impl IntoIterator<Item = (S, Vec<f32>)>,
    ) -> Result<Self, StoreError> {
        let mut ids = Vec::new();
        let mut vectors = Vec::new();
        let mut dim = None;
        for (id, row) in rows {
            let d = *dim.get_or_insert(row.len());
            if row.len() != d {
                return Err(StoreError::DimMismatch {
                    left: d,
                    right: row.len(),
                });
            }
            ids.push(id.into());
            vectors.extend(row);
        }
        Self::new(ids, dim.unwrap_or(1), vectors, false)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.vectors.chunks_exact(self.dim)
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|r| self.row(r))
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.vectors
    }
}

/// Sidecar path for an embedding file: same stem, `.ids` extension.
pub fn ids_path(path: &Path) -> PathBuf {
    path.with_extension("ids")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Decodes an EMB1 byte buffer plus its ids, validating the payload.
pub fn decode_store(bytes: &[u8], ids: Vec<String>) -> Result<EmbeddingStore, StoreError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(StoreError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::TruncatedHeader { len: bytes.len() });
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion { version });
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let dim = u32_at(16) as usize;
    let flags = u32_at(20);
    if dim == 0 {
        return Err(StoreError::ZeroDim);
    }
    let expected = count.saturating_mul(dim as u64).saturating_mul(4);
    let found = (bytes.len() - HEADER_LEN) as u64;
    if found < expected {
        return Err(StoreError::TruncatedPayload {
            offset: bytes.len(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(StoreError::TrailingBytes {
            offset: HEADER_LEN + expected as usize,
            extra: (found - expected) as usize,
        });
    }
    if ids.len() as u64 != count {
        return Err(StoreError::IdCountMismatch {
            header: count,
            sidecar: ids.len(),
        });
    }
    let vectors: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingStore::new(ids, dim, vectors, flags & FLAG_NORMALIZED != 0)
}

/// Parses an ids sidecar: exactly one id per LF-terminated line.
pub fn parse_ids(bytes: Vec<u8>) -> Result<Vec<String>, StoreError> {
    let text = String::from_utf8(bytes).map_err(StoreError::IdsNotUtf8)?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let mut lines: Vec<&str> = text.split('\n').collect();
    // a well-formed file ends with LF, leaving one empty trailing piece
    if lines.pop() != Some("") {
        return Err(StoreError::UnterminatedIds { line: lines.len() });
    }
    let mut ids = Vec::with_capacity(lines.len());
    for (i, line) in lines.into_iter().enumerate() {
        if line.is_empty() {
            return Err(StoreError::EmptyId { line: i + 1 });
        }
        ids.push(line.to_owned());
    }
    Ok(ids)
}

pub fn load_store(path: impl AsRef<Path>) -> Result<EmbeddingStore, StoreError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    // check the header before touching the sidecar so bad files fail on magic first
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(StoreError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    let ids_file = ids_path(path);
    let ids = parse_ids(fs::read(&ids_file).map_err(io_err(&ids_file))?)?;
    decode_store(&bytes, ids)
}

pub fn encode_store(store: &EmbeddingStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + store.vectors.len() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u64).to_le_bytes());
    out.extend_from_slice(&(store.dim as u32).to_le_bytes());
    let flags = if store.normalized { FLAG_NORMALIZED } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    for v in &store.vectors {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Writes `path` and its `.ids` sidecar.
pub fn write_store(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let path = path.as_ref();
    fs::write(path, encode_store(store)).map_err(io_err(path))?;
    let ids_file = ids_path(path);
    let mut f = std::io::BufWriter::new(fs::File::create(&ids_file).map_err(io_err(&ids_file))?);
    for id in &store.ids {
        writeln!(f, "{id}").map_err(io_err(&ids_file))?;
    }
    f.flush().map_err(io_err(&ids_file))
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum()
}

/// Rescales every row to unit length. Zero rows are rejected by id.
pub fn normalize(store: &EmbeddingStore) -> Result<EmbeddingStore, StoreError> {
    let mut vectors = Vec::with_capacity(store.vectors.len());
    for (row, v) in store.rows().enumerate() {
        let norm = l2_norm(v);
        if norm == 0.0 {
            return Err(StoreError::ZeroNorm {
                id: store.ids[row].clone(),
            });
        }
        vectors.extend(v.iter().map(|&x| (f64::from(x) / norm) as f32));
    }
    Ok(EmbeddingStore {
        ids: store.ids.clone(),
        dim: store.dim,
        vectors,
        normalized: true,
        index: store.index.clone(),
    })
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
pub fn cosine_distance(u: &[f32], v: &[f32]) -> Result<f64, StoreError> {
    if u.len() != v.len() {
        return Err(StoreError::DimMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (l2_norm(u), l2_norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(StoreError::ZeroVector);
    }
    Ok((1.0 - dot(u, v) / (nu * nv)).clamp(0.0, 2.0))
}

/// Mean cosine distance over all unordered pairs of the given ids.
pub fn mean_pairwise_distance<S: AsRef<str>>(
    store: &EmbeddingStore,
    id_subset: &[S],
) -> Result<f64, StoreError> {
    if id_subset.len() < 2 {
        return Err(StoreError::SubsetTooSmall(id_subset.len()));
    }
    let rows = id_subset
        .iter()
        .map(|id| {
            store
                .get(id.as_ref())
                .ok_or_else(|| StoreError::UnknownId(id.as_ref().to_owned()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            sum += cosine_distance(rows[i], rows[j])?;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Perturbed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationClass {
    None,
    Lexical,
    Syntactic,
    Semantic,
}

impl PerturbationClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Lexical => "lexical",
            Self::Syntactic => "syntactic",
            Self::Semantic => "semantic",
        }
    }
}

impl std::fmt::Display for PerturbationClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PerturbationClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "lexical" => Ok(Self::Lexical),
            "syntactic" => Ok(Self::Syntactic),
            "semantic" => Ok(Self::Semantic),
            _ => Err(format!("unknown perturbation class {s:?}")),
        }
    }
}

/// One query text, either an original or a perturbation of one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRecord {
    pub query_id: String,
    pub text: String,
    pub origin: Origin,
    pub perturbation_class: PerturbationClass,
    pub perturbation_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl QueryRecord {
    pub fn original(query_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            query_id: query_id.into(),
            text: text.into(),
            origin: Origin::Original,
            perturbation_class: PerturbationClass::None,
            perturbation_type: "none".to_owned(),
            parent_id: None,
            seed: None,
        }
    }

    /// Checks the origin / class / parent coupling of a single record.
    pub fn check_shape(&self) -> Result<(), String> {
        let original = self.origin == Origin::Original;
        let unclassed = self.perturbation_class == PerturbationClass::None;
        let orphan = self.parent_id.is_none();
        if self.query_id.is_empty() {
            return Err("empty query_id".into());
        }
        if original != unclassed || original != orphan {
            return Err(format!(
                "query {:?}: origin, perturbation_class and parent_id disagree \
                 (original requires class none and no parent; perturbed requires both)",
                self.query_id
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}: {message}")]
    Line {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Reads a JSON Lines file, reporting the 1-based line of any parse failure.
/// Blank lines are skipped.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = fs::File::open(path).map_err(|source| JsonlError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| JsonlError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item).expect("serializable record"));
        out.push('\n');
    }
    out
}

/// Reads original queries and validates their shape and id uniqueness.
pub fn read_originals(path: &Path) -> Result<Vec<QueryRecord>, JsonlError> {
    let records: Vec<QueryRecord> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        let fail = |message: String| JsonlError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        r.check_shape().map_err(fail)?;
        if r.origin != Origin::Original {
            return Err(fail(format!("query {:?} is not an original", r.query_id)));
        }
        if !seen.insert(r.query_id.as_str()) {
            return Err(fail(format!("duplicate query_id {:?}", r.query_id)));
        }
    }
    Ok(records)
}
