//! CSV / JSONL serialization of rankings and metrics records.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::embedstore::{read_jsonl, to_jsonl, JsonlError};
use crate::metrics::MetricsRecord;
use crate::ranker::RankedList;

#[derive(Debug, Error)]
pub enum TableError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("{path}: {message}")]
    Csv { path: String, message: String },
    #[error("{path}: row {row}: {message}")]
    Row { path: String, row: usize, message: String },
}

pub fn rankings_to_jsonl(lists: &[RankedList]) -> String {
    let rounded: Vec<RankedList> = lists.iter().map(RankedList::rounded).collect();
    to_jsonl(&rounded)
}

pub fn read_rankings(path: &Path) -> Result<Vec<RankedList>, JsonlError> {
    let lists: Vec<RankedList> = read_jsonl(path)?;
    for (i, l) in lists.iter().enumerate() {
        let mut seen = BTreeSet::new();
        let fail = |message: String| JsonlError::Line {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if l.k == 0 || l.items.len() > l.k {
            return Err(fail(format!("query {:?}: {} items for k = {}", l.query_id, l.items.len(), l.k)));
        }
        for (id, _) in &l.items {
            if !seen.insert(id) {
                return Err(fail(format!("query {:?}: duplicate corpus id {id:?}", l.query_id)));
            }
        }
        if l.items.windows(2).any(|w| w[0].1 < w[1].1) {
            return Err(fail(format!("query {:?}: scores are not descending", l.query_id)));
        }
    }
    Ok(lists)
}

pub const FIXED_LEADING: [&str; 5] = ["model_id", "query_id", "parent_id", "class", "type"];
pub const FIXED_TRAILING: [&str; 6] = [
    "rbo",
    "instability",
    "intra_distance",
    "inter_distance",
    "brittleness",
    "flags",
];

pub fn overlap_column(k: usize) -> String {
    format!("overlap@{k}")
}

/// Metrics table with one `overlap@k` column per k in `ks`. Cells for a k
/// a record does not carry are left empty.
pub fn metrics_to_csv(records: &[MetricsRecord], ks: &[usize]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<String> = FIXED_LEADING.iter().map(|s| s.to_string()).collect();
    header.extend(ks.iter().map(|&k| overlap_column(k)));
    header.extend(FIXED_TRAILING.iter().map(|s| s.to_string()));
    w.write_record(&header).expect("in-memory write");
    for r in records {
        let mut row = vec![
            r.model_id.clone(),
            r.query_id.clone(),
            r.parent_id.clone(),
            r.perturbation_class.to_string(),
            r.perturbation_type.clone(),
        ];
        row.extend(ks.iter().map(|k| r.overlap_at_k.get(k).map(f64::to_string).unwrap_or_default()));
        row.extend([
            r.rbo.to_string(),
            r.instability.to_string(),
            r.intra_distance.to_string(),
            r.inter_distance.to_string(),
            r.brittleness.to_string(),
            r.flags.to_string(),
        ]);
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Union of overlap ks across records, ascending.
pub fn overlap_ks(records: &[MetricsRecord]) -> Vec<usize> {
    records
        .iter()
        .flat_map(|r| r.overlap_at_k.keys().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn metrics_to_jsonl(records: &[MetricsRecord]) -> String {
    to_jsonl(records)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRecord>, TableError> {
    let p = path.display().to_string();
    let csv_err = |e: csv::Error| TableError::Csv {
        path: p.clone(),
        message: e.to_string(),
    };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| TableError::Csv {
            path: p.clone(),
            message: format!("missing column {name:?}"),
        })
    };
    let fixed: Vec<usize> = FIXED_LEADING
        .iter()
        .chain(FIXED_TRAILING.iter())
        .map(|n| col(n))
        .collect::<Result<_, _>>()?;
    let ks: Vec<(usize, usize)> = header
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("overlap@").and_then(|k| k.parse().ok()).map(|k| (k, i)))
        .collect();
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let fail = |message: String| TableError::Row {
            path: p.clone(),
            row: row + 1,
            message,
        };
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |i: usize| -> Result<f64, TableError> {
            field(i)
                .parse::<f64>()
                .map_err(|e| fail(format!("column {}: {e}", header[i])))
        };
        let mut overlap_at_k = BTreeMap::new();
        for &(k, i) in &ks {
            if !field(i).is_empty() {
                overlap_at_k.insert(k, num(i)?);
            }
        }
        out.push(MetricsRecord {
            model_id: field(fixed[0]).to_owned(),
            query_id: field(fixed[1]).to_owned(),
            parent_id: field(fixed[2]).to_owned(),
            perturbation_class: field(fixed[3]).parse().map_err(fail)?,
            perturbation_type: field(fixed[4]).to_owned(),
            overlap_at_k,
            rbo: num(fixed[5])?,
            instability: num(fixed[6])?,
            intra_distance: num(fixed[7])?,
            inter_distance: num(fixed[8])?,
            brittleness: num(fixed[9])?,
            flags: field(fixed[10]).parse().map_err(fail)?,
        });
    }
    Ok(out)
}

/// Reads metrics from `.csv` or JSON Lines (any other extension).
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, TableError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_metrics_csv(path)
    } else {
        Ok(read_jsonl(path)?)
    }
}
