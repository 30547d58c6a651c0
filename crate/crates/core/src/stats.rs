//! Aggregation of metrics records into summary tables, a fixed-effects
//! regression, the instability/distance scatter and the brittleness heatmap.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::metrics::{Flags, MetricsRecord};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("no records")]
    Empty,
    #[error("unknown factor {0:?} (model_id | perturbation_class | perturbation_type)")]
    UnknownFactor(String),
    #[error("insufficient factor levels: {factor} has {levels} level(s), need at least 2")]
    InsufficientLevels { factor: &'static str, levels: usize },
    #[error("{n} observations cannot identify {params} parameters")]
    TooFewObservations { n: usize, params: usize },
    #[error("rank-deficient design; aliased levels: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("inter-query distance must be positive, got {0}")]
    NonPositiveInter(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    ModelId,
    PerturbationClass,
    PerturbationType,
}

impl Factor {
    pub fn name(self) -> &'static str {
        match self {
            Self::ModelId => "model_id",
            Self::PerturbationClass => "perturbation_class",
            Self::PerturbationType => "perturbation_type",
        }
    }

    pub fn level(self, r: &MetricsRecord) -> String {
        match self {
            Self::ModelId => r.model_id.clone(),
            Self::PerturbationClass => r.perturbation_class.to_string(),
            Self::PerturbationType => r.perturbation_type.clone(),
        }
    }
}

impl FromStr for Factor {
    type Err = StatsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "model_id" | "model" => Ok(Self::ModelId),
            "perturbation_class" | "class" => Ok(Self::PerturbationClass),
            "perturbation_type" | "type" => Ok(Self::PerturbationType),
            _ => Err(StatsError::UnknownFactor(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean over values summed in ascending order, so the result does not depend
/// on record order.
pub fn ordered_mean(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

impl Stat {
    /// Sample statistics (n - 1 denominator; std is 0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        assert!(!values.is_empty());
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let mean = v.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            (v[n / 2 - 1] + v[n / 2]) / 2.0
        };
        let std = if n < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            count: n,
            mean,
            median,
            std,
            min: v[0],
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub key: Vec<String>,
    pub instability: Stat,
    pub brittleness: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub factors: Vec<Factor>,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn get(&self, key: &[&str]) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.key.iter().map(String::as_str).eq(key.iter().copied()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<String> = self.factors.iter().map(|f| f.name().to_owned()).collect();
        for metric in ["instability", "brittleness"] {
            for s in ["count", "mean", "median", "std", "min", "max"] {
                header.push(format!("{metric}_{s}"));
            }
        }
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut cells: Vec<String> = row.key.iter().map(|k| csv_field(k)).collect();
            for s in [&row.instability, &row.brittleness] {
                cells.push(s.count.to_string());
                for v in [s.mean, s.median, s.std, s.min, s.max] {
                    cells.push(v.to_string());
                }
            }
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn summarize(records: &[MetricsRecord], group_by: &[Factor]) -> Result<SummaryTable, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut groups: BTreeMap<Vec<String>, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        let key = group_by.iter().map(|f| f.level(r)).collect();
        let g = groups.entry(key).or_default();
        g.0.push(r.instability);
        g.1.push(r.brittleness);
    }
    Ok(SummaryTable {
        factors: group_by.to_vec(),
        rows: groups
            .into_iter()
            .map(|(key, (inst, brit))| SummaryRow {
                key,
                instability: Stat::of(&inst),
                brittleness: Stat::of(&brit),
            })
            .collect(),
    })
}

pub fn summarize_by_names(records: &[MetricsRecord], group_by: &[&str]) -> Result<SummaryTable, StatsError> {
    let factors = group_by.iter().map(|s| s.parse()).collect::<Result<Vec<Factor>, _>>()?;
    summarize(records, &factors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Instability,
    Brittleness,
}

impl Response {
    fn value(self, r: &MetricsRecord) -> f64 {
        match self {
            Self::Instability => r.instability,
            Self::Brittleness => r.brittleness,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub std_error: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub response: Response,
    pub intercept: Coefficient,
    /// Keyed `factor:level`, one per non-reference level.
    pub coefficients: BTreeMap<String, Coefficient>,
    pub n: usize,
    pub df_residual: usize,
    pub r_squared: f64,
    pub residual_std_error: f64,
    pub reference_levels: BTreeMap<String, String>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

fn levels(records: &[MetricsRecord], f: Factor) -> Vec<String> {
    records.iter().map(|r| f.level(r)).collect::<BTreeSet<_>>().into_iter().collect()
}

/// OLS of the response on dummy-coded model and perturbation class, with the
/// alphabetically first level of each factor as reference. Solved by
/// Householder QR; p-values are two-sided under Student's t.
pub fn fit_fixed_effects(records: &[MetricsRecord], response: Response) -> Result<RegressionResult, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let factors = [Factor::ModelId, Factor::PerturbationClass];
    let mut columns: Vec<(Factor, String)> = Vec::new();
    let mut reference_levels = BTreeMap::new();
    for f in factors {
        let lv = levels(records, f);
        if lv.len() < 2 {
            return Err(StatsError::InsufficientLevels {
                factor: f.name(),
                levels: lv.len(),
            });
        }
        reference_levels.insert(f.name().to_owned(), lv[0].clone());
        columns.extend(lv.into_iter().skip(1).map(|l| (f, l)));
    }
    let n = records.len();
    let params = columns.len() + 1;
    if n <= params {
        return Err(StatsError::TooFewObservations { n, params });
    }

    let x: DMatrix<f64> = DMatrix::from_fn(n, params, |i, j| {
        if j == 0 {
            1.0
        } else {
            let (f, level) = &columns[j - 1];
            if f.level(&records[i]) == *level {
                1.0
            } else {
                0.0
            }
        }
    });
    let y = DVector::from_iterator(n, records.iter().map(|r| response.value(r)));

    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..params).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    let aliased: Vec<String> = (0..params)
        .filter(|&j| r[(j, j)].abs() <= 1e-10 * scale.max(1.0) * (n as f64).sqrt())
        .map(|j| {
            if j == 0 {
                "(intercept)".to_owned()
            } else {
                let (f, l) = &columns[j - 1];
                format!("{}:{l}", f.name())
            }
        })
        .collect();
    if !aliased.is_empty() {
        return Err(StatsError::RankDeficient(aliased));
    }
    let qty = qr.q().transpose() * &y;
    let beta = r.solve_upper_triangular(&qty).expect("full-rank R");
    let fitted = &x * &beta;
    let residuals: Vec<f64> = (&y - &fitted).iter().copied().collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let y_mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let df = n - params;
    let sigma2 = rss / df as f64;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(params, params))
        .expect("full-rank R");
    let t_dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let coef = |j: usize| {
        let se = (sigma2 * r_inv.row(j).iter().map(|v| v * v).sum::<f64>()).sqrt();
        let estimate = beta[j];
        let t = estimate / se;
        let p_value = if t.is_nan() { f64::NAN } else { 2.0 * t_dist.sf(t.abs()) };
        Coefficient {
            estimate,
            std_error: se,
            t_statistic: t,
            p_value,
        }
    };
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RegressionResult {
        response,
        intercept: coef(0),
        coefficients: columns
            .iter()
            .enumerate()
            .map(|(i, (f, l))| (format!("{}:{l}", f.name()), coef(i + 1)))
            .collect(),
        n,
        df_residual: df,
        r_squared,
        residual_std_error: sigma2.sqrt(),
        reference_levels,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub model_id: String,
    pub normalized_distance: f64,
    pub instability: f64,
    pub flags: Flags,
}

/// Intra-query distance divided by `inter`, paired with instability.
pub fn scatter_table(records: &[MetricsRecord], inter: f64) -> Result<Vec<ScatterRow>, StatsError> {
    if inter.is_nan() || inter <= 0.0 {
        return Err(StatsError::NonPositiveInter(inter));
    }
    Ok(records
        .iter()
        .map(|r| ScatterRow {
            model_id: r.model_id.clone(),
            normalized_distance: r.intra_distance / inter,
            instability: r.instability,
            flags: r.flags,
        })
        .collect())
}

/// Scatter rows normalized by each record's own inter-query distance.
pub fn scatter_by_record(records: &[MetricsRecord]) -> Result<Vec<ScatterRow>, StatsError> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        out.extend(scatter_table(std::slice::from_ref(r), r.inter_distance)?);
    }
    Ok(out)
}

pub fn scatter_to_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from("model_id,normalized_distance,instability,flags\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&r.model_id),
            r.normalized_distance,
            r.instability,
            r.flags
        );
    }
    out
}

/// Marker written for a (model, class) cell with no records.
pub const MISSING: &str = "NA";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub models: Vec<String>,
    pub classes: Vec<String>,
    /// `cells[model][class]`; `None` when the cell has no records.
    pub cells: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

pub fn brittleness_heatmap(records: &[MetricsRecord]) -> Result<Heatmap, StatsError> {
    if records.is_empty() {
        return Err(StatsError::Empty);
    }
    let models = levels(records, Factor::ModelId);
    let classes = levels(records, Factor::PerturbationClass);
    let mut values = vec![vec![Vec::new(); classes.len()]; models.len()];
    for r in records {
        let i = models.binary_search(&r.model_id).expect("level present");
        let j = classes
            .binary_search(&r.perturbation_class.to_string())
            .expect("level present");
        values[i][j].push(r.brittleness);
    }
    Ok(Heatmap {
        cells: values
            .iter()
            .map(|row| row.iter().map(|v| (!v.is_empty()).then(|| ordered_mean(v))).collect())
            .collect(),
        counts: values.iter().map(|row| row.iter().map(Vec::len).collect()).collect(),
        models,
        classes,
    })
}

impl Heatmap {
    pub fn missing_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.is_none()).count()
    }

    fn cell_text(v: Option<f64>) -> String {
        v.map_or_else(|| MISSING.to_owned(), |v| v.to_string())
    }

    /// Matrix layout: one row per model, one column per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model_id");
        for c in &self.classes {
            out.push(',');
            out.push_str(&csv_field(c));
        }
        out.push('\n');
        for (m, row) in self.models.iter().zip(&self.cells) {
            out.push_str(&csv_field(m));
            for v in row {
                out.push(',');
                out.push_str(&Self::cell_text(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_long_csv(&self) -> String {
        let mut out = String::from("model_id,perturbation_class,mean_brittleness,count\n");
        for (i, m) in self.models.iter().enumerate() {
            for (j, c) in self.classes.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    csv_field(m),
                    csv_field(c),
                    Self::cell_text(self.cells[i][j]),
                    self.counts[i][j]
                );
            }
        }
        out
    }
}
