//! CSV ingestion with per-feature binning into a [`CountTable`].
//!
//! A config declares the response, protected and unprotected features, each
//! with a binning rule that turns raw CSV fields into one category:
//!
//! ```json
//! {
//!   "response": {"name": "income", "rule": "map", "column": "income",
//!                "categories": ["low", "high"], "map": {"<=50K": "low", ">50K": "high"}},
//!   "protected": [{"name": "sex", "rule": "categorical", "column": "sex",
//!                  "categories": ["Male", "Female"]}],
//!   "unprotected": [{"name": "age", "rule": "intervals", "column": "age",
//!                    "bins": [{"label": "young", "upper": 30}, {"label": "older", "lower": 30}]}],
//!   "missing": {"tokens": ["?", ""], "policy": "skip"},
//!   "unmapped": "error"
//! }
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{Feature, Schema};
use crate::table::CountTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub response: FeatureSpec,
    pub protected: Vec<FeatureSpec>,
    #[serde(default)]
    pub unprotected: Vec<FeatureSpec>,
    #[serde(default)]
    pub missing: MissingPolicy,
    /// What to do with a present value no rule maps.
    #[serde(default)]
    pub unmapped: RowPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub rule: BinningRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BinningRule {
    /// Raw values are the categories. Values are trimmed before lookup.
    Categorical { column: String, categories: Vec<String> },
    /// Raw values merged onto categories; `default` catches everything else.
    Map {
        column: String,
        categories: Vec<String>,
        map: BTreeMap<String, String>,
        #[serde(default)]
        default: Option<String>,
    },
    /// Numeric values binned into half-open intervals `[lower, upper)`.
    Intervals { column: String, bins: Vec<IntervalBin> },
    /// One-hot columns: the category of the single column holding a truthy
    /// value, or `otherwise` when none does.
    Indicators {
        columns: Vec<IndicatorColumn>,
        #[serde(default)]
        otherwise: Option<String>,
        #[serde(default = "default_truthy")]
        truthy: Vec<String>,
    },
}

fn default_truthy() -> Vec<String> {
    vec!["1".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalBin {
    pub label: String,
    /// Inclusive; unbounded when absent.
    #[serde(default)]
    pub lower: Option<f64>,
    /// Exclusive; unbounded when absent.
    #[serde(default)]
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorColumn {
    pub column: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingPolicy {
    pub tokens: Vec<String>,
    pub policy: RowPolicy,
}

impl Default for MissingPolicy {
    fn default() -> Self {
        MissingPolicy {
            tokens: vec!["".into(), "?".into(), "NA".into()],
            policy: RowPolicy::Skip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowPolicy {
    /// Reject the record and count it in the report.
    Skip,
    /// Abort ingestion.
    #[default]
    Error,
}

impl IngestConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// The schema the config produces, after validating every rule.
    pub fn schema(&self) -> Result<Schema> {
        let feature = |spec: &FeatureSpec| -> Result<Feature> {
            spec.rule.validate(&spec.name)?;
            Ok(Feature::new(spec.name.clone(), spec.rule.categories()))
        };
        Schema::new(
            feature(&self.response)?,
            self.protected.iter().map(feature).collect::<Result<_>>()?,
            self.unprotected.iter().map(feature).collect::<Result<_>>()?,
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    fn specs(&self) -> impl Iterator<Item = &FeatureSpec> {
        std::iter::once(&self.response)
            .chain(&self.protected)
            .chain(&self.unprotected)
    }
}

impl BinningRule {
    /// Categories in code order.
    pub fn categories(&self) -> Vec<String> {
        match self {
            BinningRule::Categorical { categories, .. } | BinningRule::Map { categories, .. } => categories.clone(),
            BinningRule::Intervals { bins, .. } => bins.iter().map(|b| b.label.clone()).collect(),
            BinningRule::Indicators { columns, otherwise, .. } => {
                let mut cats: Vec<String> = Vec::new();
                for c in columns.iter().map(|c| &c.category).chain(otherwise) {
                    if !cats.contains(c) {
                        cats.push(c.clone());
                    }
                }
                cats
            }
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("feature '{name}': {msg}")));
        match self {
            BinningRule::Categorical { .. } => {}
            BinningRule::Map {
                categories, map, default, ..
            } => {
                for target in map.values().chain(default) {
                    if !categories.contains(target) {
                        return bad(format!("map target '{target}' is not a declared category"));
                    }
                }
            }
            BinningRule::Intervals { bins, .. } => {
                if bins.is_empty() {
                    return bad("no bins".into());
                }
                for b in bins {
                    if let (Some(lo), Some(hi)) = (b.lower, b.upper) {
                        if !(lo < hi) {
                            return bad(format!("bin '{}' is empty", b.label));
                        }
                    }
                }
                for (i, pair) in bins.windows(2).enumerate() {
                    match (pair[0].upper, pair[1].lower) {
                        (Some(hi), Some(lo)) if hi <= lo => {}
                        _ => return bad(format!("bins {i} and {} overlap or are out of order", i + 1)),
                    }
                }
            }
            BinningRule::Indicators { columns, .. } => {
                if columns.is_empty() {
                    return bad("no indicator columns".into());
                }
            }
        }
        Ok(())
    }

    fn columns(&self) -> Vec<&str> {
        match self {
            BinningRule::Categorical { column, .. }
            | BinningRule::Map { column, .. }
            | BinningRule::Intervals { column, .. } => vec![column.as_str()],
            BinningRule::Indicators { columns, .. } => columns.iter().map(|c| c.column.as_str()).collect(),
        }
    }
}

/// Records read, accepted and rejected, plus per-feature category tallies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records_read: u64,
    pub accepted: u64,
    pub rejected_missing: u64,
    pub rejected_unmapped: u64,
    pub categories: BTreeMap<String, BTreeMap<String, u64>>,
}

enum Outcome {
    Code(usize),
    Missing,
    Unmapped(String),
}

/// A rule bound to header positions.
struct Bound<'a> {
    rule: &'a BinningRule,
    positions: Vec<usize>,
    categories: Vec<String>,
}

impl Bound<'_> {
    fn code(&self, record: &csv::StringRecord, missing: &[String]) -> Outcome {
        let field = |i: usize| record.get(self.positions[i]).unwrap_or("").trim();
        let is_missing = |v: &str| missing.iter().any(|t| t == v);
        let code_of = |c: &str| self.categories.iter().position(|k| k == c);
        match self.rule {
            BinningRule::Categorical { .. } => {
                let v = field(0);
                if is_missing(v) {
                    return Outcome::Missing;
                }
                code_of(v).map_or_else(|| Outcome::Unmapped(v.to_string()), Outcome::Code)
            }
            BinningRule::Map { map, default, .. } => {
                let v = field(0);
                if is_missing(v) {
                    return Outcome::Missing;
                }
                match map.get(v).or(default.as_ref()) {
                    Some(c) => Outcome::Code(code_of(c).expect("validated")),
                    None => Outcome::Unmapped(v.to_string()),
                }
            }
            BinningRule::Intervals { bins, .. } => {
                let v = field(0);
                if is_missing(v) {
                    return Outcome::Missing;
                }
                let Ok(x) = v.parse::<f64>() else {
                    return Outcome::Unmapped(v.to_string());
                };
                bins.iter()
                    .position(|b| b.lower.is_none_or(|lo| x >= lo) && b.upper.is_none_or(|hi| x < hi))
                    .map_or_else(|| Outcome::Unmapped(v.to_string()), Outcome::Code)
            }
            BinningRule::Indicators {
                columns,
                otherwise,
                truthy,
            } => {
                let mut hit = None;
                for (i, c) in columns.iter().enumerate() {
                    let v = field(i);
                    if is_missing(v) {
                        return Outcome::Missing;
                    }
                    if truthy.iter().any(|t| t == v) {
                        if hit.is_some() {
                            return Outcome::Unmapped(format!("several indicators set ({})", c.column));
                        }
                        hit = Some(&c.category);
                    }
                }
                match hit.or(otherwise.as_ref()) {
                    Some(c) => Outcome::Code(code_of(c).expect("declared")),
                    None => Outcome::Unmapped("no indicator set".into()),
                }
            }
        }
    }
}

/// Keeps only records whose `column` equals `value` (after trimming).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowFilter {
    pub column: String,
    pub value: String,
}

/// Reads `csv_path` and tallies every accepted record.
pub fn ingest(csv_path: &Path, config: &IngestConfig) -> Result<(CountTable, IngestReport)> {
    ingest_filtered(csv_path, config, None)
}

/// [`ingest`] restricted to the records passing `filter`. Other records are
/// not counted as read.
pub fn ingest_filtered(csv_path: &Path, config: &IngestConfig, filter: Option<&RowFilter>) -> Result<(CountTable, IngestReport)> {
    let file = File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    ingest_reader_filtered(file, config, filter)
}

/// [`ingest`] over any reader.
pub fn ingest_reader<R: std::io::Read>(reader: R, config: &IngestConfig) -> Result<(CountTable, IngestReport)> {
    ingest_reader_filtered(reader, config, None)
}

pub fn ingest_reader_filtered<R: std::io::Read>(
    reader: R,
    config: &IngestConfig,
    filter: Option<&RowFilter>,
) -> Result<(CountTable, IngestReport)> {
    let schema = Arc::new(config.schema()?);
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Ingest {
            row: 1,
            message: format!("cannot read header: {e}"),
        })?
        .clone();

    let mut bound = Vec::new();
    for spec in config.specs() {
        let mut positions = Vec::new();
        for col in spec.rule.columns() {
            let pos = headers.iter().position(|h| h.trim() == col).ok_or_else(|| Error::Ingest {
                row: 1,
                message: format!("feature '{}' binds to column '{col}', which the header lacks", spec.name),
            })?;
            positions.push(pos);
        }
        bound.push(Bound {
            rule: &spec.rule,
            positions,
            categories: spec.rule.categories(),
        });
    }

    let filter = match filter {
        None => None,
        Some(f) => Some((
            headers.iter().position(|h| h.trim() == f.column).ok_or_else(|| Error::Ingest {
                row: 1,
                message: format!("filter column '{}' is not in the header", f.column),
            })?,
            f.value.as_str(),
        )),
    };

    let mut counts = CountTable::zeros(schema.clone());
    let mut report = IngestReport {
        records_read: 0,
        accepted: 0,
        rejected_missing: 0,
        rejected_unmapped: 0,
        categories: BTreeMap::new(),
    };
    let mut tallies: Vec<Vec<u64>> = bound.iter().map(|b| vec![0; b.categories.len()]).collect();
    let mut codes = vec![0usize; bound.len()];
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| Error::Ingest {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        if let Some((pos, value)) = filter {
            if record.get(pos).map(str::trim) != Some(value) {
                continue;
            }
        }
        report.records_read += 1;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let mut rejected = false;
        for (k, b) in bound.iter().enumerate() {
            match b.code(&record, &config.missing.tokens) {
                Outcome::Code(c) => codes[k] = c,
                Outcome::Missing => {
                    if config.missing.policy == RowPolicy::Error {
                        return Err(Error::Ingest {
                            row,
                            message: format!("missing value for feature '{}'", schema.feature(k).name()),
                        });
                    }
                    report.rejected_missing += 1;
                    rejected = true;
                    break;
                }
                Outcome::Unmapped(v) => {
                    if config.unmapped == RowPolicy::Error {
                        return Err(Error::Ingest {
                            row,
                            message: format!("value '{v}' of feature '{}' maps to no category", schema.feature(k).name()),
                        });
                    }
                    report.rejected_unmapped += 1;
                    rejected = true;
                    break;
                }
            }
        }
        if rejected {
            continue;
        }
        for (k, &c) in codes.iter().enumerate() {
            tallies[k][c] += 1;
        }
        counts.increment(schema.index_of_codes(&codes));
        report.accepted += 1;
    }
    if report.accepted == 0 {
        return Err(Error::EmptyData);
    }
    for (k, t) in tallies.iter().enumerate() {
        let f = schema.feature(k);
        report.categories.insert(
            f.name().to_string(),
            f.categories().iter().cloned().zip(t.iter().copied()).collect(),
        );
    }
    Ok((counts, report))
}
