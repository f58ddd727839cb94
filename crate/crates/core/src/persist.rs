//! JSON documents for tables, constraint sets and run manifests.
//!
//! Tables are stored as `{kind, schema, layout: "row-major", values}` with
//! counts as integers and probabilities written with 17 significant digits,
//! which round-trips every `f64` exactly.

use std::io::{self, Write};
use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::ipf::SolverOptions;
use crate::schema::Schema;
use crate::table::{CountTable, JointTable};

pub const LAYOUT: &str = "row-major";

/// `{:.16e}`: 17 significant digits.
pub fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

/// Pretty JSON with every float written by [`format_f64`].
struct ExactFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for ExactFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format!("{value:.16e}").as_bytes())
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with exact floats.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFormatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_string(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableKind {
    Counts,
    Joint,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Values {
    Counts(Vec<u64>),
    Probabilities(Vec<f64>),
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    kind: TableKind,
    schema: Schema,
    layout: String,
    values: Values,
}

/// A table read from disk.
#[derive(Debug, Clone)]
pub enum TableDocument {
    Counts(CountTable),
    Joint(JointTable),
}

impl TableDocument {
    /// The distribution: counts are normalized.
    pub fn into_joint(self) -> Result<JointTable> {
        match self {
            TableDocument::Counts(c) => c.normalize(),
            TableDocument::Joint(j) => Ok(j),
        }
    }

    pub fn into_counts(self) -> Result<CountTable> {
        match self {
            TableDocument::Counts(c) => Ok(c),
            TableDocument::Joint(_) => Err(Error::Argument("expected a count table, found probabilities".into())),
        }
    }
}

pub fn counts_to_json(t: &CountTable) -> Result<String> {
    to_json_string(&TableDoc {
        kind: TableKind::Counts,
        schema: t.schema().clone(),
        layout: LAYOUT.into(),
        values: Values::Counts(t.counts().to_vec()),
    })
}

pub fn joint_to_json(t: &JointTable) -> Result<String> {
    to_json_string(&TableDoc {
        kind: TableKind::Joint,
        schema: t.schema().clone(),
        layout: LAYOUT.into(),
        values: Values::Probabilities(t.values().to_vec()),
    })
}

pub fn table_from_json(text: &str) -> Result<TableDocument> {
    let doc: TableDoc = serde_json::from_str(text)?;
    if doc.layout != LAYOUT {
        return Err(Error::Argument(format!("unsupported layout '{}'", doc.layout)));
    }
    let schema = Arc::new(doc.schema);
    match (doc.kind, doc.values) {
        (TableKind::Counts, Values::Counts(c)) => Ok(TableDocument::Counts(CountTable::new(schema, c)?)),
        (TableKind::Joint, Values::Probabilities(v)) => Ok(TableDocument::Joint(JointTable::new(schema, v)?)),
        (TableKind::Joint, Values::Counts(c)) => Ok(TableDocument::Joint(JointTable::new(
            schema,
            c.into_iter().map(|v| v as f64).collect(),
        )?)),
        (TableKind::Counts, Values::Probabilities(_)) => Err(Error::Argument("count table holds non-integers".into())),
    }
}

pub fn write_counts(path: &Path, t: &CountTable) -> Result<()> {
    std::fs::write(path, counts_to_json(t)?).map_err(|e| Error::io(path, e))
}

pub fn write_joint(path: &Path, t: &JointTable) -> Result<()> {
    std::fs::write(path, joint_to_json(t)?).map_err(|e| Error::io(path, e))
}

pub fn read_table(path: &Path) -> Result<TableDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    table_from_json(&text)
}

#[derive(Serialize)]
struct ConstraintDoc<'a> {
    kind: &'static str,
    features: Vec<&'a str>,
    layout: &'static str,
    target: &'a [f64],
    active: Vec<bool>,
}

#[derive(Serialize)]
struct ConstraintSetDoc<'a> {
    mode: &'static str,
    schema: &'a Schema,
    constraints: Vec<ConstraintDoc<'a>>,
    forced_zero: Vec<usize>,
}

/// Constraint targets, active rows and pinned cells.
pub fn constraints_to_json(set: &ConstraintSet) -> Result<String> {
    let schema = set.schema();
    let doc = ConstraintSetDoc {
        mode: set.mode().as_str(),
        schema,
        constraints: set
            .constraints()
            .iter()
            .map(|c| ConstraintDoc {
                kind: c.kind().as_str(),
                features: c.features().iter().map(|&i| schema.feature(i).name()).collect(),
                layout: LAYOUT,
                target: c.target().values(),
                active: (0..c.target().len()).map(|m| c.is_active(m)).collect(),
            })
            .collect(),
        forced_zero: (0..schema.n_cells()).filter(|&i| set.is_forced_zero(i)).collect(),
    };
    to_json_string(&doc)
}

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub command: String,
    /// SHA-256 of the canonical JSON of the effective configuration.
    pub config_hash: String,
    /// SHA-256 of every input file, in the order given.
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<u64>,
    pub prng: String,
    pub solver: SolverOptions,
    pub lambda: f64,
    pub support_mode: String,
    pub constraint_modes: Vec<String>,
    pub reference: Vec<String>,
    pub fallback: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    pub fn of_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of the compact JSON of `value`.
pub fn hash_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFormatter(PrettyFormatter::with_indent(b"")));
    value.serialize(&mut ser)?;
    Ok(sha256_hex(&buf))
}

impl RunManifest {
    /// Hash of the whole manifest; stamped on every result row.
    pub fn hash(&self) -> Result<String> {
        hash_json(self)
    }
}

#[derive(Serialize)]
struct ManifestDoc<'a> {
    hash: String,
    #[serde(flatten)]
    manifest: &'a RunManifest,
}

/// Writes the manifest with its hash.
pub fn write_manifest(path: &Path, m: &RunManifest) -> Result<()> {
    write_json(
        path,
        &ManifestDoc {
            hash: m.hash()?,
            manifest: m,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Feature;

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                Feature::new("y", ["0", "1"]),
                vec![Feature::new("s", ["a", "b"])],
                vec![Feature::new("x", ["u", "v"])],
            )
            .unwrap(),
        )
    }

    #[test]
    fn joint_round_trip_is_exact() {
        let w = vec![0.1, 1.0 / 3.0, 2.0f64.sqrt(), 1e-300, 0.0, 7.0, 1.0 / 7.0, 0.3];
        let t = JointTable::from_weights(schema(), w).unwrap();
        let text = joint_to_json(&t).unwrap();
        assert!(text.contains("\"layout\": \"row-major\""));
        let back = table_from_json(&text).unwrap().into_joint().unwrap();
        assert_eq!(back.values(), t.values());
        assert_eq!(back.schema(), t.schema());
    }

    #[test]
    fn counts_round_trip() {
        let c = CountTable::new(schema(), vec![1, 2, 3, 4, 0, 0, 7, 8]).unwrap();
        let text = counts_to_json(&c).unwrap();
        assert!(text.contains("\"kind\": \"counts\""));
        let back = table_from_json(&text).unwrap().into_counts().unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(format_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn wrong_layout_rejected() {
        let text = counts_to_json(&CountTable::zeros(schema())).unwrap().replace("row-major", "column-major");
        assert!(table_from_json(&text).is_err());
    }
}
