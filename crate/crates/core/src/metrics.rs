//! Divergences and fairness diagnostics. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::Schema;
use crate::table::JointTable;

/// `sum p log(p / q)` with `0 log 0 = 0`; `+inf` when `p > 0` meets `q = 0`.
pub fn kl_divergence_cells(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "divergence between tables of different size");
    let mut d = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return f64::INFINITY;
            }
            d += pi * (pi / qi).ln();
        }
    }
    d
}

/// `D(p || q)` in nats.
pub fn kl_divergence(p: &JointTable, q: &JointTable) -> f64 {
    kl_divergence_cells(p.values(), q.values())
}

/// Shannon entropy in nats.
pub fn entropy(p: &JointTable) -> f64 {
    entropy_cells(p.values())
}

pub fn entropy_cells(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// `p(y, s)` laid out `y * |S| + s`, and `p(s)`.
fn response_sensitive(p: &JointTable) -> (Vec<f64>, Vec<f64>) {
    let schema = p.schema();
    let ns = schema.n_sensitive();
    let nx = schema.n_unprotected();
    let ys: Vec<f64> = p.values().chunks(nx).map(|c| c.iter().sum()).collect();
    let mut s = vec![0.0; ns];
    for (i, v) in ys.iter().enumerate() {
        s[i % ns] += v;
    }
    (ys, s)
}

/// `p(y | s)` per sensitive profile; `None` where `p(s) = 0`.
pub fn response_given_sensitive(p: &JointTable) -> Vec<Option<Vec<f64>>> {
    let schema = p.schema();
    let (ny, ns) = (schema.n_labels(), schema.n_sensitive());
    let (ys, s_mass) = response_sensitive(p);
    (0..ns)
        .map(|s| (s_mass[s] > 0.0).then(|| (0..ny).map(|y| ys[y * ns + s] / s_mass[s]).collect()))
        .collect()
}

/// Attributable disparities and (optionally) disparity ratios against a
/// reference sensitive profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    /// Index of the reference profile `s0`.
    pub reference: usize,
    pub reference_label: String,
    pub labels: Vec<String>,
    pub profiles: Vec<String>,
    /// `p(y | s) - p(y | s0)`, indexed `[y][s]`; `None` for zero-mass profiles.
    pub differences: Vec<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<DisparityRatios>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparityRatios {
    pub positive: usize,
    pub positive_label: String,
    /// `p(y+ | s) / p(y+ | s0)` per profile.
    pub values: Vec<Option<f64>>,
}

/// `p(y | s) - p(y | s0)` for every `(y, s)`.
pub fn attributable_disparity<S: AsRef<str>>(p: &JointTable, s0: &[S]) -> Result<DisparityReport> {
    attributable_disparity_at(p, p.schema().sensitive_index(s0)?)
}

pub fn attributable_disparity_at(p: &JointTable, s0: usize) -> Result<DisparityReport> {
    let schema = p.schema();
    check_profile(schema, s0)?;
    let cond = response_given_sensitive(p);
    let reference = cond[s0].clone().ok_or_else(|| {
        Error::Argument(format!("reference profile '{}' has zero mass", schema.sensitive_label(s0)))
    })?;
    let differences = (0..schema.n_labels())
        .map(|y| {
            cond.iter()
                .enumerate()
                .map(|(s, c)| {
                    if s == s0 {
                        Some(0.0)
                    } else {
                        c.as_ref().map(|c| c[y] - reference[y])
                    }
                })
                .collect()
        })
        .collect();
    Ok(DisparityReport {
        reference: s0,
        reference_label: schema.sensitive_label(s0),
        labels: schema.response().categories().to_vec(),
        profiles: (0..schema.n_sensitive()).map(|s| schema.sensitive_label(s)).collect(),
        differences,
        ratios: None,
    })
}

/// `p(y+ | s) / p(y+ | s0)` for every sensitive profile.
pub fn disparity_ratio<S: AsRef<str>>(p: &JointTable, positive: &str, s0: &[S]) -> Result<Vec<Option<f64>>> {
    let schema = p.schema();
    let y = schema
        .response()
        .code_of(positive)
        .ok_or_else(|| Error::Schema(format!("unknown response category '{positive}'")))?;
    disparity_ratio_at(p, y, schema.sensitive_index(s0)?)
}

pub fn disparity_ratio_at(p: &JointTable, positive: usize, s0: usize) -> Result<Vec<Option<f64>>> {
    let schema = p.schema();
    check_profile(schema, s0)?;
    if positive >= schema.n_labels() {
        return Err(Error::Argument(format!("response code {positive} out of range")));
    }
    let cond = response_given_sensitive(p);
    let denom = cond[s0].as_ref().map(|c| c[positive]).unwrap_or(0.0);
    if denom <= 0.0 {
        return Err(Error::Argument(format!(
            "p({} | {}) is zero; disparity ratio undefined",
            schema.label(positive),
            schema.sensitive_label(s0)
        )));
    }
    Ok(cond
        .iter()
        .enumerate()
        .map(|(s, c)| if s == s0 { Some(1.0) } else { c.as_ref().map(|c| c[positive] / denom) })
        .collect())
}

/// Differences plus ratios for a designated positive outcome.
pub fn disparity_report(p: &JointTable, s0: usize, positive: usize) -> Result<DisparityReport> {
    let mut report = attributable_disparity_at(p, s0)?;
    report.ratios = Some(DisparityRatios {
        positive,
        positive_label: p.schema().label(positive).to_string(),
        values: disparity_ratio_at(p, positive, s0)?,
    });
    Ok(report)
}

fn check_profile(schema: &Schema, s: usize) -> Result<()> {
    if s >= schema.n_sensitive() {
        return Err(Error::Argument(format!("sensitive profile {s} out of range")));
    }
    Ok(())
}

/// `max |p(y | s) - p(y)|` over profiles with positive mass.
pub fn parity_residual(p: &JointTable) -> f64 {
    let schema = p.schema();
    let (ny, ns) = (schema.n_labels(), schema.n_sensitive());
    let (ys, _) = response_sensitive(p);
    let py: Vec<f64> = (0..ny).map(|y| ys[y * ns..(y + 1) * ns].iter().sum()).collect();
    response_given_sensitive(p)
        .iter()
        .flatten()
        .flat_map(|c| c.iter().zip(&py).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max)
}

/// KL divergence of the `(Y, X)` marginal of `p_pred` from that of `f_test`,
/// test first.
pub fn utility_error(f_test: &JointTable, p_pred: &JointTable) -> Result<f64> {
    if f_test.schema() != p_pred.schema() {
        return Err(Error::Argument("utility error between tables of different schemas".into()));
    }
    let schema = f_test.schema();
    let mut subset = schema.response_position();
    subset.extend(schema.unprotected_positions());
    let a = f_test.marginalize(&subset)?;
    let b = p_pred.marginalize(&subset)?;
    Ok(kl_divergence_cells(a.values(), b.values()))
}
