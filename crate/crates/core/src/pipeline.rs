//! End-to-end runs: de-biasing a count table and the replicated
//! train/test experiments.
//!
//! # Experiment streams
//!
//! Replicate `r` of source `k` draws from [`stream_rng`]`(seed, stream)` with
//! `stream = k << 48 | r << 8 | purpose`, where purpose is 0 for the train
//! split (or the train resample), 1 for the test resample and 2 for
//! synthetic tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::{build_constraints, ConstraintMode, ConstraintSet};
use crate::error::{Error, Result};
use crate::ingest::{ingest_filtered, IngestConfig, IngestReport, RowFilter};
use crate::ipf::{project, ProjectionDiagnostics, SolverOptions, DEFAULT_MAX_CYCLES, DEFAULT_TOLERANCE};
use crate::metrics::{attributable_disparity_at, disparity_ratio_at, parity_residual, response_given_sensitive, utility_error};
use crate::persist::{format_f64, hash_json, InputDigest, RunManifest};
use crate::reference::{regularize_with_mask, uniform_reference, RegularizationConfig, SupportMask, SupportMode, DEFAULT_LAMBDA};
use crate::schema::Schema;
use crate::synth::{natural_prediction, sample_counts_with, stream_rng, train_test_split_with, FallbackPolicy, PRNG_NAME};
use crate::table::{CountTable, JointTable};

/// Which distribution is projected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// The regularized empirical distribution.
    #[default]
    Empirical,
    /// Uniform over the admissible cells (maximum entropy).
    Uniform,
}

impl ReferenceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReferenceKind::Empirical => "empirical",
            ReferenceKind::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(ReferenceKind::Empirical),
            "uniform" => Ok(ReferenceKind::Uniform),
            _ => Err(Error::Argument(format!("unknown reference '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebiasOptions {
    pub mode: ConstraintMode,
    pub reference: ReferenceKind,
    pub regularization: RegularizationConfig,
    pub solver: SolverOptions,
}

impl Default for DebiasOptions {
    fn default() -> Self {
        DebiasOptions {
            mode: ConstraintMode::PUR,
            reference: ReferenceKind::Empirical,
            regularization: RegularizationConfig::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Debiased {
    pub projection: JointTable,
    pub reference: JointTable,
    /// Regularized empirical distribution the targets come from.
    pub empirical: JointTable,
    pub mask: SupportMask,
    pub constraints: ConstraintSet,
    pub diagnostics: ProjectionDiagnostics,
}

/// Builds the constraints from the regularized empirical distribution of
/// `counts` and projects the chosen reference onto them.
pub fn debias(counts: &CountTable, opts: &DebiasOptions) -> Result<Debiased> {
    let f = counts.normalize()?;
    let mask = SupportMask::from_table(&f, opts.regularization.support_mode)?;
    let empirical = regularize_with_mask(&f, counts.total(), opts.regularization.lambda, &mask)?;
    let constraints = build_constraints(&empirical, opts.mode)?.reduce(&mask)?;
    let reference = match opts.reference {
        ReferenceKind::Empirical => empirical.clone(),
        ReferenceKind::Uniform => uniform_reference(f.schema_arc().clone(), &mask)?,
    };
    let (projection, diagnostics) = project(&reference, &constraints, &opts.solver)?;
    Ok(Debiased {
        projection,
        reference,
        empirical,
        mask,
        constraints,
        diagnostics,
    })
}

/// Summary written next to a projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebiasReport {
    pub mode: ConstraintMode,
    pub reference: ReferenceKind,
    pub n: u64,
    pub admissible_cells: usize,
    pub forced_zero_cells: usize,
    pub parity_residual: f64,
    pub entropy: f64,
    #[serde(flatten)]
    pub diagnostics: ProjectionDiagnostics,
}

impl Debiased {
    pub fn report(&self, n: u64, opts: &DebiasOptions) -> DebiasReport {
        DebiasReport {
            mode: opts.mode,
            reference: opts.reference,
            n,
            admissible_cells: self.mask.count(),
            forced_zero_cells: self.constraints.n_forced_zero(),
            parity_residual: parity_residual(&self.projection),
            entropy: crate::metrics::entropy(&self.projection),
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// How replicates are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    /// Random train/test split of one dataset, plus synthetic tables drawn
    /// from the PUR projection of the whole dataset.
    Adult,
    /// Train and test tables resampled from each source's empirical
    /// distribution at its own sample size.
    Paygap,
}

/// Classifier a prediction comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// The unregularized train distribution.
    Raw,
    P,
    Pu,
    Pur,
    /// PUR projection of the uniform reference.
    PurUniform,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Raw, Method::P, Method::Pu, Method::Pur, Method::PurUniform];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Raw => "raw",
            Method::P => "p",
            Method::Pu => "pu",
            Method::Pur => "pur",
            Method::PurUniform => "pur-uniform",
        }
    }

    fn options(&self, base: &DebiasOptions) -> Option<DebiasOptions> {
        let (mode, reference) = match self {
            Method::Raw => return None,
            Method::P => (ConstraintMode::P, ReferenceKind::Empirical),
            Method::Pu => (ConstraintMode::PU, ReferenceKind::Empirical),
            Method::Pur => (ConstraintMode::PUR, ReferenceKind::Empirical),
            Method::PurUniform => (ConstraintMode::PUR, ReferenceKind::Uniform),
        };
        Some(DebiasOptions {
            mode,
            reference,
            ..*base
        })
    }
}

/// Method label of the synthetic-data rows.
pub const SYNTHETIC_METHOD: &str = "synthetic-pur";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Source {
    /// Value of the `dataset` column.
    pub label: String,
    pub path: PathBuf,
    /// Restricts the file to one slice, e.g. one survey year.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<RowFilter>,
}

fn default_test_fraction() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_max_cycles() -> usize {
    DEFAULT_MAX_CYCLES
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

/// Run configuration of an experiment. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: PipelineKind,
    /// Path of the ingest config.
    pub ingest: PathBuf,
    pub sources: Vec<Source>,
    /// Sensitive profile `s0` the disparities are measured against.
    pub reference_group: Vec<String>,
    /// Positive outcome for disparity ratios.
    #[serde(default)]
    pub positive: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub replicates: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Synthetic tables drawn from the full-data PUR projection (adult only).
    #[serde(default)]
    pub synthetic_replicates: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub support_mode: SupportMode,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_cycles")]
    pub max_cycles: usize,
    #[serde(default)]
    pub fallback: FallbackPolicy,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sources.is_empty() {
            return bad("no sources".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        if self.pipeline == PipelineKind::Adult && !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.sources.len() >= 1 << 15 || self.replicates >= 1 << 40 || self.synthetic_replicates >= 1 << 40 {
            return bad("too many sources or replicates for the stream layout".into());
        }
        self.debias_options().solver.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        Ok(())
    }

    fn debias_options(&self) -> DebiasOptions {
        DebiasOptions {
            mode: ConstraintMode::PUR,
            reference: ReferenceKind::Empirical,
            regularization: RegularizationConfig {
                lambda: self.lambda,
                support_mode: self.support_mode,
            },
            solver: SolverOptions {
                tolerance: self.tolerance,
                max_cycles: self.max_cycles,
                record_trace: false,
            },
        }
    }
}

/// A config with its ingest config loaded and paths resolved.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub ingest: IngestConfig,
    /// Resolved source paths, parallel to `config.sources`.
    pub paths: Vec<PathBuf>,
}

impl Experiment {
    /// Loads `path`; sources resolve against `data_dir` when given.
    pub fn load(path: &Path, data_dir: Option<&Path>) -> Result<Self> {
        let config = ExperimentConfig::from_json_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let ingest = IngestConfig::from_json_file(&base.join(&config.ingest))?;
        let paths = config
            .sources
            .iter()
            .map(|s| data_dir.map_or_else(|| base.join(&s.path), |d| d.join(s.path.file_name().unwrap_or(s.path.as_os_str()))))
            .collect();
        Ok(Experiment { config, ingest, paths })
    }

    pub fn new(config: ExperimentConfig, ingest: IngestConfig, paths: Vec<PathBuf>) -> Result<Self> {
        if paths.len() != config.sources.len() {
            return Err(Error::Config("one path per source required".into()));
        }
        Ok(Experiment { config, ingest, paths })
    }
}

/// One line of the results CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub method: String,
    pub replicate: usize,
    pub metric: String,
    pub y: String,
    pub s_profile: String,
    /// `None` where the quantity is undefined.
    pub value: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub manifest: RunManifest,
    pub ingest_reports: BTreeMap<String, IngestReport>,
}

pub const RESULTS_HEADER: [&str; 8] = ["dataset", "method", "replicate", "metric", "y", "s_profile", "value", "manifest"];

fn stream_id(source: usize, replicate: usize, purpose: u64) -> u64 {
    ((source as u64) << 48) | ((replicate as u64) << 8) | purpose
}

/// Context shared by all replicates of one source.
struct Evaluator<'a> {
    label: &'a str,
    s0: usize,
    positive: Option<usize>,
    fallback: FallbackPolicy,
    base: DebiasOptions,
    methods: &'a [Method],
}

impl Evaluator<'_> {
    fn row(&self, method: &str, replicate: usize, metric: &str, y: &str, s: &str, value: Option<f64>) -> ResultRow {
        ResultRow {
            dataset: self.label.to_string(),
            method: method.to_string(),
            replicate,
            metric: metric.to_string(),
            y: y.to_string(),
            s_profile: s.to_string(),
            value,
        }
    }

    /// Per-profile disparity rows of `p`.
    fn disparity_rows(&self, p: &JointTable, method: &str, replicate: usize, out: &mut Vec<ResultRow>) {
        let schema = p.schema();
        let cond = response_given_sensitive(p);
        for (s, c) in cond.iter().enumerate() {
            for y in 0..schema.n_labels() {
                out.push(self.row(method, replicate, "p_y_given_s", schema.label(y), &schema.sensitive_label(s), c.as_ref().map(|c| c[y])));
            }
        }
        match attributable_disparity_at(p, self.s0) {
            Ok(r) => {
                for (y, row) in r.differences.iter().enumerate() {
                    for (s, d) in row.iter().enumerate() {
                        out.push(self.row(method, replicate, "attributable_disparity", &r.labels[y], &r.profiles[s], *d));
                    }
                }
            }
            Err(_) => {
                for y in 0..schema.n_labels() {
                    for s in 0..schema.n_sensitive() {
                        out.push(self.row(method, replicate, "attributable_disparity", schema.label(y), &schema.sensitive_label(s), None));
                    }
                }
            }
        }
        if let Some(pos) = self.positive {
            let ratios = disparity_ratio_at(p, pos, self.s0).unwrap_or_else(|_| vec![None; schema.n_sensitive()]);
            for (s, r) in ratios.iter().enumerate() {
                out.push(self.row(method, replicate, "disparity_ratio", schema.label(pos), &schema.sensitive_label(s), *r));
            }
        }
    }

    /// Fits every method on `train` and evaluates its natural prediction on `test`.
    fn evaluate(&self, train: &CountTable, test: &CountTable, replicate: usize) -> Result<Vec<ResultRow>> {
        let f_train = train.normalize()?;
        let f_test = test.normalize()?;
        let mut out = Vec::new();
        for &method in self.methods {
            let q = match method.options(&self.base) {
                None => f_train.clone(),
                Some(opts) => debias(train, &opts)?.projection,
            };
            let pred = natural_prediction(&q, &f_test, self.fallback)?;
            let name = method.as_str();
            self.disparity_rows(&pred.table, name, replicate, &mut out);
            out.push(self.row(name, replicate, "parity_residual", "", "", Some(parity_residual(&pred.table))));
            out.push(self.row(name, replicate, "utility_error", "", "", Some(utility_error(&f_test, &pred.table)?)));
            out.push(self.row(name, replicate, "unseen_test_mass", "", "", Some(pred.coverage.unseen_mass)));
        }
        Ok(out)
    }
}

/// Runs every replicate of every source. Replicates run in parallel; rows
/// come back ordered by source, replicate and method.
pub fn run_experiment(exp: &Experiment, command: &str) -> Result<ExperimentOutput> {
    let cfg = &exp.config;
    cfg.validate()?;
    let schema: Schema = exp.ingest.schema()?;
    let s0 = schema.sensitive_index(&cfg.reference_group).map_err(|e| Error::Config(e.to_string()))?;
    let positive = match &cfg.positive {
        None => None,
        Some(p) => Some(
            schema
                .response()
                .code_of(p)
                .ok_or_else(|| Error::Config(format!("positive outcome '{p}' is not a response category")))?,
        ),
    };
    let base = cfg.debias_options();

    let mut rows = Vec::new();
    let mut reports = BTreeMap::new();
    let mut inputs = Vec::new();
    for (k, (source, path)) in cfg.sources.iter().zip(&exp.paths).enumerate() {
        let mut digest = InputDigest::of_file(path)?;
        digest.path = source.path.display().to_string();
        inputs.push(digest);
        let (counts, report) = ingest_filtered(path, &exp.ingest, source.filter.as_ref())?;
        reports.insert(source.label.clone(), report);
        let ev = Evaluator {
            label: &source.label,
            s0,
            positive,
            fallback: cfg.fallback,
            base,
            methods: &cfg.methods,
        };

        // the original data itself, as replicate 0 of method "data"
        ev.disparity_rows(&counts.normalize()?, "data", 0, &mut rows);
        rows.push(ev.row("data", 0, "parity_residual", "", "", Some(parity_residual(&counts.normalize()?))));

        let per_replicate: Vec<Result<Vec<ResultRow>>> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let (train, test) = match cfg.pipeline {
                    PipelineKind::Adult => {
                        let mut rng = stream_rng(cfg.seed, stream_id(k, r, 0));
                        train_test_split_with(&counts, cfg.test_fraction, &mut rng)?
                    }
                    PipelineKind::Paygap => {
                        let f = counts.normalize()?;
                        let n = counts.total();
                        let train = sample_counts_with(&f, n, &mut stream_rng(cfg.seed, stream_id(k, r, 0)));
                        let test = sample_counts_with(&f, n, &mut stream_rng(cfg.seed, stream_id(k, r, 1)));
                        (train, test)
                    }
                };
                ev.evaluate(&train, &test, r)
            })
            .collect();
        for r in per_replicate {
            rows.extend(r?);
        }

        if cfg.synthetic_replicates > 0 {
            let q = debias(&counts, &base)?.projection;
            let n = counts.total();
            let synthetic: Vec<Result<Vec<ResultRow>>> = (0..cfg.synthetic_replicates)
                .into_par_iter()
                .map(|r| {
                    let sample = sample_counts_with(&q, n, &mut stream_rng(cfg.seed, stream_id(k, r, 2)));
                    let f = sample.normalize()?;
                    let mut out = Vec::new();
                    ev.disparity_rows(&f, SYNTHETIC_METHOD, r, &mut out);
                    out.push(ev.row(SYNTHETIC_METHOD, r, "parity_residual", "", "", Some(parity_residual(&f))));
                    Ok(out)
                })
                .collect();
            for r in synthetic {
                rows.extend(r?);
            }
        }
    }

    let methods: Vec<&Method> = cfg.methods.iter().collect();
    let manifest = RunManifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config_hash: hash_json(&(cfg, &exp.ingest))?,
        inputs,
        seeds: vec![cfg.seed],
        prng: PRNG_NAME.into(),
        solver: base.solver,
        lambda: cfg.lambda,
        support_mode: cfg.support_mode.as_str().into(),
        constraint_modes: methods
            .iter()
            .filter_map(|m| m.options(&base).map(|o| o.mode.as_str().to_string()))
            .collect(),
        reference: methods
            .iter()
            .filter_map(|m| m.options(&base).map(|o| o.reference.as_str().to_string()))
            .collect(),
        fallback: cfg.fallback.as_str().into(),
    };
    Ok(ExperimentOutput {
        rows,
        manifest,
        ingest_reports: reports,
    })
}

/// Writes `results.csv` and `manifest.json` into `dir`.
pub fn write_experiment(dir: &Path, out: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hash = out.manifest.hash()?;
    let path = dir.join("results.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in &out.rows {
        let value = r.value.map_or_else(|| "NA".to_string(), format_f64);
        w.write_record([
            r.dataset.as_str(),
            r.method.as_str(),
            &r.replicate.to_string(),
            r.metric.as_str(),
            r.y.as_str(),
            r.s_profile.as_str(),
            &value,
            &hash,
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    crate::persist::write_manifest(&dir.join("manifest.json"), &out.manifest)?;
    crate::persist::write_json(&dir.join("ingest_report.json"), &out.ingest_reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::Feature;
    use std::sync::Arc;

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
    fn debias_t1_counts() {
        // T1 scaled to counts
        let counts = CountTable::new(schema(), vec![5, 5, 20, 20, 20, 20, 5, 5]).unwrap();
        let opts = DebiasOptions {
            regularization: RegularizationConfig {
                lambda: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let d = debias(&counts, &opts).unwrap();
        assert!(d.projection.max_abs_diff(&JointTable::uniform(schema())) < 1e-10);
        let report = d.report(counts.total(), &opts);
        assert!(report.parity_residual < 1e-10);
        assert!(report.diagnostics.converged);
    }

    #[test]
    fn uniform_reference_has_higher_entropy() {
        let counts = CountTable::new(schema(), vec![3, 9, 20, 14, 11, 25, 6, 4]).unwrap();
        let emp = debias(&counts, &DebiasOptions::default()).unwrap();
        let uni = debias(
            &counts,
            &DebiasOptions {
                reference: ReferenceKind::Uniform,
                ..Default::default()
            },
        )
        .unwrap();
        let h = crate::metrics::entropy;
        assert!(h(&uni.projection) > h(&emp.projection));
    }

    #[test]
    fn stream_ids_do_not_collide() {
        assert_ne!(stream_id(0, 1, 0), stream_id(0, 0, 1));
        assert_ne!(stream_id(1, 0, 0), stream_id(0, 1 << 39, 0));
    }
}
