use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use purfit::constraints::ConstraintMode;
use purfit::ingest::{ingest, IngestConfig};
use purfit::ipf::SolverOptions;
use purfit::metrics::{disparity_report, parity_residual, utility_error};
use purfit::persist::{self, read_table, InputDigest, RunManifest};
use purfit::pipeline::{debias, run_experiment, write_experiment, DebiasOptions, Experiment, ReferenceKind};
use purfit::reference::{RegularizationConfig, SupportMode};
use purfit::synth::{natural_prediction, sample_counts, FallbackPolicy, SampleSpec, PRNG_NAME};
use purfit::{Error, Result};

#[derive(Parser)]
#[command(name = "purfit", version, about = "Parity de-biasing of categorical tables by information projection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bin a CSV file into a count table.
    Ingest {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the ingestion report (stdout otherwise).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Project a count table onto the parity constraints.
    Debias {
        #[arg(long)]
        counts: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// JSON options file; flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        mode: Option<ConstraintMode>,
        #[arg(long)]
        reference: Option<ReferenceKind>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_parser = parse_support)]
        support_mode: Option<SupportMode>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        max_cycles: Option<usize>,
    },
    /// Draw multinomial count tables from a distribution.
    Sample {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1)]
        replicates: usize,
        #[arg(long, env = "PURFIT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Natural-classifier prediction of a model table on test predictors.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "response-marginal")]
        fallback: FallbackPolicy,
        #[arg(long)]
        out: PathBuf,
    },
    /// Disparity, parity and (with --test) utility metrics of a table.
    Metrics {
        #[arg(long)]
        table: PathBuf,
        /// Reference sensitive profile, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        reference_group: Vec<String>,
        #[arg(long)]
        positive: Option<String>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated train/test experiment.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, env = "PURFIT_SEED")]
        seed: Option<u64>,
        #[arg(long)]
        test_fraction: Option<f64>,
        /// Directory holding the source files, instead of the paths in the config.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
}

fn parse_support(s: &str) -> std::result::Result<SupportMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown support mode '{s}'"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NonConvergence(nc) = &e {
                if let Ok(text) = persist::to_json_string(&nc.diagnostics) {
                    eprint!("{text}");
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn print_or_write<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => persist::write_json(p, value),
        None => {
            print!("{}", persist::to_json_string(value)?);
            Ok(())
        }
    }
}

/// Manifest fields shared by every command; the caller fills in the rest.
fn base_manifest(command: &str, config_hash: String, inputs: &[&Path]) -> Result<RunManifest> {
    Ok(RunManifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        config_hash,
        inputs: inputs.iter().map(|p| InputDigest::of_file(p)).collect::<Result<_>>()?,
        seeds: vec![],
        prng: PRNG_NAME.into(),
        solver: SolverOptions::default(),
        lambda: 0.0,
        support_mode: String::new(),
        constraint_modes: vec![],
        reference: vec![],
        fallback: String::new(),
    })
}

/// `out.json` gets `out.json.manifest.json` next to it.
fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    out.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest {
            config,
            input,
            out,
            report,
        } => {
            let cfg = IngestConfig::from_json_file(&config)?;
            let (counts, rep) = ingest(&input, &cfg)?;
            persist::write_counts(&out, &counts)?;
            let manifest = base_manifest("ingest", persist::hash_json(&cfg)?, &[&config, &input])?;
            persist::write_manifest(&sidecar(&out), &manifest)?;
            print_or_write(report.as_deref(), &rep)
        }
        Command::Debias {
            counts,
            out,
            config,
            mode,
            reference,
            lambda,
            support_mode,
            tolerance,
            max_cycles,
        } => {
            let mut opts = match &config {
                Some(p) => persist::read_json::<DebiasOptions>(p).map_err(|e| Error::Config(e.to_string()))?,
                None => DebiasOptions::default(),
            };
            opts.mode = mode.unwrap_or(opts.mode);
            opts.reference = reference.unwrap_or(opts.reference);
            opts.regularization = RegularizationConfig {
                lambda: lambda.unwrap_or(opts.regularization.lambda),
                support_mode: support_mode.unwrap_or(opts.regularization.support_mode),
            };
            opts.solver = SolverOptions {
                tolerance: tolerance.unwrap_or(opts.solver.tolerance),
                max_cycles: max_cycles.unwrap_or(opts.solver.max_cycles),
                ..opts.solver
            };
            opts.solver.validate().map_err(|e| Error::Config(e.to_string()))?;

            let table = read_table(&counts)?.into_counts()?;
            let result = debias(&table, &opts)?;
            create_dir(&out)?;
            persist::write_joint(&out.join("projection.json"), &result.projection)?;
            std::fs::write(out.join("constraints.json"), persist::constraints_to_json(&result.constraints)?)
                .map_err(|e| Error::Io {
                    path: out.join("constraints.json"),
                    source: e,
                })?;
            let report = result.report(table.total(), &opts);
            persist::write_json(&out.join("diagnostics.json"), &report)?;
            let manifest = RunManifest {
                solver: opts.solver,
                lambda: opts.regularization.lambda,
                support_mode: opts.regularization.support_mode.as_str().into(),
                constraint_modes: vec![opts.mode.as_str().into()],
                reference: vec![opts.reference.as_str().into()],
                ..base_manifest("debias", persist::hash_json(&opts)?, &[&counts])?
            };
            persist::write_manifest(&out.join("manifest.json"), &manifest)?;
            println!(
                "converged in {} cycles; residual {:e}; parity residual {:e}; KL to reference {:.6}",
                report.diagnostics.cycles_used,
                report.diagnostics.final_residual,
                report.parity_residual,
                report.diagnostics.kl_to_reference
            );
            Ok(())
        }
        Command::Sample {
            table,
            n,
            replicates,
            seed,
            out,
        } => {
            let q = read_table(&table)?.into_joint()?;
            let spec = SampleSpec::new(n, seed, replicates)?;
            let tables = sample_counts(&q, &spec)?;
            create_dir(&out)?;
            for (r, t) in tables.iter().enumerate() {
                persist::write_counts(&out.join(format!("sample_{r:04}.json")), t)?;
            }
            let manifest = RunManifest {
                seeds: vec![seed],
                ..base_manifest("sample", persist::hash_json(&spec)?, &[&table])?
            };
            persist::write_manifest(&out.join("manifest.json"), &manifest)
        }
        Command::Predict {
            model,
            test,
            fallback,
            out,
        } => {
            let q = read_table(&model)?.into_joint()?;
            let f = read_table(&test)?.into_joint()?;
            let pred = natural_prediction(&q, &f, fallback)?;
            persist::write_joint(&out, &pred.table)?;
            let manifest = RunManifest {
                fallback: fallback.as_str().into(),
                ..base_manifest("predict", persist::hash_json(&fallback)?, &[&model, &test])?
            };
            persist::write_manifest(&sidecar(&out), &manifest)?;
            print!("{}", persist::to_json_string(&pred.coverage)?);
            Ok(())
        }
        Command::Metrics {
            table,
            reference_group,
            positive,
            test,
            out,
        } => {
            let p = read_table(&table)?.into_joint()?;
            let schema = p.schema();
            let s0 = schema.sensitive_index(&reference_group)?;
            let report = match &positive {
                Some(y) => {
                    let y = schema
                        .response()
                        .code_of(y)
                        .ok_or_else(|| Error::Argument(format!("unknown response category '{y}'")))?;
                    disparity_report(&p, s0, y)?
                }
                None => purfit::metrics::attributable_disparity_at(&p, s0)?,
            };
            let utility = match &test {
                Some(t) => Some(utility_error(&read_table(t)?.into_joint()?, &p)?),
                None => None,
            };
            #[derive(serde::Serialize)]
            struct MetricsDoc {
                entropy: f64,
                parity_residual: f64,
                #[serde(skip_serializing_if = "Option::is_none")]
                utility_error: Option<f64>,
                disparity: purfit::metrics::DisparityReport,
            }
            print_or_write(
                out.as_deref(),
                &MetricsDoc {
                    entropy: purfit::metrics::entropy(&p),
                    parity_residual: parity_residual(&p),
                    utility_error: utility,
                    disparity: report,
                },
            )
        }
        Command::Experiment {
            config,
            out,
            replicates,
            seed,
            test_fraction,
            data_dir,
        } => {
            let mut exp = Experiment::load(&config, data_dir.as_deref())?;
            if let Some(r) = replicates {
                exp.config.replicates = r;
            }
            if let Some(s) = seed {
                exp.config.seed = s;
            }
            if let Some(f) = test_fraction {
                exp.config.test_fraction = f;
            }
            let output = run_experiment(&exp, "experiment")?;
            write_experiment(&out, &output)?;
            println!("{} rows written to {}", output.rows.len(), out.join("results.csv").display());
            Ok(())
        }
    }
}
