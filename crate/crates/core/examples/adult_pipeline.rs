//! Adult census experiment: 50/50 train/test splits, every method's natural
//! prediction on the test half, and synthetic tables from the PUR projection.
//!
//! ```text
//! cargo run --release --example adult_pipeline -- [replicates] [out-dir]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use purfit::pipeline::{run_experiment, write_experiment, Experiment, SYNTHETIC_METHOD};

fn main() -> purfit::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates: Option<usize> = args.next().map(|a| a.parse().expect("replicates"));
    let out = args.next();

    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut exp = Experiment::load(&root.join("configs/adult.experiment.json"), None)?;
    if let Some(r) = replicates {
        exp.config.replicates = r;
        exp.config.synthetic_replicates = r;
    }
    let t = std::time::Instant::now();
    let output = run_experiment(&exp, "adult_pipeline")?;
    println!(
        "{} replicates, {} rows in {:.1?}",
        exp.config.replicates,
        output.rows.len(),
        t.elapsed()
    );
    for (label, report) in &output.ingest_reports {
        println!("{label}: {} records accepted of {}", report.accepted, report.records_read);
    }

    // mean over replicates, per method
    let mut sums: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for r in &output.rows {
        if r.metric == "parity_residual" || r.metric == "utility_error" {
            let e = sums.entry((r.metric.clone(), r.method.clone())).or_default();
            e.0 += r.value.unwrap_or(f64::NAN);
            e.1 += 1;
        }
    }
    for ((metric, method), (sum, n)) in &sums {
        println!("{metric:16} {method:14} {:.6}", sum / *n as f64);
    }

    let mut ratios: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in output.rows.iter().filter(|r| r.method == SYNTHETIC_METHOD && r.metric == "disparity_ratio") {
        ratios.entry(r.s_profile.clone()).or_default().extend(r.value);
    }
    for (s, v) in &ratios {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        println!("synthetic disparity ratio {s:18} mean {mean:.4} min {min:.4}");
    }

    if let Some(dir) = out {
        write_experiment(Path::new(&dir), &output)?;
        println!("wrote {dir}/results.csv");
    }
    Ok(())
}
