//! Pay-gap experiment over the survey years. Train and test tables are
//! resampled at the observed size from each year's data.
//!
//! ```text
//! cargo run --release --example paygap_pipeline -- <data-dir> [replicates]
//! ```
//!
//! `<data-dir>` holds `gender_pay_gap.csv`.

use std::collections::BTreeMap;
use std::path::Path;

use purfit::pipeline::{run_experiment, Experiment};

fn main() -> purfit::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().expect("usage: paygap_pipeline <data-dir> [replicates]");
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let mut exp = Experiment::load(&root.join("configs/paygap.experiment.json"), Some(Path::new(&dir)))?;
    if let Some(r) = args.next() {
        exp.config.replicates = r.parse().expect("replicates");
    }
    let out = run_experiment(&exp, "paygap_pipeline")?;

    // (year, method, y, s) -> values
    let mut cells: BTreeMap<(&str, &str, &str, &str), Vec<f64>> = BTreeMap::new();
    for r in out.rows.iter().filter(|r| r.metric == "attributable_disparity") {
        cells.entry((&r.dataset, &r.method, &r.y, &r.s_profile)).or_default().extend(r.value);
    }
    println!("{:6} {:12} {:>12} {:>12} {:>8}", "year", "method", "max |mean|", "mean SE", "max z");
    let mut summary: BTreeMap<(&str, &str), (f64, f64, f64, usize)> = BTreeMap::new();
    for ((year, method, _, _), v) in &cells {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let se = if n > 1.0 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        let e = summary.entry((year, method)).or_default();
        e.0 = e.0.max(mean.abs());
        e.1 += se;
        e.3 += 1;
        if se > 0.0 {
            e.2 = e.2.max(mean.abs() / se);
        }
    }
    for ((year, method), (m, se, z, n)) in summary {
        println!("{year:6} {method:12} {m:12.4} {:12.4} {z:8.2}", se / n as f64);
    }
    Ok(())
}
