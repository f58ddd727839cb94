//! Disparity report of the census data before and after debiasing, as JSON.
//!
//! ```text
//! cargo run --example metrics_report
//! ```

use std::path::Path;

use purfit::ingest::{ingest, IngestConfig};
use purfit::metrics::disparity_report;
use purfit::persist::to_json_string;
use purfit::pipeline::{debias, DebiasOptions};

fn main() -> purfit::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = IngestConfig::from_json_file(&root.join("configs/adult.ingest.json"))?;
    let (counts, _) = ingest(&root.join("data/adult.csv"), &config)?;
    let f = counts.normalize()?;
    let schema = f.schema();
    let s0 = schema.sensitive_index(&["male", "white"])?;
    let high = schema.response().code_of("high").expect("label");

    let before = disparity_report(&f, s0, high)?;
    let after = disparity_report(&debias(&counts, &DebiasOptions::default())?.projection, s0, high)?;
    println!("{}", to_json_string(&before)?);

    println!("\np(high | s) - p(high | {}):", before.reference_label);
    for (s, label) in before.profiles.iter().enumerate() {
        println!(
            "  {label:18} {:+.4} -> {:+.1e}",
            before.differences[high][s].unwrap_or(f64::NAN),
            after.differences[high][s].unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
