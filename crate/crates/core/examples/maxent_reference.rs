//! Projecting the uniform table instead of the data gives the maximum-entropy
//! table in the PUR set. Compare it with the projection of the data.
//!
//! ```text
//! cargo run --release --example maxent_reference
//! ```

use std::path::Path;

use purfit::ingest::{ingest, IngestConfig};
use purfit::metrics::{entropy, kl_divergence, parity_residual};
use purfit::pipeline::{debias, DebiasOptions, ReferenceKind};

fn main() -> purfit::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = IngestConfig::from_json_file(&root.join("configs/adult.ingest.json"))?;
    let (counts, _) = ingest(&root.join("data/adult.csv"), &config)?;

    let empirical = debias(&counts, &DebiasOptions::default())?;
    let maxent = debias(
        &counts,
        &DebiasOptions {
            reference: ReferenceKind::Uniform,
            ..Default::default()
        },
    )?;

    let f = &empirical.empirical;
    println!("{:10} {:>10} {:>12} {:>10} {:>8}", "reference", "entropy", "D(q||f)", "parity", "cycles");
    println!("{:10} {:10.5} {:>12} {:10.2e} {:>8}", "data", entropy(f), "-", parity_residual(f), "-");
    for (name, d) in [("empirical", &empirical), ("uniform", &maxent)] {
        println!(
            "{name:10} {:10.5} {:12.6} {:10.2e} {:8}",
            entropy(&d.projection),
            kl_divergence(&d.projection, f),
            parity_residual(&d.projection),
            d.diagnostics.cycles_used
        );
    }
    println!("admissible cells: {} of {}", maxent.mask.count(), maxent.mask.len());
    println!("D(uniform-based || empirical-based) = {:.6}", kl_divergence(&maxent.projection, &empirical.projection));
    Ok(())
}
