//! Sparse data: unobserved predictor profiles are excluded from the support
//! and the constraint targets that vanish force their cells to zero.
//!
//! ```text
//! cargo run --example constraint_reduction
//! ```

use std::sync::Arc;

use purfit::metrics::parity_residual;
use purfit::pipeline::{debias, DebiasOptions};
use purfit::{CountTable, Feature, RegularizationConfig, Schema, SupportMode};

fn main() -> purfit::Result<()> {
    let schema = Arc::new(Schema::new(
        Feature::new("outcome", ["neg", "pos"]),
        vec![Feature::new("group", ["a", "b"])],
        vec![Feature::new("level", ["low", "mid", "high"])],
    )?);
    // group b never appears at level "high" and no (neg, a, high) record exists;
    // cells are (y, s, x) in row-major order
    let counts = CountTable::new(schema.clone(), vec![30, 20, 0, 40, 10, 0, 10, 25, 15, 5, 15, 0])?;

    for support_mode in [SupportMode::FullCartesian, SupportMode::ObservedPredictorsAllLabels, SupportMode::ObservedOnly] {
        let opts = DebiasOptions {
            regularization: RegularizationConfig { lambda: 1e-4, support_mode },
            ..Default::default()
        };
        match debias(&counts, &opts) {
            Ok(d) => {
                println!(
                    "\n{}: {} admissible, {} forced to zero, {} cycles, parity residual {:.1e}",
                    support_mode.as_str(),
                    d.mask.count(),
                    d.constraints.n_forced_zero(),
                    d.diagnostics.cycles_used,
                    parity_residual(&d.projection)
                );
                for (i, v) in d.projection.values().iter().enumerate() {
                    let tag = if d.mask.is_admissible(i) { "" } else { "  (outside support)" };
                    println!("  {:16} {:>4} {v:.6}{tag}", schema.profile_of(i).join(","), counts.counts()[i]);
                }
            }
            Err(e) => println!("\n{}: {e}", support_mode.as_str()),
        }
    }
    Ok(())
}
