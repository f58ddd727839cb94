//! The 2 x 2 x 2 table where the label and the group are strongly associated
//! and the unprotected feature carries no information. Each constraint mode
//! is fitted in turn.
//!
//! ```text
//! cargo run --example debias_t1
//! ```

use std::sync::Arc;

use purfit::metrics::{disparity_ratio, kl_divergence, parity_residual};
use purfit::{build_constraints, project, ConstraintMode, Feature, JointTable, Schema, SolverOptions};

fn main() -> purfit::Result<()> {
    let schema = Arc::new(Schema::new(
        Feature::new("hired", ["no", "yes"]),
        vec![Feature::new("group", ["a", "b"])],
        vec![Feature::new("region", ["north", "south"])],
    )?);
    // p(y, s) = [[0.1, 0.4], [0.4, 0.1]], split evenly over the region
    let f = JointTable::new(schema.clone(), vec![0.05, 0.05, 0.2, 0.2, 0.2, 0.2, 0.05, 0.05])?;
    println!("{schema}");
    println!("data: parity residual {:.3}, ratio b/a {:?}", parity_residual(&f), disparity_ratio(&f, "yes", &["a"])?);

    for mode in [ConstraintMode::P, ConstraintMode::PU, ConstraintMode::PUR] {
        let set = build_constraints(&f, mode)?;
        let (q, diag) = project(&f, &set, &SolverOptions::default())?;
        println!(
            "\n{mode}: {} cycles, residual {:.1e}, D(q||f) = {:.4}",
            diag.cycles_used,
            diag.final_residual,
            kl_divergence(&q, &f)
        );
        for (i, v) in q.values().iter().enumerate() {
            println!("  {:22} {v:.6}", schema.profile_of(i).join(","));
        }
    }
    Ok(())
}
