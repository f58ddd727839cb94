//! Trains on half of the census data and predicts on the other half: the
//! trained conditionals are combined with the test predictor prevalence.
//!
//! ```text
//! cargo run --release --example natural_classifier -- [seed]
//! ```

use std::path::Path;

use purfit::ingest::{ingest, IngestConfig};
use purfit::metrics::{disparity_ratio, parity_residual, utility_error};
use purfit::pipeline::{debias, DebiasOptions};
use purfit::synth::{natural_prediction, train_test_split, FallbackPolicy};
use purfit::ConstraintMode;

fn main() -> purfit::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(1, |a| a.parse().expect("seed"));
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = IngestConfig::from_json_file(&root.join("configs/adult.ingest.json"))?;
    let (counts, _) = ingest(&root.join("data/adult.csv"), &config)?;
    let (train, test) = train_test_split(&counts, 0.5, seed)?;
    println!("train {} / test {} records", train.total(), test.total());
    let f_test = test.normalize()?;

    let mut models = vec![("raw".to_string(), train.normalize()?)];
    for mode in [ConstraintMode::P, ConstraintMode::PU, ConstraintMode::PUR] {
        let opts = DebiasOptions { mode, ..Default::default() };
        models.push((mode.to_string(), debias(&train, &opts)?.projection));
    }

    println!("{:6} {:>10} {:>10} {:>8} {:>10}", "model", "parity", "utility", "unseen", "min ratio");
    for (name, q) in &models {
        let pred = natural_prediction(q, &f_test, FallbackPolicy::ResponseMarginal)?;
        let ratios = disparity_ratio(&pred.table, "high", &["male", "white"])?;
        let min = ratios.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        println!(
            "{name:6} {:10.5} {:10.5} {:8} {min:10.3}",
            parity_residual(&pred.table),
            utility_error(&f_test, &pred.table)?,
            pred.coverage.unseen_profiles
        );
    }
    Ok(())
}
