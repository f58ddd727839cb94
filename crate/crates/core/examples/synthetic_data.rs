//! Draws synthetic census tables from the PUR projection and checks the
//! disparity ratio of each group against the 80% threshold.
//!
//! ```text
//! cargo run --release --example synthetic_data -- [replicates] [out-dir]
//! ```

use std::path::Path;

use purfit::ingest::{ingest, IngestConfig};
use purfit::metrics::disparity_ratio;
use purfit::persist::write_counts;
use purfit::pipeline::{debias, DebiasOptions};
use purfit::synth::{sample_counts, SampleSpec, PRNG_NAME};

fn main() -> purfit::Result<()> {
    let mut args = std::env::args().skip(1);
    let replicates: usize = args.next().map_or(200, |a| a.parse().expect("replicates"));
    let out = args.next();

    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = IngestConfig::from_json_file(&root.join("configs/adult.ingest.json"))?;
    let (counts, _) = ingest(&root.join("data/adult.csv"), &config)?;
    let q = debias(&counts, &DebiasOptions::default())?.projection;

    let spec = SampleSpec::new(counts.total(), 7, replicates)?;
    let samples = sample_counts(&q, &spec)?;
    println!("{replicates} tables of {} records ({PRNG_NAME})", counts.total());

    let schema = q.schema();
    let mut ratios = vec![Vec::new(); schema.n_sensitive()];
    for t in &samples {
        let r = disparity_ratio(&t.normalize()?, "high", &["male", "white"])?;
        for (s, v) in r.into_iter().enumerate() {
            ratios[s].push(v.unwrap_or(0.0));
        }
    }
    let original = disparity_ratio(&counts.normalize()?, "high", &["male", "white"])?;
    println!("{:18} {:>8} {:>8} {:>8} {:>8}", "group", "data", "mean", "min", "> 0.8");
    for (s, v) in ratios.iter().enumerate() {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let min = v.iter().copied().fold(f64::INFINITY, f64::min);
        let above = v.iter().filter(|&&r| r > 0.8).count() as f64 / v.len() as f64;
        println!(
            "{:18} {:8.3} {mean:8.4} {min:8.4} {above:8.3}",
            schema.sensitive_label(s),
            original[s].unwrap_or(f64::NAN)
        );
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(&dir).expect("create output directory");
        for (r, t) in samples.iter().enumerate() {
            write_counts(&Path::new(&dir).join(format!("sample_{r:04}.json")), t)?;
        }
        println!("wrote {} tables to {dir}", samples.len());
    }
    Ok(())
}
