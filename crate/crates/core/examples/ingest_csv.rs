//! Bins the Adult census CSV into a count table and writes it as JSON.
//!
//! ```text
//! cargo run --example ingest_csv -- [out.json]
//! ```

use std::path::Path;

use purfit::ingest::{ingest, IngestConfig};
use purfit::persist::write_counts;

fn main() -> purfit::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let config = IngestConfig::from_json_file(&root.join("configs/adult.ingest.json"))?;
    let (counts, report) = ingest(&root.join("data/adult.csv"), &config)?;

    println!(
        "read {}, accepted {}, missing {}, unmapped {}",
        report.records_read, report.accepted, report.rejected_missing, report.rejected_unmapped
    );
    let schema = counts.schema();
    println!("{} cells over {:?}", schema.n_cells(), schema.dims());
    for (feature, cats) in &report.categories {
        println!("  {feature}: {cats:?}");
    }
    let empty = counts.counts().iter().filter(|&&c| c == 0).count();
    println!("{empty} empty cells");

    if let Some(out) = std::env::args().nth(1) {
        write_counts(Path::new(&out), &counts)?;
        println!("wrote {out}");
    }
    Ok(())
}
