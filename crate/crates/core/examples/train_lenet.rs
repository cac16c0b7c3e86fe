//! A short LeNet-5 training run from a preset, as the `train` subcommand
//! does it.
//!
//! cargo run --release --example train_lenet -- /path/to/data-root [preset]

use std::path::PathBuf;

use positnn::harness::{preset, train};

fn main() -> positnn::Result<()> {
    let mut args = std::env::args().skip(1);
    let root: PathBuf = args.next().map_or_else(|| "data".into(), PathBuf::from);
    let name = args.next().unwrap_or_else(|| "O12L10".into());
    let mut cfg = preset(&name, &root)?;
    cfg.subset = Some(2000);
    cfg.test_subset = Some(1000);
    cfg.epochs = 2;
    cfg.out_dir = std::env::temp_dir().join("positnn-train-example");
    println!("{cfg}");
    let run = train(&cfg, |row| println!("{}", row.csv_line()))?;
    println!("final test accuracy {:.2}% (metrics in {})", run.final_accuracy(), run.metrics_path.display());
    Ok(())
}
