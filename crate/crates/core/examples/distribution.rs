//! Where posit values sit: a coarse text histogram of every finite value.
//!
//! cargo run --example distribution -- 8:0

use positnn::harness::Distribution;
use positnn::PositConfig;

fn main() -> positnn::Result<()> {
    let cfg: PositConfig = std::env::args().nth(1).as_deref().unwrap_or("8:0").parse()?;
    let d = Distribution::new(cfg, 16)?;
    println!("{cfg}: {} finite values, max |value| {}", d.values.len(), d.max_abs());
    let width = 2.0 * d.max_abs() / d.buckets as f64;
    for (i, count) in d.linear_histogram().into_iter().enumerate() {
        let lo = -d.max_abs() + i as f64 * width;
        println!("{lo:>9.2} {count:>4} {}", "#".repeat(count.div_ceil(4)));
    }
    Ok(())
}
