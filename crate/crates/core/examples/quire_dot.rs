//! Exact accumulation: a quire dot product rounds once, a plain loop rounds
//! after every product and sum.
//!
//! cargo run --example quire_dot

use positnn::quire::{fused_dot, Quire};
use positnn::{PositConfig, PositValue};

fn main() -> positnn::Result<()> {
    let cfg = PositConfig::of(8, 2);
    let xs: Vec<PositValue> = (0..100).map(|i| PositValue::from_f64(0.01 * (i % 7) as f64 + 0.03, cfg)).collect();
    let ws: Vec<PositValue> = (0..100).map(|i| PositValue::from_f64(if i % 2 == 0 { 0.5 } else { -0.45 }, cfg)).collect();

    let mut naive = cfg.zero();
    for (x, w) in xs.iter().zip(&ws) {
        naive = naive + *x * *w;
    }
    let exact: f64 = xs.iter().zip(&ws).map(|(x, w)| x.to_f64() * w.to_f64()).sum();
    println!("float64 sum of the same products: {exact}");
    println!("rounded at every step:            {naive}");
    println!("quire, rounded once:              {}", fused_dot(&xs, &ws)?);

    let mut q = Quire::new(cfg);
    q.add_posit(cfg.maxpos())?;
    q.add_posit(cfg.minpos())?;
    q.sub_posit(cfg.maxpos())?;
    println!("maxpos + minpos - maxpos in a {}-bit quire = {}", q.width_bits(), q.to_posit());
    Ok(())
}
