//! Scalar posit arithmetic: encoding, rounding, saturation and NaR.
//!
//! cargo run --example posit_arithmetic

use positnn::{PositConfig, PositValue};

fn main() -> positnn::Result<()> {
    let p8: PositConfig = "8:0".parse()?;
    let a = PositValue::from_f64(1.5, p8);
    let b = PositValue::from_f64(0.3, p8);
    println!("{a:?} + {b:?} = {:?}", a + b);
    println!("{a} * {b} = {}", a * b);

    // nothing overflows to infinity or underflows to zero
    println!("maxpos * maxpos = {}", p8.maxpos() * p8.maxpos());
    println!("minpos / 4      = {}", p8.minpos() / PositValue::from_f64(4.0, p8));
    println!("1 / 0           = {}", p8.one() / p8.zero());

    for cfg in [PositConfig::P8, PositConfig::P16, PositConfig::P32, PositConfig::P64] {
        println!(
            "{cfg}: dynamic range 2^±{}, quire {} bits, exact dots up to {} terms",
            cfg.dynamic_range_log2(),
            cfg.quire_bits(),
            cfg.dot_product_limit()
        );
    }

    let p16 = PositConfig::P16;
    let third = PositValue::from_ratio(1, 3, p16);
    println!("1/3 in {p16}: {third:?}, back in {p8}: {:?}", third.convert(p8));
    Ok(())
}
