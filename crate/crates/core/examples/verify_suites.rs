//! The built-in self-checks: quire exactness against exact rationals and
//! finite-difference gradient checks.
//!
//! cargo run --release --example verify_suites

use positnn::harness::verify;

fn main() -> positnn::Result<()> {
    let quire = verify::quire_suite(200, 20, 7)?;
    println!("{quire}");
    let grads = verify::gradcheck_suite(5)?;
    println!("{grads}");
    if !(quire.passed() && grads.passed()) {
        std::process::exit(1);
    }
    Ok(())
}
