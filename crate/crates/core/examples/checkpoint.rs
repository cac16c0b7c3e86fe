//! Saving and reloading a model, and what happens when precisions disagree.
//!
//! cargo run --example checkpoint

use positnn::nn::{build_lenet5, Activation, StagePrecisions};
use positnn::tensor::Numeric;
use positnn::PositConfig;

fn main() -> positnn::Result<()> {
    let path = std::env::temp_dir().join("positnn-example-lenet.pnn");

    let p16 = StagePrecisions::uniform(Numeric::Posit(PositConfig::P16), false);
    let net = build_lenet5(&p16, Activation::Tanh, 1);
    net.save(&path)?;
    println!("saved {} parameters ({} bytes) to {}", net.num_params(), net.to_bytes().len(), path.display());

    let mut same = build_lenet5(&p16, Activation::Tanh, 2);
    same.load(&path, &p16)?;
    println!("reload is byte-identical: {}", same.to_bytes() == net.to_bytes());

    let p8 = StagePrecisions::uniform(Numeric::Posit(PositConfig::P8), false);
    match build_lenet5(&p8, Activation::Tanh, 1).load(&path, &p8) {
        Ok(()) => println!("unexpected: posit(8,0) model accepted a posit(16,1) checkpoint"),
        Err(e) => println!("rejected: {e}"),
    }
    Ok(())
}
