//! Per-stage precision: posit(8,2) with quire for the forward, backward and
//! gradient stages, posit(12,2) master weights and a posit(10,2) loss.
//!
//! cargo run --example mixed_precision

use positnn::harness::presets::mixed_82;
use positnn::nn::{build_lenet5, cross_entropy, scale_gradients, Activation, Ctx, Sgd};
use positnn::tensor::Tensor;

fn main() -> positnn::Result<()> {
    let prec = mixed_82(12, 10);
    println!("{prec}");
    let mut net = build_lenet5(&prec, Activation::Tanh, 7);
    let ctx = Ctx::new(prec);

    let pixels: Vec<f64> = (0..8 * 784).map(|i| ((i * 31) % 255) as f64 / 127.5 - 1.0).collect();
    let x = Tensor::from_f64(&[8, 1, 28, 28], &pixels, prec.forward)?;
    let labels = [0, 1, 2, 3, 4, 5, 6, 7];
    // loss scaled by 2^4 before backward; the optimizer divides it out
    let sgd = Sgd { grad_scale_log2: 4, ..Sgd::new(0.1, 0.9) };
    for step in 0..12 {
        let logits = net.forward(&x, &ctx)?;
        let loss = cross_entropy(&logits, &labels, prec.loss, prec.quire.loss)?;
        net.backward(&scale_gradients(&loss.grad, sgd.grad_scale_log2), &ctx)?;
        sgd.step(net.params_mut(), &prec)?;
        println!("step {step}: loss {:.4}", loss.value);
    }
    for (name, p) in net.named_params().into_iter().take(2) {
        println!("{name}: master {}, forward copy {}, in sync: {}", p.master().kind(), p.forward().kind(), p.in_sync(&prec));
    }
    Ok(())
}
