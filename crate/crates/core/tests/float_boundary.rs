//! Kept in its own binary: the ingestion counter is process-wide.

use positnn::data::Dataset;
use positnn::nn::{build_lenet5, cross_entropy, Activation, Ctx, Sgd, StagePrecisions};
use positnn::tensor::{float_ingest_count, Numeric};
use positnn::PositConfig;

#[test]
fn training_steps_ingest_no_floats_after_quantisation() {
    let mut prec = StagePrecisions::uniform(Numeric::Posit(PositConfig::of(8, 2)), true);
    prec.optimizer = Numeric::Posit(PositConfig::of(12, 2));
    prec.loss = Numeric::Posit(PositConfig::of(10, 2));
    let pixels: Vec<u8> = (0..8 * 784).map(|i| (i * 37 % 256) as u8).collect();
    let ds = Dataset::from_raw(pixels, (0..8).collect(), 1, 28, 28).unwrap().normalize(&[0.5], &[0.5]).unwrap();
    let before = float_ingest_count();
    let x = ds.to_tensor(prec.forward).unwrap();
    assert_eq!(float_ingest_count() - before, 8 * 784);

    let mut net = build_lenet5(&prec, Activation::Tanh, 1);
    let ctx = Ctx::new(prec);
    let labels: Vec<usize> = ds.labels().iter().map(|&l| l as usize).collect();
    let start = float_ingest_count();
    for _ in 0..3 {
        let logits = net.forward(&x, &ctx).unwrap();
        let loss = cross_entropy(&logits, &labels, prec.loss, true).unwrap();
        net.backward(&loss.grad, &ctx).unwrap();
        Sgd::new(0.01, 0.9).step(net.params_mut(), &prec).unwrap();
    }
    assert_eq!(float_ingest_count(), start);
}
