//! Reading (Fashion-)MNIST IDX files, normalising, quantising and batching.
//!
//! cargo run --example load_dataset -- /path/to/fashion-mnist

use std::path::PathBuf;

use positnn::data::{self, Split};
use positnn::tensor::Numeric;
use positnn::PositConfig;

fn main() -> positnn::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map_or_else(|| "data/fashion-mnist".into(), PathBuf::from);
    let test = data::load_mnist_like(&dir, Split::Test)?.truncate(1000);
    println!("{} test images of {:?}", test.len(), test.image_shape());
    let mut counts = [0usize; data::NUM_CLASSES];
    for &l in test.labels() {
        counts[l as usize] += 1;
    }
    println!("label counts: {counts:?}");

    let kind = Numeric::Posit(PositConfig::of(8, 2));
    let images = test.to_tensor(kind)?;
    let order = data::epoch_order(test.len(), 1, 0);
    for (i, batch) in data::batches(&images, test.labels(), &order, 64).enumerate().take(3) {
        let (x, y) = batch?;
        println!("batch {i}: {:?} {}, first labels {:?}", x.shape(), x.kind(), &y[..5]);
    }
    Ok(())
}
