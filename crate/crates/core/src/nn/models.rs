use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{AvgPool2d, Conv2d, Flatten, Linear, MaxPool2d, Relu, Sigmoid, Tanh};
use super::{Sequential, StagePrecisions};
use crate::error::Error;
use crate::tensor::ConvGeometry;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    fn push(self, net: &mut Sequential, label: &str) {
        match self {
            Activation::Tanh => net.push(label, Tanh::new()),
            Activation::Relu => net.push(label, Relu::new()),
            Activation::Sigmoid => net.push(label, Sigmoid::new()),
        };
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            _ => Err(Error::Usage(format!("unknown activation {s:?} (tanh, relu, sigmoid)"))),
        }
    }
}

/// LeNet-5 for 1×28×28 inputs: conv 6@5×5 (pad 2) → pool → conv 16@5×5 →
/// pool → fc 120 → fc 84 → fc 10, max pooling, 61,706 parameters.
pub fn build_lenet5(prec: &StagePrecisions, act: Activation, seed: u64) -> Sequential {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Sequential::new();
    net.push("conv1", Conv2d::new(1, 6, 5, ConvGeometry { stride: 1, padding: 2 }, prec, &mut rng));
    act.push(&mut net, "act1");
    net.push("pool1", MaxPool2d::new(2));
    net.push("conv2", Conv2d::new(6, 16, 5, ConvGeometry::default(), prec, &mut rng));
    act.push(&mut net, "act2");
    net.push("pool2", MaxPool2d::new(2));
    net.push("flatten", Flatten::new());
    net.push("fc1", Linear::new(400, 120, prec, &mut rng));
    act.push(&mut net, "act3");
    net.push("fc2", Linear::new(120, 84, prec, &mut rng));
    act.push(&mut net, "act4");
    net.push("fc3", Linear::new(84, 10, prec, &mut rng));
    net
}

/// CifarNet for 3×32×32 inputs: conv 32@5×5 → max pool → relu → conv 32@5×5
/// → relu → avg pool → conv 64@5×5 → relu → avg pool → fc 64 → fc 10, all
/// convolutions padded by 2.
pub fn build_cifarnet(prec: &StagePrecisions, seed: u64) -> Sequential {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let same = ConvGeometry { stride: 1, padding: 2 };
    let mut net = Sequential::new();
    net.push("conv1", Conv2d::new(3, 32, 5, same, prec, &mut rng));
    net.push("pool1", MaxPool2d::new(2));
    net.push("act1", Relu::new());
    net.push("conv2", Conv2d::new(32, 32, 5, same, prec, &mut rng));
    net.push("act2", Relu::new());
    net.push("pool2", AvgPool2d::new(2));
    net.push("conv3", Conv2d::new(32, 64, 5, same, prec, &mut rng));
    net.push("act3", Relu::new());
    net.push("pool3", AvgPool2d::new(2));
    net.push("flatten", Flatten::new());
    net.push("fc1", Linear::new(64 * 4 * 4, 64, prec, &mut rng));
    net.push("fc2", Linear::new(64, 10, prec, &mut rng));
    net
}
