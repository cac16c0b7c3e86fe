//! Central finite differences against every layer's float64 backward pass.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{
    cross_entropy, mse, AvgPool2d, BatchNorm, Conv2d, Ctx, Dropout, Flatten, Layer, Linear, MaxPool2d, Relu, Sigmoid,
    StagePrecisions, Tanh,
};
use crate::tensor::{ConvGeometry, Numeric, Tensor};

pub const FD_STEP: f64 = 1e-5;

/// `|a − n| / max(|a|, |n|, 1e-4)`: relative error, compared absolutely
/// when both sides are tiny.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[derive(Clone, Debug)]
pub struct LayerCheck {
    pub layer: &'static str,
    pub max_rel_err: f64,
}

fn f64_prec() -> StagePrecisions {
    StagePrecisions::uniform(Numeric::F64, false)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::from_f64(shape, &v, Numeric::F64).expect("shape")
}

/// Values bounded away from zero, so ReLU's kink is never crossed.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let v: Vec<f64> =
        (0..n).map(|_| rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Tensor::from_f64(shape, &v, Numeric::F64).expect("shape")
}

/// Distinct values at least 0.05 apart, so max-pooling never changes winner.
fn distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.05 - n as f64 * 0.025).collect();
    v.shuffle(rng);
    Tensor::from_f64(shape, &v, Numeric::F64).expect("shape")
}

/// Largest relative error over the input gradient and every parameter
/// gradient of `layer` at `x`, for the scalar `L = Σ r ⊙ layer(x)`.
pub fn check_layer(layer: &mut dyn Layer, x: &Tensor, seed: u64) -> Result<f64> {
    let ctx = Ctx::new(f64_prec());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    layer.reseed(seed);
    let y = layer.forward(x, &ctx)?;
    let r = random(y.shape(), &mut rng);
    let r_vals = r.to_f64_vec();
    let dx = layer.backward(&r, &ctx, true)?.expect("dx requested").to_f64_vec();
    let grads: Vec<Vec<f64>> =
        layer.params().iter().map(|p| p.grad().expect("backward stores gradients").to_f64_vec()).collect();

    let objective = |layer: &mut dyn Layer, x: &Tensor| -> Result<f64> {
        layer.reseed(seed);
        Ok(dot(&layer.forward(x, &ctx)?.to_f64_vec(), &r_vals))
    };
    let mut worst = 0f64;
    let base = x.to_f64_vec();
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] = base[i] + FD_STEP;
        let up = objective(layer, &Tensor::from_f64(x.shape(), &v, Numeric::F64)?)?;
        v[i] = base[i] - FD_STEP;
        let down = objective(layer, &Tensor::from_f64(x.shape(), &v, Numeric::F64)?)?;
        worst = worst.max(rel_err(dx[i], (up - down) / (2.0 * FD_STEP)));
    }
    let prec = f64_prec();
    for (pi, analytic) in grads.iter().enumerate() {
        let master = layer.params()[pi].master().clone();
        let w = master.to_f64_vec();
        for (i, &a) in analytic.iter().enumerate() {
            let mut at = |delta: f64| -> Result<f64> {
                let mut v = w.clone();
                v[i] += delta;
                layer.params_mut()[pi].set_master(Tensor::from_f64(master.shape(), &v, Numeric::F64)?, &prec)?;
                objective(layer, x)
            };
            let numeric = (at(FD_STEP)? - at(-FD_STEP)?) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(a, numeric));
        }
        layer.params_mut()[pi].set_master(master, &prec)?;
    }
    Ok(worst)
}

fn loss_check(seed: u64, which: &str) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = random(&[3, 5], &mut rng).scale(3.0);
    let base = z.to_f64_vec();
    let targets: Vec<usize> = (0..3).map(|_| rng.gen_range(0..5)).collect();
    let t = random(&[3, 5], &mut rng);
    let eval = |z: &Tensor| match which {
        "cross_entropy" => cross_entropy(z, &targets, Numeric::F64, false),
        _ => mse(z, &t, Numeric::F64, false),
    };
    let g = eval(&z)?.grad.to_f64_vec();
    let mut worst = 0f64;
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] += FD_STEP;
        let up = eval(&Tensor::from_f64(z.shape(), &v, Numeric::F64)?)?.value;
        v[i] -= 2.0 * FD_STEP;
        let down = eval(&Tensor::from_f64(z.shape(), &v, Numeric::F64)?)?.value;
        worst = worst.max(rel_err(g[i], (up - down) / (2.0 * FD_STEP)));
    }
    Ok(worst)
}

/// Names of every checked layer and loss, in report order.
pub const CHECKED: [&str; 13] = [
    "linear",
    "conv2d",
    "maxpool2d",
    "avgpool2d",
    "relu",
    "tanh",
    "sigmoid",
    "flatten",
    "dropout",
    "batchnorm2d",
    "batchnorm1d",
    "cross_entropy",
    "mse",
];

const GEOMETRIES: [(usize, usize); 5] = [(1, 0), (1, 1), (2, 1), (2, 0), (1, 2)];

/// One random instance of `name` with its input.
fn instance(name: &str, seed: u64) -> Result<(Box<dyn Layer>, Tensor)> {
    let prec = f64_prec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match name {
        "linear" => {
            let (i, o) = (rng.gen_range(2..7), rng.gen_range(1..5));
            (Box::new(Linear::new(i, o, &prec, &mut rng)), random(&[3, i], &mut rng))
        }
        "conv2d" => {
            let (stride, padding) = GEOMETRIES[seed as usize % GEOMETRIES.len()];
            let layer = Conv2d::new(2, 3, 3, ConvGeometry { stride, padding }, &prec, &mut rng);
            (Box::new(layer), random(&[2, 2, 6, 6], &mut rng))
        }
        "maxpool2d" => (Box::new(MaxPool2d::new(2)), distinct(&[2, 2, 4, 4], &mut rng)),
        "avgpool2d" => (Box::new(AvgPool2d::new(2)), random(&[2, 2, 4, 4], &mut rng)),
        "relu" => (Box::new(Relu::new()), away_from_zero(&[3, 5], &mut rng)),
        "tanh" => (Box::new(Tanh::new()), random(&[3, 5], &mut rng).scale(2.0)),
        "sigmoid" => (Box::new(Sigmoid::new()), random(&[3, 5], &mut rng).scale(3.0)),
        "flatten" => (Box::new(Flatten::new()), random(&[2, 2, 3, 3], &mut rng)),
        "dropout" => (Box::new(Dropout::new(0.3, seed)?), random(&[4, 6], &mut rng)),
        "batchnorm2d" | "batchnorm1d" => {
            let mut bn = BatchNorm::new(3, &prec);
            for p in bn.params_mut() {
                let t = random(p.master().shape(), &mut rng);
                p.set_master(t, &prec)?;
            }
            let shape: &[usize] = if name == "batchnorm2d" { &[4, 3, 2, 2] } else { &[5, 3] };
            (Box::new(bn), random(shape, &mut rng))
        }
        _ => unreachable!("unknown layer {name}"),
    })
}

/// Worst relative error of `name` for one seed.
pub fn check(name: &str, seed: u64) -> Result<f64> {
    match name {
        "cross_entropy" | "mse" => loss_check(seed, name),
        _ => {
            let (mut layer, x) = instance(name, seed)?;
            check_layer(layer.as_mut(), &x, seed)
        }
    }
}

/// Worst relative error per layer over `seeds`.
pub fn gradcheck_all(seeds: std::ops::Range<u64>) -> Result<Vec<LayerCheck>> {
    CHECKED
        .iter()
        .map(|&layer| {
            let mut worst = 0f64;
            for s in seeds.clone() {
                worst = worst.max(check(layer, s)?);
            }
            Ok(LayerCheck { layer, max_rel_err: worst })
        })
        .collect()
}
