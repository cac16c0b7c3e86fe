//! Central finite differences, independent of the library's own checker.

use positnn::nn::{
    AvgPool2d, BatchNorm, Conv2d, Ctx, Dropout, Flatten, Layer, Linear, MaxPool2d, Relu, Sigmoid, StagePrecisions,
    Tanh,
};
use positnn::tensor::{ConvGeometry, Numeric, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

pub fn f64_prec() -> StagePrecisions {
    StagePrecisions::uniform(Numeric::F64, false)
}

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut v = x.to_vec();
            v[i] = x[i] + H;
            let up = f(&v);
            v[i] = x[i] - H;
            (up - f(&v)) / (2.0 * H)
        })
        .collect()
}

/// Relative error with the denominator floored at 1e-4.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4)).fold(0.0, f64::max)
}

pub fn tensor(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::from_f64(shape, v, Numeric::F64).unwrap()
}

fn uniform(n: usize, rng: &mut ChaCha8Rng, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub const LAYERS: [&str; 11] =
    ["linear", "conv2d", "maxpool2d", "avgpool2d", "relu", "tanh", "sigmoid", "flatten", "dropout", "batchnorm", "batchnorm1d"];

/// A randomly shaped instance of `name` with an input kept away from kinks.
pub fn case(name: &str, seed: u64) -> (Box<dyn Layer>, Vec<usize>, Vec<f64>) {
    let prec = f64_prec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9));
    match name {
        "linear" => {
            let (i, o, b) = (rng.gen_range(1..8), rng.gen_range(1..6), rng.gen_range(1..4));
            (Box::new(Linear::new(i, o, &prec, &mut rng)), vec![b, i], uniform(b * i, &mut rng, 1.0))
        }
        "conv2d" => {
            let stride = rng.gen_range(1..=2);
            let padding = rng.gen_range(0..=2);
            let (c, f, k, hw) = (rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(4..=7));
            let layer = Conv2d::new(c, f, k, ConvGeometry { stride, padding: padding.min(k - 1) }, &prec, &mut rng);
            (Box::new(layer), vec![2, c, hw, hw], uniform(2 * c * hw * hw, &mut rng, 1.0))
        }
        "maxpool2d" => {
            let mut v: Vec<f64> = (0..64).map(|i| i as f64 / 16.0 - 2.0).collect();
            v.shuffle(&mut rng);
            (Box::new(MaxPool2d::new(2)), vec![2, 2, 4, 4], v)
        }
        "avgpool2d" => (Box::new(AvgPool2d::new(2)), vec![2, 2, 4, 4], uniform(64, &mut rng, 1.0)),
        "relu" => {
            let v = (0..12).map(|_| rng.gen_range(0.01..2.0) * if rng.gen() { 1.0 } else { -1.0 }).collect();
            (Box::new(Relu::new()), vec![3, 4], v)
        }
        "tanh" => (Box::new(Tanh::new()), vec![3, 4], uniform(12, &mut rng, 3.0)),
        "sigmoid" => (Box::new(Sigmoid::new()), vec![3, 4], uniform(12, &mut rng, 4.0)),
        "flatten" => (Box::new(Flatten::new()), vec![2, 3, 2, 2], uniform(24, &mut rng, 1.0)),
        "dropout" => (Box::new(Dropout::new(0.4, seed).unwrap()), vec![5, 5], uniform(25, &mut rng, 1.0)),
        "batchnorm" | "batchnorm1d" => {
            let mut bn = BatchNorm::new(2, &prec);
            for p in bn.params_mut() {
                let v = uniform(2, &mut rng, 1.5);
                p.set_master(tensor(&[2], &v), &prec).unwrap();
            }
            let shape = if name == "batchnorm" { vec![3, 2, 2, 3] } else { vec![6, 2] };
            let n = shape.iter().product();
            (Box::new(bn), shape, uniform(n, &mut rng, 2.0))
        }
        _ => panic!("no case for {name}"),
    }
}

/// Worst relative error between `backward` and finite differences of
/// `Σ r ⊙ forward(x)`, over the input and every parameter.
pub fn layer_error(name: &str, seed: u64) -> f64 {
    let (mut layer, shape, x) = case(name, seed);
    let prec = f64_prec();
    let ctx = Ctx::new(prec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    layer.reseed(seed);
    let y = layer.forward(&tensor(&shape, &x), &ctx).unwrap();
    let r = uniform(y.numel(), &mut rng, 1.0);
    let dx = layer.backward(&tensor(y.shape(), &r), &ctx, true).unwrap().unwrap().to_f64_vec();
    let grads: Vec<(Vec<usize>, Vec<f64>, Vec<f64>)> = layer
        .params()
        .iter()
        .map(|p| (p.master().shape().to_vec(), p.master().to_f64_vec(), p.grad().unwrap().to_f64_vec()))
        .collect();
    let objective = |layer: &mut Box<dyn Layer>, x: &[f64]| -> f64 {
        layer.reseed(seed);
        let out = layer.forward(&tensor(&shape, x), &ctx).unwrap().to_f64_vec();
        out.iter().zip(&r).map(|(a, b)| a * b).sum()
    };
    let mut worst = max_rel_err(&dx, &central_diff(|v| objective(&mut layer, v), &x));
    for (pi, (pshape, w, g)) in grads.iter().enumerate() {
        let numeric = central_diff(
            |v| {
                layer.params_mut()[pi].set_master(tensor(pshape, v), &prec).unwrap();
                objective(&mut layer, &x)
            },
            w,
        );
        layer.params_mut()[pi].set_master(tensor(pshape, w), &prec).unwrap();
        worst = worst.max(max_rel_err(g, &numeric));
    }
    worst
}
