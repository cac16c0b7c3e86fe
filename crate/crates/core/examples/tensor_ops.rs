//! Tensors of posits: conversion, matrix products and convolution with and
//! without quire accumulation.
//!
//! cargo run --example tensor_ops

use positnn::tensor::{conv2d, matmul, max_pool2d, ConvGeometry, Numeric, PoolGeometry, Tensor};
use positnn::PositConfig;

fn main() -> positnn::Result<()> {
    let kind = Numeric::Posit(PositConfig::of(8, 1));
    let a: Vec<f64> = (0..12).map(|i| (i as f64 - 6.0) / 5.0).collect();
    let a = Tensor::from_f64(&[3, 4], &a, kind)?;
    let b = Tensor::from_f64(&[4, 2], &[0.5, -1.0, 0.25, 2.0, -0.75, 1.0, 1.5, 0.125], kind)?;
    println!("A = {a:?}");
    println!("A·B without quire = {:?}", matmul(&a, &b, false)?.to_f64_vec());
    println!("A·B with quire    = {:?}", matmul(&a, &b, true)?.to_f64_vec());

    let image: Vec<f64> = (0..36).map(|i| ((i * 7) % 11) as f64 / 10.0).collect();
    let image = Tensor::from_f64(&[1, 1, 6, 6], &image, kind)?;
    let edge = Tensor::from_f64(&[1, 1, 3, 3], &[1.0, 0.0, -1.0, 2.0, 0.0, -2.0, 1.0, 0.0, -1.0], kind)?;
    let y = conv2d(&image, &edge, None, ConvGeometry { stride: 1, padding: 1 }, true, 1)?;
    let (pooled, _) = max_pool2d(&y, PoolGeometry::square(2))?;
    println!("conv {:?} -> pool {:?}: {:?}", y.shape(), pooled.shape(), pooled.to_f64_vec());

    let wide = pooled.convert(Numeric::Posit(PositConfig::P16));
    println!("widened to {}: {:?}", wide.kind(), wide.to_f64_vec());
    Ok(())
}
