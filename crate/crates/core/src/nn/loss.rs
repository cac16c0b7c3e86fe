use crate::error::{Error, Result};
use crate::tensor::{Arith, Numeric, Tensor};

/// A scalar loss, its float64 readout, and the gradient with respect to the
/// loss input, all in the loss kind.
#[derive(Clone, Debug)]
pub struct LossOutput {
    pub loss: u64,
    pub value: f64,
    pub grad: Tensor,
}

/// Mean softmax cross-entropy over a `[B, C]` batch of logits. The gradient
/// is the fused `(softmax − onehot) / B`. Everything is evaluated in `kind`;
/// `exp` and `ln` are applied through float64 with a single rounding.
pub fn cross_entropy(logits: &Tensor, targets: &[usize], kind: Numeric, quire: bool) -> Result<LossOutput> {
    if logits.rank() != 2 || logits.shape()[0] != targets.len() || targets.is_empty() {
        return Err(Error::shape("cross_entropy", format!("logits {:?}, {} targets", logits.shape(), targets.len())));
    }
    let (b, c) = (logits.shape()[0], logits.shape()[1]);
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::Usage(format!("cross_entropy: target {t} outside {c} classes")));
    }
    let z = logits.convert(kind);
    let z = z.contiguous();
    let ar = Arith::new(kind);
    let inv_b = ar.ratio(1, b as u64);
    let one = ar.one();
    let mut row_losses = Vec::with_capacity(b);
    let mut grad = Vec::with_capacity(b * c);
    for (row, &t) in z.words().chunks(c).zip(targets) {
        let max = row.iter().copied().reduce(|m, v| if ar.compare(v, m).is_gt() { v } else { m }).expect("c > 0");
        let shifted: Vec<u64> = row.iter().map(|&v| ar.sub(v, max)).collect();
        let e: Vec<u64> = shifted.iter().map(|&v| ar.map_f64(v, f64::exp)).collect();
        let s = ar.sum(&e, quire);
        row_losses.push(ar.sub(ar.map_f64(s, f64::ln), shifted[t]));
        for (j, &ej) in e.iter().enumerate() {
            let p = ar.div(ej, s);
            let d = if j == t { ar.sub(p, one) } else { p };
            grad.push(ar.mul(d, inv_b));
        }
    }
    let loss = ar.mul(ar.sum(&row_losses, quire), inv_b);
    Ok(LossOutput { loss, value: ar.to_f64(loss), grad: Tensor::from_words(&[b, c], grad, kind)? })
}

/// Mean squared error `Σ (y − t)² / N` over all elements, gradient `2(y − t)/N`.
pub fn mse(pred: &Tensor, target: &Tensor, kind: Numeric, quire: bool) -> Result<LossOutput> {
    if pred.shape() != target.shape() || pred.numel() == 0 {
        return Err(Error::shape("mse", format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    let ar = Arith::new(kind);
    let d = pred.convert(kind).sub(&target.convert(kind))?;
    let n = d.numel() as u64;
    let loss = ar.mul(ar.dot(d.words(), d.words(), None, quire), ar.ratio(1, n));
    let two_over_n = ar.ratio(2, n);
    let grad = d.map(|ar, v| ar.mul(v, two_over_n));
    Ok(LossOutput { loss, value: ar.to_f64(loss), grad })
}
