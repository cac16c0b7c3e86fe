use super::{MixedParam, StagePrecisions};
use crate::error::{Error, Result};
use crate::tensor::{Arith, Tensor};

/// Multiplies by `2^log2`. Exact whenever the scaled value is representable;
/// in posit formats scaling away from 1 lengthens the regime and can drop
/// fraction bits, and extreme values saturate.
pub fn scale_gradients(t: &Tensor, log2: i32) -> Tensor {
    if log2 == 0 {
        return t.clone();
    }
    t.scale(2f64.powi(log2))
}

/// Stochastic gradient descent with heavy-ball momentum
/// (`v ← μ·v + g`, `w ← w − lr·v`), evaluated entirely in the optimizer kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    /// Gradients arrive multiplied by `2^grad_scale_log2`; the step divides it out.
    pub grad_scale_log2: i32,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Self {
        Sgd { lr, momentum, grad_scale_log2: 0 }
    }

    pub fn step<'a>(&self, params: impl IntoIterator<Item = &'a mut MixedParam>, prec: &StagePrecisions) -> Result<()> {
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(Error::Usage(format!("learning rate must be positive, got {}", self.lr)));
        }
        let kind = prec.optimizer;
        let ar = Arith::new(kind);
        let lr = ar.from_f64(self.lr);
        let mu = ar.from_f64(self.momentum);
        for p in params {
            let Some(g) = p.take_grad() else { continue };
            let g = scale_gradients(&g.convert(kind), -self.grad_scale_log2);
            let v = if self.momentum != 0.0 {
                let v = match p.momentum.take() {
                    Some(v) => v.zip(&g, |ar, v, g| ar.add(ar.mul(mu, v), g))?,
                    None => g,
                };
                p.momentum = Some(v.clone());
                v
            } else {
                g
            };
            let w = p.master().zip(&v, |ar, w, v| ar.sub(w, ar.mul(lr, v)))?;
            p.set_master(w, prec)?;
        }
        Ok(())
    }
}
