use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{missing_cache, Ctx, Layer, MixedParam, Stage, StagePrecisions};
use crate::error::{Error, Result};
use crate::tensor::{
    self, avg_pool2d, avg_pool2d_backward, conv2d, conv2d_backward_input, conv2d_backward_weight, matmul_nt,
    max_pool2d, max_pool2d_backward, Arith, ConvGeometry, Numeric, PoolGeometry, Tensor,
};

/// Uniform `[-1/√fan_in, 1/√fan_in]` samples drawn in float64 and rounded
/// once into the optimizer kind.
fn fan_in_uniform(shape: &[usize], fan_in: usize, prec: &StagePrecisions, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_f64(shape, &v, prec.optimizer).expect("shape matches")
}

fn expect_rank(layer: &'static str, x: &Tensor, rank: usize) -> Result<()> {
    if x.rank() != rank {
        return Err(Error::shape(layer, format!("expected rank {rank} input, got {:?}", x.shape())));
    }
    Ok(())
}

fn transposed(t: &Tensor) -> Result<Tensor> {
    Ok(t.transpose2d()?.contiguous().into_owned())
}

/// Fully connected layer `y = x·Wᵀ + b` on `[B, in]` inputs.
pub struct Linear {
    weight: MixedParam,
    bias: MixedParam,
    x: Option<Tensor>,
}

impl Linear {
    pub fn new(in_features: usize, out_features: usize, prec: &StagePrecisions, rng: &mut impl Rng) -> Self {
        let w = fan_in_uniform(&[out_features, in_features], in_features, prec, rng);
        let b = fan_in_uniform(&[out_features], in_features, prec, rng);
        Linear::from_tensors(w, b, prec).expect("consistent shapes")
    }

    pub fn from_tensors(weight: Tensor, bias: Tensor, prec: &StagePrecisions) -> Result<Self> {
        if weight.rank() != 2 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("Linear", format!("weight {:?}, bias {:?}", weight.shape(), bias.shape())));
        }
        Ok(Linear { weight: MixedParam::new("weight", weight, prec), bias: MixedParam::new("bias", bias, prec), x: None })
    }

    pub fn weight(&self) -> &MixedParam {
        &self.weight
    }

    pub fn bias(&self) -> &MixedParam {
        &self.bias
    }
}

impl Layer for Linear {
    fn kind(&self) -> &'static str {
        "linear"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        expect_rank("Linear", x, 2)?;
        let x = x.convert(ctx.prec.forward);
        let y = matmul_nt(&x, self.weight.forward(), Some(self.bias.forward()), ctx.quire(Stage::Forward), ctx.workers)?;
        self.x = ctx.training.then_some(x);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, need_dx: bool) -> Result<Option<Tensor>> {
        let x = self.x.take().ok_or_else(|| missing_cache("Linear"))?;
        let dy = dy.convert(ctx.prec.backward);
        let g = ctx.prec.gradient;
        let qg = ctx.quire(Stage::Gradient);
        let dy_g = dy.convert(g);
        let dw = matmul_nt(&transposed(&dy_g)?, &transposed(&x.convert(g))?, None, qg, ctx.workers)?;
        let db = tensor::column_sums(&dy_g, qg)?;
        self.weight.set_grad(dw)?;
        self.bias.set_grad(db)?;
        if !need_dx {
            return Ok(None);
        }
        let wt = transposed(self.weight.backward())?;
        Ok(Some(matmul_nt(&dy, &wt, None, ctx.quire(Stage::Backward), ctx.workers)?))
    }

    fn params(&self) -> Vec<&MixedParam> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut MixedParam> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 2-D convolution (cross-correlation) with square kernels and zero padding.
pub struct Conv2d {
    weight: MixedParam,
    bias: MixedParam,
    geom: ConvGeometry,
    x: Option<Tensor>,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        geom: ConvGeometry,
        prec: &StagePrecisions,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let w = fan_in_uniform(&[out_channels, in_channels, kernel, kernel], fan_in, prec, rng);
        let b = fan_in_uniform(&[out_channels], fan_in, prec, rng);
        Conv2d::from_tensors(w, b, geom, prec).expect("consistent shapes")
    }

    pub fn from_tensors(weight: Tensor, bias: Tensor, geom: ConvGeometry, prec: &StagePrecisions) -> Result<Self> {
        if weight.rank() != 4 || bias.shape() != [weight.shape()[0]] {
            return Err(Error::shape("Conv2d", format!("weight {:?}, bias {:?}", weight.shape(), bias.shape())));
        }
        Ok(Conv2d {
            weight: MixedParam::new("weight", weight, prec),
            bias: MixedParam::new("bias", bias, prec),
            geom,
            x: None,
        })
    }
}

impl Layer for Conv2d {
    fn kind(&self) -> &'static str {
        "conv2d"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        expect_rank("Conv2d", x, 4)?;
        let x = x.convert(ctx.prec.forward);
        let y = conv2d(
            &x,
            self.weight.forward(),
            Some(self.bias.forward()),
            self.geom,
            ctx.quire(Stage::Forward),
            ctx.workers,
        )?;
        self.x = ctx.training.then_some(x);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, need_dx: bool) -> Result<Option<Tensor>> {
        let x = self.x.take().ok_or_else(|| missing_cache("Conv2d"))?;
        let dy = dy.convert(ctx.prec.backward);
        let g = ctx.prec.gradient;
        let ws = self.weight.master().shape().to_vec();
        let (dw, db) = conv2d_backward_weight(
            &x.convert(g),
            &dy.convert(g),
            (ws[2], ws[3]),
            self.geom,
            ctx.quire(Stage::Gradient),
            ctx.workers,
        )?;
        self.weight.set_grad(dw)?;
        self.bias.set_grad(db)?;
        if !need_dx {
            return Ok(None);
        }
        let hw = (x.shape()[2], x.shape()[3]);
        let dx = conv2d_backward_input(&dy, self.weight.backward(), hw, self.geom, ctx.quire(Stage::Backward), ctx.workers)?;
        Ok(Some(dx))
    }

    fn params(&self) -> Vec<&MixedParam> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut MixedParam> {
        vec![&mut self.weight, &mut self.bias]
    }
}

pub struct MaxPool2d {
    geom: PoolGeometry,
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

impl MaxPool2d {
    pub fn new(window: usize) -> Self {
        MaxPool2d { geom: PoolGeometry::square(window), cache: None }
    }
}

impl Layer for MaxPool2d {
    fn kind(&self) -> &'static str {
        "maxpool2d"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let (y, arg) = max_pool2d(x, self.geom)?;
        self.cache = ctx.training.then(|| (arg, x.shape().to_vec()));
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, _need_dx: bool) -> Result<Option<Tensor>> {
        let (arg, shape) = self.cache.take().ok_or_else(|| missing_cache("MaxPool2d"))?;
        Ok(Some(max_pool2d_backward(&dy.convert(ctx.prec.backward), &arg, &shape)?))
    }
}

pub struct AvgPool2d {
    geom: PoolGeometry,
    input_shape: Option<Vec<usize>>,
}

impl AvgPool2d {
    pub fn new(window: usize) -> Self {
        AvgPool2d { geom: PoolGeometry::square(window), input_shape: None }
    }
}

impl Layer for AvgPool2d {
    fn kind(&self) -> &'static str {
        "avgpool2d"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let y = avg_pool2d(x, self.geom, ctx.quire(Stage::Forward))?;
        self.input_shape = ctx.training.then(|| x.shape().to_vec());
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, _need_dx: bool) -> Result<Option<Tensor>> {
        let shape = self.input_shape.take().ok_or_else(|| missing_cache("AvgPool2d"))?;
        Ok(Some(avg_pool2d_backward(&dy.convert(ctx.prec.backward), &shape, self.geom)?))
    }
}

#[derive(Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }
}

impl Layer for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let ar = x.arith();
        let mask: Vec<bool> = x.contiguous().words().iter().map(|&w| ar.is_positive(w)).collect();
        let y = Tensor::from_words(
            x.shape(),
            x.contiguous().words().iter().zip(&mask).map(|(&w, &m)| if m { w } else { 0 }).collect(),
            x.kind(),
        )?;
        self.mask = ctx.training.then_some(mask);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, _need_dx: bool) -> Result<Option<Tensor>> {
        let mask = self.mask.take().ok_or_else(|| missing_cache("Relu"))?;
        let dy = dy.convert(ctx.prec.backward);
        if mask.len() != dy.numel() {
            return Err(Error::shape("Relu", format!("{} cached, {} gradients", mask.len(), dy.numel())));
        }
        let dx = dy.words().iter().zip(&mask).map(|(&g, &m)| if m { g } else { 0 }).collect();
        Ok(Some(Tensor::from_words(dy.shape(), dx, dy.kind())?))
    }
}

#[derive(Default)]
pub struct Tanh {
    y: Option<Tensor>,
}

impl Tanh {
    pub fn new() -> Self {
        Tanh::default()
    }
}

impl Layer for Tanh {
    fn kind(&self) -> &'static str {
        "tanh"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let y = x.map(|ar, w| ar.map_f64(w, f64::tanh));
        self.y = ctx.training.then(|| y.clone());
        Ok(y)
    }

    /// `dx = dy · (1 − y²)`
    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, _need_dx: bool) -> Result<Option<Tensor>> {
        let y = self.y.take().ok_or_else(|| missing_cache("Tanh"))?.convert(ctx.prec.backward);
        let one = Arith::new(ctx.prec.backward).one();
        Ok(Some(dy.convert(ctx.prec.backward).zip(&y, |ar, g, y| ar.mul(g, ar.sub(one, ar.mul(y, y))))?))
    }
}

#[derive(Default)]
pub struct Sigmoid {
    y: Option<Tensor>,
}

impl Sigmoid {
    pub fn new() -> Self {
        Sigmoid::default()
    }
}

impl Layer for Sigmoid {
    fn kind(&self) -> &'static str {
        "sigmoid"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let y = x.map(|ar, w| ar.map_f64(w, |v| 1.0 / (1.0 + (-v).exp())));
        self.y = ctx.training.then(|| y.clone());
        Ok(y)
    }

    /// `dx = dy · y · (1 − y)`
    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, _need_dx: bool) -> Result<Option<Tensor>> {
        let y = self.y.take().ok_or_else(|| missing_cache("Sigmoid"))?.convert(ctx.prec.backward);
        let one = Arith::new(ctx.prec.backward).one();
        Ok(Some(dy.convert(ctx.prec.backward).zip(&y, |ar, g, y| ar.mul(g, ar.mul(y, ar.sub(one, y))))?))
    }
}

/// Collapses everything after the batch dimension.
#[derive(Default)]
pub struct Flatten {
    shape: Option<Vec<usize>>,
}

impl Flatten {
    pub fn new() -> Self {
        Flatten::default()
    }
}

impl Layer for Flatten {
    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        if x.rank() == 0 {
            return Err(Error::shape("Flatten", "scalar input"));
        }
        let b = x.shape()[0];
        let rest = x.shape()[1..].iter().product();
        self.shape = ctx.training.then(|| x.shape().to_vec());
        x.reshape(&[b, rest])
    }

    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, _need_dx: bool) -> Result<Option<Tensor>> {
        let shape = self.shape.take().ok_or_else(|| missing_cache("Flatten"))?;
        Ok(Some(dy.convert(ctx.prec.backward).reshape(&shape)?))
    }
}

/// Inverted dropout: surviving activations are scaled by `1/(1−p)` during
/// training, and the layer is the identity in evaluation.
pub struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
    mask: Option<Vec<bool>>,
}

impl Dropout {
    pub fn new(p: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Usage(format!("dropout probability {p} outside [0, 1)")));
        }
        Ok(Dropout { p, rng: ChaCha8Rng::seed_from_u64(seed), mask: None })
    }

    fn apply(&self, t: &Tensor, mask: &[bool]) -> Result<Tensor> {
        let ar = t.arith();
        let scale = ar.from_f64(1.0 / (1.0 - self.p));
        let t = t.contiguous();
        let data = t.words().iter().zip(mask).map(|(&w, &keep)| if keep { ar.mul(w, scale) } else { 0 }).collect();
        Tensor::from_words(t.shape(), data, t.kind())
    }
}

impl Layer for Dropout {
    fn kind(&self) -> &'static str {
        "dropout"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        if !ctx.training {
            return Ok(x.clone());
        }
        let mask: Vec<bool> = (0..x.numel()).map(|_| self.rng.gen::<f64>() >= self.p).collect();
        let y = self.apply(x, &mask)?;
        self.mask = Some(mask);
        Ok(y)
    }

    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, _need_dx: bool) -> Result<Option<Tensor>> {
        let mask = self.mask.take().ok_or_else(|| missing_cache("Dropout"))?;
        Ok(Some(self.apply(&dy.convert(ctx.prec.backward), &mask)?))
    }

    fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }
}

/// `total / m` with one rounding when `m` is representable in the kind.
fn mean_of(ar: &Arith, total: u64, m: u64) -> u64 {
    let mw = ar.from_f64(m as f64);
    if ar.to_f64(mw) == m as f64 {
        ar.div(total, mw)
    } else {
        ar.mul(total, ar.ratio(1, m))
    }
}

struct BnCache {
    xhat: Tensor,
    inv_std: Vec<u64>,
}

/// Per-channel batch normalisation over `[N, C]` or `[N, C, H, W]` inputs.
/// Running statistics live in the optimizer kind.
pub struct BatchNorm {
    channels: usize,
    gamma: MixedParam,
    beta: MixedParam,
    running_mean: Tensor,
    running_var: Tensor,
    momentum: f64,
    cache: Option<BnCache>,
}

/// 2^-10, exact in every format used here.
pub const BATCHNORM_EPS: f64 = 1.0 / 1024.0;

impl BatchNorm {
    pub fn new(channels: usize, prec: &StagePrecisions) -> Self {
        BatchNorm {
            channels,
            gamma: MixedParam::new("gamma", Tensor::full(&[channels], 1.0, prec.optimizer), prec),
            beta: MixedParam::new("beta", Tensor::zeros(&[channels], prec.optimizer), prec),
            running_mean: Tensor::zeros(&[channels], prec.optimizer),
            running_var: Tensor::full(&[channels], 1.0, prec.optimizer),
            momentum: 0.1,
            cache: None,
        }
    }

    fn layout(&self, x: &Tensor) -> Result<(usize, usize)> {
        if x.rank() < 2 || x.shape()[1] != self.channels {
            return Err(Error::shape("BatchNorm", format!("{} channels, input {:?}", self.channels, x.shape())));
        }
        Ok((x.shape()[0], x.shape()[2..].iter().product()))
    }

    fn channel_indices(n: usize, c: usize, s: usize, ch: usize) -> impl Iterator<Item = usize> {
        (0..n).flat_map(move |i| (0..s).map(move |j| (i * c + ch) * s + j))
    }

    fn update_running(&mut self, means: Vec<u64>, vars: Vec<u64>, kind: Numeric) -> Result<()> {
        let opt = self.running_mean.kind();
        let mean = Tensor::from_words(&[self.channels], means, kind)?.convert(opt);
        let var = Tensor::from_words(&[self.channels], vars, kind)?.convert(opt);
        let ar = Arith::new(opt);
        let m = ar.from_f64(self.momentum);
        let blend = |run: &Tensor, batch: &Tensor| run.zip(batch, |ar, r, b| ar.add(r, ar.mul(m, ar.sub(b, r))));
        self.running_mean = blend(&self.running_mean, &mean)?;
        self.running_var = blend(&self.running_var, &var)?;
        Ok(())
    }
}

impl Layer for BatchNorm {
    fn kind(&self) -> &'static str {
        "batchnorm"
    }

    fn forward(&mut self, x: &Tensor, ctx: &Ctx) -> Result<Tensor> {
        let (n, s) = self.layout(x)?;
        let c = self.channels;
        let x = x.convert(ctx.prec.forward);
        let ar = x.arith();
        let q = ctx.quire(Stage::Forward);
        let eps = ar.from_f64(BATCHNORM_EPS);
        let rsqrt = |v: u64| ar.map_f64(ar.add(v, eps), |v| 1.0 / v.sqrt());
        let (gamma, beta) = (self.gamma.forward().words(), self.beta.forward().words());
        let xw = x.words();
        let mut xhat = vec![0u64; xw.len()];
        let mut y = vec![0u64; xw.len()];
        let mut inv_std = Vec::with_capacity(c);
        if ctx.training {
            let m = (n * s) as u64;
            let mut means = Vec::with_capacity(c);
            let mut vars = Vec::with_capacity(c);
            for ch in 0..c {
                let idx: Vec<usize> = Self::channel_indices(n, c, s, ch).collect();
                let vals: Vec<u64> = idx.iter().map(|&i| xw[i]).collect();
                let mean = mean_of(&ar, ar.sum(&vals, q), m);
                let d: Vec<u64> = vals.iter().map(|&v| ar.sub(v, mean)).collect();
                let ss = ar.dot(&d, &d, None, q);
                let inv = rsqrt(mean_of(&ar, ss, m));
                for (&i, &di) in idx.iter().zip(&d) {
                    xhat[i] = ar.mul(di, inv);
                    y[i] = ar.add(ar.mul(gamma[ch], xhat[i]), beta[ch]);
                }
                means.push(mean);
                vars.push(if m > 1 { ar.mul(ss, ar.ratio(1, m - 1)) } else { 0 });
                inv_std.push(inv);
            }
            self.update_running(means, vars, x.kind())?;
            let xhat = Tensor::from_words(x.shape(), xhat, x.kind())?;
            self.cache = Some(BnCache { xhat, inv_std });
        } else {
            let rm = self.running_mean.convert(x.kind());
            let rv = self.running_var.convert(x.kind());
            for ch in 0..c {
                let inv = rsqrt(rv.words()[ch]);
                for i in Self::channel_indices(n, c, s, ch) {
                    let h = ar.mul(ar.sub(xw[i], rm.words()[ch]), inv);
                    y[i] = ar.add(ar.mul(gamma[ch], h), beta[ch]);
                }
            }
        }
        Tensor::from_words(x.shape(), y, x.kind())
    }

    /// `dx = inv_std · (g − mean(g) − x̂ · mean(g·x̂))` with `g = dy·γ`.
    fn backward(&mut self, dy: &Tensor, ctx: &Ctx, need_dx: bool) -> Result<Option<Tensor>> {
        let cache = self.cache.take().ok_or_else(|| missing_cache("BatchNorm"))?;
        let (n, s) = self.layout(dy)?;
        let c = self.channels;
        let fwd_kind = cache.xhat.kind();

        let gk = ctx.prec.gradient;
        let qg = ctx.quire(Stage::Gradient);
        let dy_b = dy.convert(ctx.prec.backward);
        let dy_g = dy_b.convert(gk);
        let xhat_g = cache.xhat.convert(gk);
        let gar = Arith::new(gk);
        let mut dgamma = Vec::with_capacity(c);
        let mut dbeta = Vec::with_capacity(c);
        for ch in 0..c {
            let idx: Vec<usize> = Self::channel_indices(n, c, s, ch).collect();
            let g: Vec<u64> = idx.iter().map(|&i| dy_g.words()[i]).collect();
            let h: Vec<u64> = idx.iter().map(|&i| xhat_g.words()[i]).collect();
            dgamma.push(gar.dot(&g, &h, None, qg));
            dbeta.push(gar.sum(&g, qg));
        }
        self.gamma.set_grad(Tensor::from_words(&[c], dgamma, gk)?)?;
        self.beta.set_grad(Tensor::from_words(&[c], dbeta, gk)?)?;
        if !need_dx {
            return Ok(None);
        }

        let bk = ctx.prec.backward;
        let ar = Arith::new(bk);
        let qb = ctx.quire(Stage::Backward);
        let xhat = cache.xhat.convert(bk);
        let inv_std = Tensor::from_words(&[c], cache.inv_std, fwd_kind)?.convert(bk);
        let gamma = self.gamma.backward().words();
        let m = (n * s) as u64;
        let mut dx = vec![0u64; dy_b.numel()];
        for (ch, (&gamma, &inv)) in gamma.iter().zip(inv_std.words()).enumerate() {
            let idx: Vec<usize> = Self::channel_indices(n, c, s, ch).collect();
            let g: Vec<u64> = idx.iter().map(|&i| ar.mul(dy_b.words()[i], gamma)).collect();
            let h: Vec<u64> = idx.iter().map(|&i| xhat.words()[i]).collect();
            let mean_g = mean_of(&ar, ar.sum(&g, qb), m);
            let mean_gh = mean_of(&ar, ar.dot(&g, &h, None, qb), m);
            for ((&i, &gi), &hi) in idx.iter().zip(&g).zip(&h) {
                dx[i] = ar.mul(ar.sub(ar.sub(gi, mean_g), ar.mul(hi, mean_gh)), inv);
            }
        }
        Ok(Some(Tensor::from_words(dy_b.shape(), dx, bk)?))
    }

    fn params(&self) -> Vec<&MixedParam> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut MixedParam> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<(&'static str, &Tensor)> {
        vec![("running_mean", &self.running_mean), ("running_var", &self.running_var)]
    }

    fn buffers_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![("running_mean", &mut self.running_mean), ("running_var", &mut self.running_var)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posit::PositConfig;

    fn f64_ctx() -> Ctx {
        Ctx::new(StagePrecisions::uniform(Numeric::F64, false))
    }

    #[test]
    fn identity_linear() {
        let ctx = f64_ctx();
        let mut eye = vec![0.0; 9];
        for i in 0..3 {
            eye[i * 4] = 1.0;
        }
        let w = Tensor::from_f64(&[3, 3], &eye, Numeric::F64).unwrap();
        let mut l = Linear::from_tensors(w, Tensor::zeros(&[3], Numeric::F64), &ctx.prec).unwrap();
        let x = Tensor::from_f64(&[2, 3], &[1., -2., 3., 0.5, 0.25, -8.], Numeric::F64).unwrap();
        assert_eq!(l.forward(&x, &ctx).unwrap(), x);
    }

    #[test]
    fn relu_gates() {
        let ctx = f64_ctx();
        let mut r = Relu::new();
        let x = Tensor::from_f64(&[4], &[-1., 0., 2., -3.], Numeric::F64).unwrap();
        assert_eq!(r.forward(&x, &ctx).unwrap().to_f64_vec(), vec![0., 0., 2., 0.]);
        let dy = Tensor::full(&[4], 5.0, Numeric::F64);
        assert_eq!(r.backward(&dy, &ctx, true).unwrap().unwrap().to_f64_vec(), vec![0., 0., 5., 0.]);
    }

    #[test]
    fn sigmoid_of_zero_is_half() {
        for kind in [Numeric::Posit(PositConfig::P8), Numeric::Posit(PositConfig::of(8, 2)), Numeric::F32] {
            let ctx = Ctx::new(StagePrecisions::uniform(kind, true));
            let y = Sigmoid::new().forward(&Tensor::zeros(&[1], kind), &ctx).unwrap();
            assert_eq!(y.get_f64(&[0]), 0.5);
        }
    }

    #[test]
    fn batchnorm_constant_channel_is_zero() {
        let kind = Numeric::Posit(PositConfig::of(16, 1));
        let ctx = Ctx::new(StagePrecisions::uniform(kind, true));
        let mut bn = BatchNorm::new(2, &ctx.prec);
        let x = Tensor::full(&[3, 2, 2, 2], 0.75, kind);
        let y = bn.forward(&x, &ctx).unwrap();
        assert!(y.to_f64_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_is_an_error() {
        let ctx = f64_ctx();
        let dy = Tensor::zeros(&[1, 2], Numeric::F64);
        assert!(Tanh::new().backward(&dy, &ctx, true).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Linear::new(2, 2, &ctx.prec, &mut rng).backward(&dy, &ctx, true).is_err());
        // eval-mode forward caches nothing
        let mut t = Tanh::new();
        t.forward(&dy, &ctx.eval()).unwrap();
        assert!(t.backward(&dy, &ctx, true).is_err());
    }

    #[test]
    fn dropout_is_seeded_and_identity_in_eval() {
        let ctx = f64_ctx();
        let x = Tensor::full(&[64], 1.0, Numeric::F64);
        let mut a = Dropout::new(0.5, 9).unwrap();
        let mut b = Dropout::new(0.5, 9).unwrap();
        let ya = a.forward(&x, &ctx).unwrap();
        assert_eq!(ya, b.forward(&x, &ctx).unwrap());
        assert!(ya.to_f64_vec().iter().all(|&v| v == 0.0 || v == 2.0));
        assert_eq!(a.forward(&x, &ctx.eval()).unwrap(), x);
        assert!(Dropout::new(1.0, 0).is_err());
    }
}
