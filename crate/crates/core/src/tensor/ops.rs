//! Linear algebra, convolution and pooling kernels.
//!
//! Every output element is produced by exactly one call to [`Arith::dot`] (or
//! [`Arith::sum`]) over a fixed operand order, and workers only ever split the
//! set of output elements. Results are therefore independent of the worker
//! count.

use std::cmp::Ordering;
use std::thread;

use super::{Arith, Tensor};
#[cfg(test)]
use super::Numeric;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        ConvGeometry { stride: 1, padding: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub window: usize,
    pub stride: usize,
}

impl PoolGeometry {
    pub fn square(window: usize) -> Self {
        PoolGeometry { window, stride: window }
    }
}

/// Runs `f(unit_index, unit_slice)` over consecutive `unit_len` chunks of
/// `out`, giving each worker one contiguous block of units.
pub(crate) fn for_each_unit<F>(out: &mut [u64], unit_len: usize, workers: usize, f: F)
where
    F: Fn(usize, &mut [u64]) + Sync,
{
    if unit_len == 0 || out.is_empty() {
        return;
    }
    let units = out.len() / unit_len;
    let workers = workers.clamp(1, units.max(1));
    if workers == 1 {
        for (i, chunk) in out.chunks_mut(unit_len).enumerate() {
            f(i, chunk);
        }
        return;
    }
    let per = units.div_ceil(workers);
    thread::scope(|s| {
        for (w, block) in out.chunks_mut(per * unit_len).enumerate() {
            let f = &f;
            s.spawn(move || {
                for (j, chunk) in block.chunks_mut(unit_len).enumerate() {
                    f(w * per + j, chunk);
                }
            });
        }
    });
}

fn same_kind(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.kind() != b.kind() {
        return Err(Error::KindMismatch { left: a.kind(), right: b.kind() });
    }
    Ok(())
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::shape(op, format!("expected rank {rank}, got {:?}", t.shape())));
    }
    Ok(())
}

/// Raw `out[i][j] = dot(a[i], b[j]) (+ bias[j])` over row-major word buffers.
#[allow(clippy::too_many_arguments)]
fn gemm_nt(
    ar: &Arith,
    a: &[u64],
    b: &[u64],
    k: usize,
    bias: Option<&[u64]>,
    quire: bool,
    out: &mut [u64],
    n: usize,
    workers: usize,
) {
    if n == 0 {
        return;
    }
    if ar.prefers_decoded(quire) {
        let (a, b) = (ar.decode(a), ar.decode(b));
        let bias = bias.map(|bs| ar.decode(bs));
        for_each_unit(out, n, workers, |i, row| {
            ar.dots_decoded(&a[i * k..(i + 1) * k], &b, |j| bias.as_ref().map(|bs| bs[j]), quire, row);
        });
    } else {
        for_each_unit(out, n, workers, |i, row| {
            let ai = &a[i * k..(i + 1) * k];
            for (j, o) in row.iter_mut().enumerate() {
                *o = ar.dot(ai, &b[j * k..(j + 1) * k], bias.map(|bs| bs[j]), quire);
            }
        });
    }
}

/// `a · bᵀ (+ bias)` for `a: [m, k]`, `b: [n, k]`, `bias: [n]`; the row-split
/// kernel every layer is built on.
pub fn matmul_nt(a: &Tensor, b: &Tensor, bias: Option<&Tensor>, quire: bool, workers: usize) -> Result<Tensor> {
    expect_rank("matmul_nt", a, 2)?;
    expect_rank("matmul_nt", b, 2)?;
    same_kind(a, b)?;
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[0];
    if b.shape()[1] != k {
        return Err(Error::shape("matmul_nt", format!("{:?} · {:?}ᵀ", a.shape(), b.shape())));
    }
    if let Some(bias) = bias {
        same_kind(a, bias)?;
        if bias.shape() != [n] {
            return Err(Error::shape("matmul_nt", format!("bias {:?} for {n} outputs", bias.shape())));
        }
    }
    let (a, b) = (a.contiguous(), b.contiguous());
    let bias = bias.map(Tensor::contiguous);
    let mut out = vec![0u64; m * n];
    let ar = a.arith();
    gemm_nt(&ar, a.words(), b.words(), k, bias.as_ref().map(|t| t.words()), quire, &mut out, n, workers);
    Tensor::from_words(&[m, n], out, a.kind())
}

/// `a · b` for `a: [m, k]`, `b: [k, n]`. With `quire` each output element is a
/// fused dot product; otherwise products are accumulated with rounding in
/// ascending `k`.
pub fn matmul(a: &Tensor, b: &Tensor, quire: bool) -> Result<Tensor> {
    par_matmul(a, b, quire, 1)
}

/// [`matmul`] with the left operand's rows split across `workers` threads.
pub fn par_matmul(a: &Tensor, b: &Tensor, quire: bool, workers: usize) -> Result<Tensor> {
    expect_rank("matmul", b, 2)?;
    if a.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::shape("matmul", format!("{:?} · {:?}", a.shape(), b.shape())));
    }
    matmul_nt(a, &b.transpose2d()?.contiguous(), None, quire, workers)
}

fn out_extent(op: &'static str, input: usize, kernel: usize, stride: usize, pad_lo: usize, pad_hi: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::shape(op, "stride must be positive".to_string()));
    }
    let padded = input + pad_lo + pad_hi;
    if kernel == 0 || padded < kernel {
        return Err(Error::shape(op, format!("kernel {kernel} larger than padded input {padded}")));
    }
    Ok((padded - kernel) / stride + 1)
}

struct Im2Col {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
    oh: usize,
    ow: usize,
}

impl Im2Col {
    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    /// Row `p` of the patch matrix holds the receptive field of output position
    /// `p` in (channel, kernel row, kernel column) order; padding reads as zero.
    fn fill<T: Copy + Default>(&self, x: &[T], cols: &mut [T]) {
        let plen = self.patch_len();
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &mut cols[(oy * self.ow + ox) * plen..][..plen];
                let mut i = 0;
                for c in 0..self.c {
                    let plane = &x[c * self.h * self.w..(c + 1) * self.h * self.w];
                    for ky in 0..self.kh {
                        let y = (oy * self.stride + ky) as isize - self.pad_h as isize;
                        for kx in 0..self.kw {
                            let xx = (ox * self.stride + kx) as isize - self.pad_w as isize;
                            row[i] = if y >= 0 && (y as usize) < self.h && xx >= 0 && (xx as usize) < self.w {
                                plane[y as usize * self.w + xx as usize]
                            } else {
                                T::default()
                            };
                            i += 1;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv2d_raw(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad_h: usize,
    pad_w: usize,
    quire: bool,
    workers: usize,
) -> Result<Tensor> {
    expect_rank("conv2d", input, 4)?;
    expect_rank("conv2d", weight, 4)?;
    same_kind(input, weight)?;
    let &[n, c, h, w] = input.shape() else { unreachable!() };
    let &[f, wc, kh, kw] = weight.shape() else { unreachable!() };
    if wc != c {
        return Err(Error::shape("conv2d", format!("input {:?} vs weight {:?}", input.shape(), weight.shape())));
    }
    if let Some(b) = bias {
        same_kind(input, b)?;
        if b.shape() != [f] {
            return Err(Error::shape("conv2d", format!("bias {:?} for {f} filters", b.shape())));
        }
    }
    let oh = out_extent("conv2d", h, kh, stride, pad_h, pad_h)?;
    let ow = out_extent("conv2d", w, kw, stride, pad_w, pad_w)?;
    let geo = Im2Col { c, h, w, kh, kw, stride, pad_h, pad_w, oh, ow };
    let (input, weight) = (input.contiguous(), weight.contiguous());
    let bias = bias.map(Tensor::contiguous);
    let ar = input.arith();
    let (x, wt) = (input.words(), weight.words());
    let bias_words = bias.as_ref().map(|b| b.words());
    let mut out = vec![0u64; n * f * oh * ow];
    if ar.prefers_decoded(quire) {
        let bias = bias_words.map(|b| ar.decode(b));
        conv_samples(&geo, &ar.decode(x), &ar.decode(wt), bias.as_deref(), f, &mut out, workers, |a, rows, c, dst| {
            ar.dots_decoded(a, rows, |_| c, quire, dst)
        });
    } else {
        conv_samples(&geo, x, wt, bias_words, f, &mut out, workers, |a, rows, c, dst| {
            for (o, r) in dst.iter_mut().zip(rows.chunks(a.len())) {
                *o = ar.dot(a, r, c, quire);
            }
        });
    }
    Tensor::from_words(&[n, f, oh, ow], out, input.kind())
}

/// Per-sample im2col and filter dot products; one sample per work unit, so
/// the mini-batch is divided among workers.
#[allow(clippy::too_many_arguments)]
fn conv_samples<T: Copy + Default + Sync>(
    geo: &Im2Col,
    x: &[T],
    wt: &[T],
    bias: Option<&[T]>,
    f: usize,
    out: &mut [u64],
    workers: usize,
    dots: impl Fn(&[T], &[T], Option<T>, &mut [u64]) + Sync,
) {
    let p = geo.oh * geo.ow;
    let plen = geo.patch_len();
    let sample = geo.c * geo.h * geo.w;
    for_each_unit(out, f * p, workers, |s, dst| {
        let mut cols = vec![T::default(); p * plen];
        geo.fill(&x[s * sample..(s + 1) * sample], &mut cols);
        for fi in 0..f {
            let filt = &wt[fi * plen..(fi + 1) * plen];
            dots(filt, &cols, bias.map(|bw| bw[fi]), &mut dst[fi * p..(fi + 1) * p]);
        }
    });
}

/// Cross-correlation of `input: [N, C, H, W]` with `weight: [F, C, kH, kW]`,
/// zero padding. Each output element accumulates its `C·kH·kW` products (and
/// the bias) in one dot product.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    geom: ConvGeometry,
    quire: bool,
    workers: usize,
) -> Result<Tensor> {
    conv2d_raw(input, weight, bias, geom.stride, geom.padding, geom.padding, quire, workers)
}

/// Gradient of [`conv2d`] with respect to its weight and bias:
/// `dW[f, j] = Σ_{n,p} dy[n, f, p] · patch_{n,p}[j]`, one dot product of
/// length `N·OH·OW` per weight.
pub fn conv2d_backward_weight(
    input: &Tensor,
    dy: &Tensor,
    kernel: (usize, usize),
    geom: ConvGeometry,
    quire: bool,
    workers: usize,
) -> Result<(Tensor, Tensor)> {
    expect_rank("conv2d_backward_weight", input, 4)?;
    expect_rank("conv2d_backward_weight", dy, 4)?;
    same_kind(input, dy)?;
    let &[n, c, h, w] = input.shape() else { unreachable!() };
    let &[dn, f, oh, ow] = dy.shape() else { unreachable!() };
    let (kh, kw) = kernel;
    let eoh = out_extent("conv2d_backward_weight", h, kh, geom.stride, geom.padding, geom.padding)?;
    let eow = out_extent("conv2d_backward_weight", w, kw, geom.stride, geom.padding, geom.padding)?;
    if dn != n || (oh, ow) != (eoh, eow) {
        return Err(Error::shape("conv2d_backward_weight", format!("input {:?}, dy {:?}", input.shape(), dy.shape())));
    }
    let geo = Im2Col { c, h, w, kh, kw, stride: geom.stride, pad_h: geom.padding, pad_w: geom.padding, oh, ow };
    let (input, dy) = (input.contiguous(), dy.contiguous());
    let p = oh * ow;
    let plen = geo.patch_len();
    let np = n * p;
    // colsT[j][(s, q)] and dyT[f][(s, q)]
    let mut cols_t = vec![0u64; plen * np];
    let mut cols = vec![0u64; p * plen];
    for s in 0..n {
        geo.fill(&input.words()[s * c * h * w..(s + 1) * c * h * w], &mut cols);
        for q in 0..p {
            for j in 0..plen {
                cols_t[j * np + s * p + q] = cols[q * plen + j];
            }
        }
    }
    let mut dy_t = vec![0u64; f * np];
    for s in 0..n {
        for fi in 0..f {
            dy_t[fi * np + s * p..fi * np + (s + 1) * p]
                .copy_from_slice(&dy.words()[(s * f + fi) * p..(s * f + fi + 1) * p]);
        }
    }
    let ar = input.arith();
    let mut dw = vec![0u64; f * plen];
    gemm_nt(&ar, &dy_t, &cols_t, np, None, quire, &mut dw, plen, workers);
    let db: Vec<u64> = (0..f).map(|fi| ar.sum(&dy_t[fi * np..(fi + 1) * np], quire)).collect();
    Ok((Tensor::from_words(&[f, c, kh, kw], dw, input.kind())?, Tensor::from_words(&[f], db, input.kind())?))
}

/// Gradient of [`conv2d`] with respect to its input, computed as a stride-1
/// convolution of the stride-dilated `dy` with the flipped, channel-swapped
/// kernel. Zeros introduced by dilation contribute exact zero products.
pub fn conv2d_backward_input(
    dy: &Tensor,
    weight: &Tensor,
    input_hw: (usize, usize),
    geom: ConvGeometry,
    quire: bool,
    workers: usize,
) -> Result<Tensor> {
    expect_rank("conv2d_backward_input", dy, 4)?;
    expect_rank("conv2d_backward_input", weight, 4)?;
    same_kind(dy, weight)?;
    let &[n, f, oh, ow] = dy.shape() else { unreachable!() };
    let &[wf, c, kh, kw] = weight.shape() else { unreachable!() };
    let (h, w) = input_hw;
    let s = geom.stride;
    if wf != f || geom.padding >= kh || geom.padding >= kw {
        return Err(Error::shape("conv2d_backward_input", format!("dy {:?}, weight {:?}, {geom:?}", dy.shape(), weight.shape())));
    }
    let (eoh, eow) = (
        out_extent("conv2d_backward_input", h, kh, s, geom.padding, geom.padding)?,
        out_extent("conv2d_backward_input", w, kw, s, geom.padding, geom.padding)?,
    );
    if (eoh, eow) != (oh, ow) {
        return Err(Error::shape("conv2d_backward_input", format!("dy {:?} for input {h}×{w}", dy.shape())));
    }
    let dy = dy.contiguous();
    let weight = weight.contiguous();
    // dy spread out by the stride; trailing rows/columns that no window
    // reached stay zero, so the full correlation below lands on exactly h × w
    let (dh, dw) = (h + 2 * geom.padding + 1 - kh, w + 2 * geom.padding + 1 - kw);
    let dilated = if (dh, dw) == (oh, ow) {
        dy.into_owned()
    } else {
        let mut d = vec![0u64; n * f * dh * dw];
        for plane in 0..n * f {
            for y in 0..oh {
                for x in 0..ow {
                    d[plane * dh * dw + y * s * dw + x * s] = dy.words()[plane * oh * ow + y * ow + x];
                }
            }
        }
        Tensor::from_words(&[n, f, dh, dw], d, dy.kind())?
    };
    let mut flipped = vec![0u64; c * f * kh * kw];
    for fi in 0..f {
        for ci in 0..c {
            for y in 0..kh {
                for x in 0..kw {
                    flipped[((ci * f + fi) * kh + (kh - 1 - y)) * kw + (kw - 1 - x)] =
                        weight.words()[((fi * c + ci) * kh + y) * kw + x];
                }
            }
        }
    }
    let flipped = Tensor::from_words(&[c, f, kh, kw], flipped, weight.kind())?;
    conv2d_raw(&dilated, &flipped, None, 1, kh - 1 - geom.padding, kw - 1 - geom.padding, quire, workers)
}

fn pool_dims(op: &'static str, input: &Tensor, g: PoolGeometry) -> Result<(usize, usize, usize, usize, usize, usize)> {
    expect_rank(op, input, 4)?;
    let &[n, c, h, w] = input.shape() else { unreachable!() };
    let oh = out_extent(op, h, g.window, g.stride, 0, 0)?;
    let ow = out_extent(op, w, g.window, g.stride, 0, 0)?;
    Ok((n, c, h, w, oh, ow))
}

/// Max pooling; also returns, per output, the flat input index of the first
/// maximal element in window scan order.
pub fn max_pool2d(input: &Tensor, g: PoolGeometry) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, h, w, oh, ow) = pool_dims("max_pool2d", input, g)?;
    let input = input.contiguous();
    let ar = input.arith();
    let x = input.words();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * g.stride * w + ox * g.stride;
                for ky in 0..g.window {
                    for kx in 0..g.window {
                        let i = base + (oy * g.stride + ky) * w + ox * g.stride + kx;
                        if ar.compare(x[i], x[best]) == Ordering::Greater {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::from_words(&[n, c, oh, ow], out, input.kind())?, arg))
}

/// Routes each output gradient to its argmax position.
pub fn max_pool2d_backward(dy: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Result<Tensor> {
    if dy.numel() != argmax.len() {
        return Err(Error::shape("max_pool2d_backward", format!("{} gradients, {} indices", dy.numel(), argmax.len())));
    }
    let dy = dy.contiguous();
    let ar = dy.arith();
    let mut dx = Tensor::zeros(input_shape, dy.kind());
    let d = dx.words_mut();
    for (&g, &i) in dy.words().iter().zip(argmax) {
        d[i] = ar.add(d[i], g);
    }
    Ok(dx)
}

/// Average pooling: window sum (exact with `quire`), then one multiplication
/// by the correctly rounded reciprocal of the window size.
pub fn avg_pool2d(input: &Tensor, g: PoolGeometry, quire: bool) -> Result<Tensor> {
    let (n, c, h, w, oh, ow) = pool_dims("avg_pool2d", input, g)?;
    let input = input.contiguous();
    let ar = input.arith();
    let inv = ar.ratio(1, (g.window * g.window) as u64);
    let x = input.words();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut win = Vec::with_capacity(g.window * g.window);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                win.clear();
                for ky in 0..g.window {
                    let row = base + (oy * g.stride + ky) * w + ox * g.stride;
                    win.extend_from_slice(&x[row..row + g.window]);
                }
                out.push(ar.mul(ar.sum(&win, quire), inv));
            }
        }
    }
    Tensor::from_words(&[n, c, oh, ow], out, input.kind())
}

pub fn avg_pool2d_backward(dy: &Tensor, input_shape: &[usize], g: PoolGeometry) -> Result<Tensor> {
    let probe = Tensor::zeros(input_shape, dy.kind());
    let (n, c, h, w, oh, ow) = pool_dims("avg_pool2d_backward", &probe, g)?;
    if dy.shape() != [n, c, oh, ow] {
        return Err(Error::shape("avg_pool2d_backward", format!("dy {:?} for input {input_shape:?}", dy.shape())));
    }
    let dy = dy.contiguous();
    let ar = dy.arith();
    let inv = ar.ratio(1, (g.window * g.window) as u64);
    let mut dx = probe;
    let d = dx.words_mut();
    for plane in 0..n * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let share = ar.mul(dy.words()[(plane * oh + oy) * ow + ox], inv);
                for ky in 0..g.window {
                    for kx in 0..g.window {
                        let i = plane * h * w + (oy * g.stride + ky) * w + ox * g.stride + kx;
                        d[i] = ar.add(d[i], share);
                    }
                }
            }
        }
    }
    Ok(dx)
}

/// Column sums of a `[m, n]` matrix as a `[n]` vector.
pub(crate) fn column_sums(t: &Tensor, quire: bool) -> Result<Tensor> {
    expect_rank("column_sums", t, 2)?;
    let tt = t.transpose2d()?;
    let tt = tt.contiguous();
    let (n, m) = (tt.shape()[0], tt.shape()[1]);
    let ar = t.arith();
    let sums = (0..n).map(|j| ar.sum(&tt.words()[j * m..(j + 1) * m], quire)).collect();
    Tensor::from_words(&[n], sums, t.kind())
}
