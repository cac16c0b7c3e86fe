//! N-dimensional tensors over a flat word buffer with explicit strides.

mod arith;
mod ops;

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

pub use arith::Arith;
pub(crate) use ops::column_sums;
pub use ops::{
    avg_pool2d, avg_pool2d_backward, conv2d, conv2d_backward_input, conv2d_backward_weight, matmul,
    matmul_nt, max_pool2d, max_pool2d_backward, par_matmul, ConvGeometry, PoolGeometry,
};

use crate::error::{Error, Result};
use crate::posit::{PositConfig, PositValue};

/// Scalar kind of a tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Numeric {
    F32,
    F64,
    Posit(PositConfig),
}

impl Numeric {
    pub fn is_posit(self) -> bool {
        matches!(self, Numeric::Posit(_))
    }
}

impl fmt::Display for Numeric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Numeric::F32 => f.write_str("float32"),
            Numeric::F64 => f.write_str("float64"),
            Numeric::Posit(c) => write!(f, "{}:{}", c.nbits(), c.es()),
        }
    }
}

impl From<PositConfig> for Numeric {
    fn from(c: PositConfig) -> Self {
        Numeric::Posit(c)
    }
}

/// `float32`, `float64`, or a posit format such as `8:2`.
impl FromStr for Numeric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "float32" | "f32" | "float" => Ok(Numeric::F32),
            "float64" | "f64" | "double" => Ok(Numeric::F64),
            other => other.parse::<PositConfig>().map(Numeric::Posit),
        }
    }
}

static FLOAT_INGEST: AtomicU64 = AtomicU64::new(0);

/// Number of float64 values rounded into posit tensors through
/// [`Tensor::from_f64`] since process start.
pub fn float_ingest_count() -> u64 {
    FLOAT_INGEST.load(AtomicOrdering::Relaxed)
}

#[derive(Clone, PartialEq, Eq)]
pub struct Tensor {
    kind: Numeric,
    shape: Vec<usize>,
    strides: Vec<usize>,
    data: Vec<u64>,
}

fn row_major(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl Tensor {
    pub fn from_words(shape: &[usize], data: Vec<u64>, kind: Numeric) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::shape("from_words", format!("shape {shape:?} needs {n} elements, got {}", data.len())));
        }
        Ok(Tensor { kind, shape: shape.to_vec(), strides: row_major(shape), data })
    }

    pub fn zeros(shape: &[usize], kind: Numeric) -> Self {
        let n = shape.iter().product();
        Tensor { kind, shape: shape.to_vec(), strides: row_major(shape), data: vec![0; n] }
    }

    pub fn full(shape: &[usize], value: f64, kind: Numeric) -> Self {
        let w = Arith::new(kind).from_f64(value);
        let n = shape.iter().product();
        Tensor { kind, shape: shape.to_vec(), strides: row_major(shape), data: vec![w; n] }
    }

    /// Rounds float64 values into `kind`; this is the data ingestion boundary.
    pub fn from_f64(shape: &[usize], values: &[f64], kind: Numeric) -> Result<Self> {
        let ar = Arith::new(kind);
        if kind.is_posit() {
            FLOAT_INGEST.fetch_add(values.len() as u64, AtomicOrdering::Relaxed);
        }
        Tensor::from_words(shape, values.iter().map(|&x| ar.from_f64(x)).collect(), kind)
    }

    pub fn from_posits(shape: &[usize], values: &[PositValue]) -> Result<Self> {
        let cfg = values
            .first()
            .map(|v| v.config())
            .ok_or_else(|| Error::Usage("cannot infer a format from no values".into()))?;
        if let Some(bad) = values.iter().find(|v| v.config() != cfg) {
            return Err(Error::FormatMismatch { left: cfg, right: bad.config() });
        }
        Tensor::from_words(shape, values.iter().map(|v| v.bits()).collect(), Numeric::Posit(cfg))
    }

    pub fn kind(&self) -> Numeric {
        self.kind
    }

    pub fn arith(&self) -> Arith {
        Arith::new(self.kind)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_contiguous(&self) -> bool {
        self.strides == row_major(&self.shape)
    }

    /// Raw words in row-major order. Panics on a non-contiguous view.
    pub fn words(&self) -> &[u64] {
        assert!(self.is_contiguous(), "words() on a strided view; call contiguous() first");
        &self.data
    }

    pub fn words_mut(&mut self) -> &mut [u64] {
        assert!(self.is_contiguous(), "words_mut() on a strided view");
        &mut self.data
    }

    pub fn into_words(self) -> Vec<u64> {
        if self.is_contiguous() {
            self.data
        } else {
            self.to_contiguous().data
        }
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.rank(), "index rank");
        index
            .iter()
            .zip(&self.shape)
            .zip(&self.strides)
            .map(|((&i, &n), &s)| {
                assert!(i < n, "index {index:?} out of bounds for {:?}", self.shape);
                i * s
            })
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> u64 {
        self.data[self.offset(index)]
    }

    pub fn get_f64(&self, index: &[usize]) -> f64 {
        self.arith().to_f64(self.get(index))
    }

    pub fn set(&mut self, index: &[usize], word: u64) {
        let o = self.offset(index);
        self.data[o] = word;
    }

    pub fn posit(&self, index: &[usize]) -> Option<PositValue> {
        match self.kind {
            Numeric::Posit(c) => Some(PositValue::from_bits(c, self.get(index))),
            _ => None,
        }
    }

    /// Row-major view of this tensor, copying only when strided.
    pub fn contiguous(&self) -> Cow<'_, Tensor> {
        if self.is_contiguous() {
            Cow::Borrowed(self)
        } else {
            Cow::Owned(self.to_contiguous())
        }
    }

    fn to_contiguous(&self) -> Tensor {
        let n = self.numel();
        let mut data = Vec::with_capacity(n);
        let mut idx = vec![0usize; self.rank()];
        for _ in 0..n {
            data.push(self.data[self.offset(&idx)]);
            for d in (0..idx.len()).rev() {
                idx[d] += 1;
                if idx[d] < self.shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Tensor { kind: self.kind, shape: self.shape.clone(), strides: row_major(&self.shape), data }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape)));
        }
        let t = self.contiguous();
        Ok(Tensor { kind: t.kind, shape: shape.to_vec(), strides: row_major(shape), data: t.into_owned().data })
    }

    /// Swaps the two axes of a matrix without moving data.
    pub fn transpose2d(&self) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::shape("transpose2d", format!("rank {} tensor", self.rank())));
        }
        Ok(Tensor {
            kind: self.kind,
            shape: vec![self.shape[1], self.shape[0]],
            strides: vec![self.strides[1], self.strides[0]],
            data: self.data.clone(),
        })
    }

    /// Rows `start..end` along the first axis.
    pub fn slice0(&self, start: usize, end: usize) -> Result<Tensor> {
        if self.rank() == 0 || start > end || end > self.shape[0] {
            return Err(Error::shape("slice0", format!("{start}..{end} of {:?}", self.shape)));
        }
        let t = self.contiguous();
        let row: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = end - start;
        Tensor::from_words(&shape, t.data[start * row..end * row].to_vec(), self.kind)
    }

    /// Gathers rows along the first axis.
    pub fn gather0(&self, rows: &[usize]) -> Result<Tensor> {
        let t = self.contiguous();
        let row: usize = self.shape[1..].iter().product();
        let mut data = Vec::with_capacity(rows.len() * row);
        for &r in rows {
            if r >= self.shape[0] {
                return Err(Error::shape("gather0", format!("row {r} of {:?}", self.shape)));
            }
            data.extend_from_slice(&t.data[r * row..(r + 1) * row]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Tensor::from_words(&shape, data, self.kind)
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        let ar = self.arith();
        self.contiguous().data.iter().map(|&w| ar.to_f64(w)).collect()
    }

    /// Element-wise conversion to another kind, one rounding per element.
    pub fn convert(&self, kind: Numeric) -> Tensor {
        if kind == self.kind {
            return self.clone();
        }
        let t = self.contiguous();
        let data = match (self.kind, kind) {
            (Numeric::Posit(from), Numeric::Posit(to)) => {
                t.data.iter().map(|&w| PositValue::from_bits(from, w).convert(to).bits()).collect()
            }
            _ => {
                let (src, dst) = (self.arith(), Arith::new(kind));
                t.data.iter().map(|&w| dst.from_f64(src.to_f64(w))).collect()
            }
        };
        Tensor { kind, shape: self.shape.clone(), strides: row_major(&self.shape), data }
    }

    pub fn map(&self, f: impl Fn(&Arith, u64) -> u64) -> Tensor {
        let ar = self.arith();
        let t = self.contiguous();
        let data = t.data.iter().map(|&w| f(&ar, w)).collect();
        Tensor { kind: self.kind, shape: self.shape.clone(), strides: row_major(&self.shape), data }
    }

    pub fn zip(&self, other: &Tensor, f: impl Fn(&Arith, u64, u64) -> u64) -> Result<Tensor> {
        if self.kind != other.kind {
            return Err(Error::KindMismatch { left: self.kind, right: other.kind });
        }
        if self.shape != other.shape {
            return Err(Error::shape("zip", format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        let ar = self.arith();
        let (a, b) = (self.contiguous(), other.contiguous());
        let data = a.data.iter().zip(&b.data).map(|(&x, &y)| f(&ar, x, y)).collect();
        Ok(Tensor { kind: self.kind, shape: self.shape.clone(), strides: row_major(&self.shape), data })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |ar, x, y| ar.add(x, y))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |ar, x, y| ar.sub(x, y))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip(other, |ar, x, y| ar.mul(x, y))
    }

    /// Multiplies by a scalar given as a word of this tensor's kind.
    pub fn scale_word(&self, w: u64) -> Tensor {
        self.map(|ar, x| ar.mul(x, w))
    }

    /// Multiplies by `x` rounded into this tensor's kind.
    pub fn scale(&self, x: f64) -> Tensor {
        let w = self.arith().from_f64(x);
        self.scale_word(w)
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let vals = self.to_f64_vec();
        let shown: Vec<_> = vals.iter().take(16).collect();
        write!(f, "Tensor<{}>{:?} {:?}{}", self.kind, self.shape, shown, if vals.len() > 16 { " …" } else { "" })
    }
}
