//! Software posit arithmetic for any width `2..=64` and exponent size `0..=4`.
//!
//! Every operation is carried out on integer significands and rounded exactly
//! once, to nearest with ties going to the even bit pattern. Results saturate
//! at `±maxpos` and never underflow past `±minpos`.
//!
//! Formats up to 8 bits use precomputed 256×256 tables and formats up to 16
//! bits use a float64 shortcut; both are generated from (and tested against)
//! the integer kernels, so every path returns the same bit patterns.

mod kernel;
pub mod tables;

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use crate::error::{Error, Result};

pub(crate) use kernel::{Class, Exact};

pub const MAX_NBITS: u32 = 64;
pub const MAX_ES: u32 = 4;

/// A posit format: total width and maximum exponent field size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PositConfig {
    nbits: u32,
    es: u32,
}

impl PositConfig {
    /// Standard formats of the posit standard draft.
    pub const P8: PositConfig = PositConfig { nbits: 8, es: 0 };
    pub const P16: PositConfig = PositConfig { nbits: 16, es: 1 };
    pub const P32: PositConfig = PositConfig { nbits: 32, es: 2 };
    pub const P64: PositConfig = PositConfig { nbits: 64, es: 3 };

    pub fn new(nbits: u32, es: u32) -> Result<Self> {
        if !(2..=MAX_NBITS).contains(&nbits) {
            return Err(Error::InvalidFormat { nbits, es, reason: "nbits must be in 2..=64" });
        }
        if es > MAX_ES {
            return Err(Error::InvalidFormat { nbits, es, reason: "es must be in 0..=4" });
        }
        Ok(PositConfig { nbits, es })
    }

    /// Panicking constructor for formats known to be valid.
    pub const fn of(nbits: u32, es: u32) -> Self {
        assert!(nbits >= 2 && nbits <= MAX_NBITS && es <= MAX_ES, "invalid posit format");
        PositConfig { nbits, es }
    }

    pub const fn nbits(self) -> u32 {
        self.nbits
    }

    pub const fn es(self) -> u32 {
        self.es
    }

    /// log2 of useed = 2^(2^es).
    pub const fn useed_log2(self) -> i32 {
        1 << self.es
    }

    /// Binary scale of maxpos; minpos has the negated scale.
    pub const fn max_scale(self) -> i32 {
        (self.nbits as i32 - 2) * self.useed_log2()
    }

    pub const fn mask(self) -> u64 {
        if self.nbits == 64 {
            u64::MAX
        } else {
            (1u64 << self.nbits) - 1
        }
    }

    pub const fn nar_bits(self) -> u64 {
        1u64 << (self.nbits - 1)
    }

    pub const fn maxpos_bits(self) -> u64 {
        self.nar_bits() - 1
    }

    /// Quire width `4·(nbits−2)·2^es + nbits`: sign, `nbits−1` carry guard
    /// bits, and integer/fraction fields spanning maxpos² down to minpos².
    pub const fn quire_bits(self) -> u32 {
        4 * (self.nbits - 2) * (1 << self.es) + self.nbits
    }

    /// Number of fraction bits in the quire (its lsb weighs minpos²).
    pub const fn quire_frac_bits(self) -> u32 {
        2 * self.max_scale() as u32
    }

    /// Products that can be accumulated with no possibility of overflow.
    pub const fn dot_product_limit(self) -> u64 {
        (1u64 << (self.nbits - 1)) - 1
    }

    /// `log2(maxpos)`; the dynamic range is `2^±dynamic_range_log2`.
    pub const fn dynamic_range_log2(self) -> i32 {
        self.max_scale()
    }

    pub fn maxpos(self) -> PositValue {
        PositValue { config: self, bits: self.maxpos_bits() }
    }

    pub fn minpos(self) -> PositValue {
        PositValue { config: self, bits: 1 }
    }

    pub fn zero(self) -> PositValue {
        PositValue { config: self, bits: 0 }
    }

    pub fn nar(self) -> PositValue {
        PositValue { config: self, bits: self.nar_bits() }
    }

    pub fn one(self) -> PositValue {
        PositValue { config: self, bits: 1u64 << (self.nbits - 2) }
    }

    /// Every bit pattern of the format with its exact value (`None` for NaR),
    /// ordered by pattern.
    pub fn enumerate_values(self) -> Result<Vec<(u64, Option<f64>)>> {
        if self.nbits > 24 {
            return Err(Error::Usage(format!("refusing to enumerate 2^{} patterns", self.nbits)));
        }
        Ok((0..=self.mask())
            .map(|bits| {
                let v = PositValue::from_bits(self, bits);
                (bits, if v.is_nar() { None } else { Some(v.to_f64()) })
            })
            .collect())
    }
}

impl fmt::Display for PositConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "posit({}, {})", self.nbits, self.es)
    }
}

/// Parses `nbits:es`, `nbits,es` or `posit(nbits, es)`.
impl FromStr for PositConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.strip_prefix("posit").unwrap_or(t).trim();
        let t = t.strip_prefix('(').and_then(|t| t.strip_suffix(')')).unwrap_or(t);
        let mut it = t.split([':', ',']).map(str::trim);
        let parse = |x: Option<&str>| x.and_then(|x| x.parse::<u32>().ok());
        match (parse(it.next()), parse(it.next()), it.next()) {
            (Some(n), Some(es), None) => PositConfig::new(n, es),
            _ => Err(Error::Usage(format!("cannot parse posit format {s:?}, expected nbits:es"))),
        }
    }
}

/// A posit bit pattern, right-aligned, tagged with its format.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PositValue {
    config: PositConfig,
    bits: u64,
}

/// Fields of a nonzero, non-NaR posit.
///
/// value = (−1)^sign · 2^(2^es·k) · 2^exponent · (1 + fraction_numerator / 2^fraction_bits)
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DecodedPosit {
    pub negative: bool,
    pub k: i32,
    pub exponent: u32,
    pub fraction_numerator: u64,
    pub fraction_bits: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoded {
    Zero,
    NaR,
    Real(DecodedPosit),
}

impl DecodedPosit {
    /// Binary scale `2^es·k + exponent`.
    pub fn scale(&self, config: PositConfig) -> i32 {
        self.k * config.useed_log2() + self.exponent as i32
    }
}

impl PositValue {
    /// Wraps a bit pattern; bits above `nbits` are discarded.
    pub fn from_bits(config: PositConfig, bits: u64) -> Self {
        PositValue { config, bits: bits & config.mask() }
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    pub fn config(self) -> PositConfig {
        self.config
    }

    pub fn is_zero(self) -> bool {
        self.bits == 0
    }

    pub fn is_nar(self) -> bool {
        self.bits == self.config.nar_bits()
    }

    pub fn is_negative(self) -> bool {
        !self.is_nar() && (self.bits >> (self.config.nbits - 1)) & 1 == 1
    }

    /// The pattern sign-extended to 64 bits; its integer order is the real order.
    pub fn signed_bits(self) -> i64 {
        let shift = 64 - self.config.nbits;
        ((self.bits << shift) as i64) >> shift
    }

    pub fn decode(self) -> Decoded {
        kernel::decode_fields(self.config, self.bits)
    }

    pub(crate) fn class(self) -> Class {
        kernel::unpack(self.config, self.bits)
    }

    /// Nearest posit to `x`; NaN and infinities map to NaR.
    pub fn from_f64(x: f64, config: PositConfig) -> Self {
        PositValue { config, bits: kernel::from_f64(config, x) }
    }

    /// Exact for every format up to 32 bits; NaR maps to NaN.
    pub fn to_f64(self) -> f64 {
        kernel::to_f64(self.config, self.bits)
    }

    /// Correctly rounded `num / den`.
    pub fn from_ratio(num: i64, den: u64, config: PositConfig) -> Self {
        PositValue { config, bits: kernel::from_ratio(config, num, den) }
    }

    pub fn convert(self, target: PositConfig) -> Self {
        PositValue { config: target, bits: kernel::convert(self.config, self.bits, target) }
    }

    pub fn try_add(self, rhs: Self) -> Result<Self> {
        self.binary(rhs, kernel::add)
    }

    pub fn try_sub(self, rhs: Self) -> Result<Self> {
        self.binary(rhs, kernel::sub)
    }

    pub fn try_mul(self, rhs: Self) -> Result<Self> {
        self.binary(rhs, kernel::mul)
    }

    pub fn try_div(self, rhs: Self) -> Result<Self> {
        self.binary(rhs, kernel::div)
    }

    fn binary(self, rhs: Self, op: fn(PositConfig, u64, u64) -> u64) -> Result<Self> {
        if self.config != rhs.config {
            return Err(Error::FormatMismatch { left: self.config, right: rhs.config });
        }
        Ok(PositValue { config: self.config, bits: op(self.config, self.bits, rhs.bits) })
    }

    pub fn abs(self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self
        }
    }

    /// Real-value ordering; NaR sorts below every real.
    pub fn compare(self, other: Self) -> Result<Ordering> {
        if self.config != other.config {
            return Err(Error::FormatMismatch { left: self.config, right: other.config });
        }
        Ok(self.signed_bits().cmp(&other.signed_bits()))
    }

    /// Pattern of the next larger posit (wrapping through NaR).
    pub fn next_up(self) -> Self {
        PositValue::from_bits(self.config, self.bits.wrapping_add(1))
    }
}

impl fmt::Debug for PositValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}[{:0width$b} = {}]",
            self.config,
            self.bits,
            self.to_f64(),
            width = self.config.nbits as usize
        )
    }
}

impl fmt::Display for PositValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_nar() {
            f.write_str("NaR")
        } else {
            write!(f, "{}", self.to_f64())
        }
    }
}

impl PartialOrd for PositValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.compare(*other).ok()
    }
}

impl Neg for PositValue {
    type Output = PositValue;

    fn neg(self) -> Self {
        PositValue::from_bits(self.config, self.bits.wrapping_neg())
    }
}

macro_rules! impl_op {
    ($trait:ident, $method:ident, $checked:ident) => {
        /// Panics when the operands have different formats.
        impl $trait for PositValue {
            type Output = PositValue;

            fn $method(self, rhs: Self) -> Self {
                match self.$checked(rhs) {
                    Ok(v) => v,
                    Err(e) => panic!("{e}"),
                }
            }
        }
    };
}

impl_op!(Add, add, try_add);
impl_op!(Sub, sub, try_sub);
impl_op!(Mul, mul, try_mul);
impl_op!(Div, div, try_div);
