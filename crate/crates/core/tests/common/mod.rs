//! Exact-rational oracles shared by the integration suites. Nothing here calls
//! into the library's decoding or rounding code.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use positnn::PositConfig;

pub mod fd;

pub type Q = BigRational;

pub fn q(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn pow2(e: i64) -> Q {
    let two = q(2);
    if e >= 0 {
        (0..e).fold(Q::one(), |acc, _| acc * &two)
    } else {
        Q::one() / pow2(-e)
    }
}

/// Reads a pattern field by field, straight from the bit string.
pub fn rational_value(nbits: u32, es: u32, bits: u64) -> Option<Q> {
    rational_value_wide(nbits, es, bits as u128)
}

/// Same as [`rational_value`] for patterns up to 65 bits (midpoints of 64-bit formats).
pub fn rational_value_wide(nbits: u32, es: u32, bits: u128) -> Option<Q> {
    let mask = (1u128 << nbits) - 1;
    let bits = bits & mask;
    if bits == 0 {
        return Some(Q::zero());
    }
    if bits == 1u128 << (nbits - 1) {
        return None;
    }
    let negative = bits >> (nbits - 1) == 1;
    let mag = if negative { bits.wrapping_neg() & mask } else { bits };
    let s: Vec<u8> = (0..nbits - 1).rev().map(|i| ((mag >> i) & 1) as u8).collect();
    let first = s[0];
    let run = s.iter().take_while(|&&b| b == first).count();
    let k: i64 = if first == 1 { run as i64 - 1 } else { -(run as i64) };
    let mut pos = run + 1;
    let mut exponent = 0i64;
    for _ in 0..es {
        exponent <<= 1;
        if pos < s.len() {
            exponent |= s[pos] as i64;
        }
        pos += 1;
    }
    let mut fraction = Q::one();
    let mut weight = Q::new(BigInt::from(1), BigInt::from(2));
    while pos < s.len() {
        if s[pos] == 1 {
            fraction += &weight;
        }
        weight /= q(2);
        pos += 1;
    }
    let v = pow2((1i64 << es) * k + exponent) * fraction;
    Some(if negative { -v } else { v })
}

/// Round-to-nearest with ties to the even pattern; the rounding boundary
/// between neighbouring patterns p and p+1 is the value of pattern 2p+1 in
/// the format one bit wider.
pub struct Oracle {
    pub nbits: u32,
    pub es: u32,
    /// positive patterns 1..=maxpos, ascending
    pos_values: Vec<Q>,
    /// boundary between pattern p and p+1 at index p-1
    midpoints: Vec<Q>,
}

impl Oracle {
    pub fn new(cfg: PositConfig) -> Self {
        let (nbits, es) = (cfg.nbits(), cfg.es());
        assert!(nbits <= 20, "oracle tables are exhaustive");
        let maxpos = (1u64 << (nbits - 1)) - 1;
        let pos_values = (1..=maxpos).map(|p| rational_value(nbits, es, p).unwrap()).collect();
        let midpoints = (1..maxpos).map(|p| rational_value(nbits + 1, es, 2 * p + 1).unwrap()).collect();
        Oracle { nbits, es, pos_values, midpoints }
    }

    pub fn value(&self, bits: u64) -> Option<Q> {
        rational_value(self.nbits, self.es, bits)
    }

    /// Rounds an exact rational; `None` is NaR.
    pub fn round(&self, x: Option<&Q>) -> u64 {
        let mask = (1u64 << self.nbits) - 1;
        let Some(x) = x else { return 1u64 << (self.nbits - 1) };
        if x.is_zero() {
            return 0;
        }
        let mag = x.abs();
        let p = self.round_positive(&mag);
        if x.is_negative() {
            p.wrapping_neg() & mask
        } else {
            p
        }
    }

    fn round_positive(&self, x: &Q) -> u64 {
        let maxpos = self.pos_values.len() as u64;
        if x >= self.pos_values.last().unwrap() {
            return maxpos;
        }
        if x <= &self.pos_values[0] {
            return 1;
        }
        // largest p with value(p) <= x
        let idx = self.pos_values.partition_point(|v| v <= x);
        let p = idx as u64;
        if &self.pos_values[idx - 1] == x {
            return p;
        }
        let mid = &self.midpoints[idx - 1];
        if x < mid {
            p
        } else if x > mid {
            p + 1
        } else if p.is_multiple_of(2) {
            p
        } else {
            p + 1
        }
    }

    /// Exact result of `a op b` rounded into this format.
    pub fn op(&self, op: char, a: u64, b: u64) -> u64 {
        let (Some(x), Some(y)) = (self.value(a), self.value(b)) else {
            return self.round(None);
        };
        let exact = match op {
            '+' => Some(x + y),
            '-' => Some(x - y),
            '*' => Some(x * y),
            '/' => (!y.is_zero()).then(|| x / y),
            _ => unreachable!(),
        };
        self.round(exact.as_ref())
    }
}

/// Oracle rounding for formats too wide to tabulate, by bisection over the
/// pattern space with the same wider-format boundary rule.
pub fn round_wide(cfg: PositConfig, x: &Q) -> u64 {
    let (n, es) = (cfg.nbits(), cfg.es());
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    if x.is_zero() {
        return 0;
    }
    let mag = x.abs();
    let maxpos = (1u64 << (n - 1)) - 1;
    let val = |p: u64| rational_value(n, es, p).unwrap();
    let p = if mag >= val(maxpos) {
        maxpos
    } else if mag <= val(1) {
        1
    } else {
        let (mut lo, mut hi) = (1u64, maxpos);
        while hi - lo > 1 {
            let m = lo + (hi - lo) / 2;
            if val(m) <= mag {
                lo = m;
            } else {
                hi = m;
            }
        }
        if val(lo) == mag {
            lo
        } else {
            let mid = rational_value_wide(n + 1, es, 2 * lo as u128 + 1).unwrap();
            if mag < mid || (mag == mid && lo % 2 == 0) {
                lo
            } else {
                hi
            }
        }
    };
    if x.is_negative() {
        p.wrapping_neg() & mask
    } else {
        p
    }
}

/// Exact rational of a finite f64.
pub fn rational_of_f64(x: f64) -> Q {
    if x == 0.0 {
        return Q::zero();
    }
    let bits = x.to_bits();
    let neg = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let mant = (bits & ((1 << 52) - 1)) as i64;
    let (m, e) = if biased == 0 { (mant, -1074) } else { (mant | (1 << 52), biased - 1075) };
    let v = q(m) * pow2(e);
    if neg {
        -v
    } else {
        v
    }
}
