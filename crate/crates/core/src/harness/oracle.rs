//! Exact-rational reference rounding for narrow posit formats, written
//! against the bit-string definition only. Used by the `verify` suites.

use num_rational::Ratio;
use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::PositConfig;

pub type Rational = Ratio<i128>;

/// Widest format the `i128` rationals can hold without overflow.
pub const MAX_ORACLE_NBITS: u32 = 10;

fn pow2(e: i32) -> Rational {
    if e >= 0 {
        Rational::from_integer(1i128 << e)
    } else {
        Rational::new(1, 1i128 << -e)
    }
}

/// Value of `bits` read field by field: sign, regime run, exponent bits
/// (missing ones are zero), fraction with hidden one. `None` is NaR.
pub fn exact_value(nbits: u32, es: u32, bits: u64) -> Option<Rational> {
    let mask = (1u64 << nbits) - 1;
    let bits = bits & mask;
    if bits == 0 {
        return Some(Rational::zero());
    }
    if bits == 1 << (nbits - 1) {
        return None;
    }
    let negative = bits >> (nbits - 1) == 1;
    let mag = if negative { bits.wrapping_neg() & mask } else { bits };
    let body: Vec<bool> = (0..nbits - 1).rev().map(|i| (mag >> i) & 1 == 1).collect();
    let run = body.iter().take_while(|&&b| b == body[0]).count();
    let k = if body[0] { run as i32 - 1 } else { -(run as i32) };
    let mut rest = body.iter().skip(run + 1);
    let mut e = 0i32;
    for _ in 0..es {
        e = 2 * e + rest.next().copied().unwrap_or(false) as i32;
    }
    let frac: Vec<bool> = rest.copied().collect();
    let f = frac.iter().fold(0i128, |acc, &b| 2 * acc + b as i128);
    let fraction = Rational::new((1i128 << frac.len()) + f, 1i128 << frac.len());
    let v = pow2(k * (1 << es) + e) * fraction;
    Some(if negative { -v } else { v })
}

/// Round-to-nearest, ties to the even pattern, saturating at maxpos and
/// never rounding a nonzero value to zero. The decision boundary between
/// neighbours `p` and `p+1` is the value of pattern `2p+1` one bit wider.
pub struct Oracle {
    cfg: PositConfig,
    values: Vec<Rational>,
    bounds: Vec<Rational>,
}

impl Oracle {
    pub fn new(cfg: PositConfig) -> Result<Self> {
        let (n, es) = (cfg.nbits(), cfg.es());
        if n > MAX_ORACLE_NBITS || es > 2 {
            return Err(Error::Usage(format!("the rational oracle covers nbits <= {MAX_ORACLE_NBITS}, es <= 2")));
        }
        let maxpos = (1u64 << (n - 1)) - 1;
        let values = (1..=maxpos).map(|p| exact_value(n, es, p).expect("finite")).collect();
        let bounds = (1..maxpos).map(|p| exact_value(n + 1, es, 2 * p + 1).expect("finite")).collect();
        Ok(Oracle { cfg, values, bounds })
    }

    pub fn config(&self) -> PositConfig {
        self.cfg
    }

    pub fn value(&self, bits: u64) -> Option<Rational> {
        exact_value(self.cfg.nbits(), self.cfg.es(), bits)
    }

    pub fn round(&self, x: Option<&Rational>) -> u64 {
        let Some(x) = x else { return self.cfg.nar_bits() };
        if x.is_zero() {
            return 0;
        }
        let mag = x.abs();
        let p = if mag >= *self.values.last().expect("nonempty") {
            self.values.len() as u64
        } else if mag <= self.values[0] {
            1
        } else {
            let below = self.values.partition_point(|v| *v <= mag);
            let p = below as u64;
            let mid = &self.bounds[below - 1];
            if self.values[below - 1] == mag || mag < *mid || (mag == *mid && p.is_multiple_of(2)) {
                p
            } else {
                p + 1
            }
        };
        if x.is_negative() {
            p.wrapping_neg() & self.cfg.mask()
        } else {
            p
        }
    }

    /// `a op b` for `op` in `+ - * /`, exactly, then rounded.
    pub fn op(&self, op: char, a: u64, b: u64) -> u64 {
        let (Some(x), Some(y)) = (self.value(a), self.value(b)) else {
            return self.cfg.nar_bits();
        };
        let exact = match op {
            '+' => Some(x + y),
            '-' => Some(x - y),
            '*' => Some(x * y),
            '/' => (!y.is_zero()).then(|| x / y),
            _ => panic!("unknown operator {op}"),
        };
        self.round(exact.as_ref())
    }

    /// `Σ aᵢ·bᵢ` exactly, rounded once.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        let mut acc = Rational::zero();
        for (&x, &y) in a.iter().zip(b) {
            match (self.value(x), self.value(y)) {
                (Some(x), Some(y)) => acc += x * y,
                _ => return self.cfg.nar_bits(),
            }
        }
        self.round(Some(&acc))
    }
}
