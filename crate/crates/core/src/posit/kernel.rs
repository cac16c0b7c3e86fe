//! Integer kernels. Values are carried as `(sign, scale, significand)` with the
//! significand normalised so bit 63 is the hidden bit; anything below bit 0 is
//! summarised by a sticky flag until the single final rounding.

use super::{Decoded, DecodedPosit, PositConfig};

pub(crate) const HIDDEN: u64 = 1 << 63;

/// A nonzero real, value = ±frac · 2^(scale − 63), with bit 63 of `frac` set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Unpacked {
    pub neg: bool,
    pub scale: i32,
    pub frac: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Class {
    Zero,
    NaR,
    Real(Unpacked),
}

/// An unrounded result: `Unpacked` plus whether any nonzero bits were
/// dropped below the significand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Exact {
    pub neg: bool,
    pub scale: i32,
    pub frac: u64,
    pub sticky: bool,
}

impl Exact {
    pub fn round(self, cfg: PositConfig) -> u64 {
        round_to_bits(cfg, self.neg, self.scale, self.frac, self.sticky)
    }

    /// Normalises a 128-bit magnitude `mag · 2^(lsb_scale)`; `mag` must be nonzero.
    pub fn from_u128(neg: bool, mag: u128, lsb_scale: i32, sticky: bool) -> Exact {
        debug_assert!(mag != 0);
        let top = 127 - mag.leading_zeros() as i32;
        let aligned = mag << (127 - top);
        Exact {
            neg,
            scale: lsb_scale + top,
            frac: (aligned >> 64) as u64,
            sticky: sticky || aligned as u64 != 0,
        }
    }
}

impl From<Unpacked> for Exact {
    fn from(u: Unpacked) -> Self {
        Exact { neg: u.neg, scale: u.scale, frac: u.frac, sticky: false }
    }
}

/// Round-to-nearest-even on the bit pattern, saturating at maxpos and
/// clamping at minpos. Returns the pattern with sign applied.
pub(crate) fn round_to_bits(cfg: PositConfig, neg: bool, scale: i32, frac: u64, sticky: bool) -> u64 {
    debug_assert!(frac & HIDDEN != 0);
    let n = cfg.nbits();
    let es = cfg.es();
    let max_scale = cfg.max_scale();
    let mag = if scale >= max_scale {
        cfg.maxpos_bits()
    } else if scale < -max_scale {
        1
    } else {
        let k = scale >> es;
        let e = (scale & ((1 << es) - 1)) as u128;
        // regime: k+1 ones and a zero, or -k zeros and a one
        let (regime, regime_len) = if k >= 0 {
            let ones = (k + 1) as u32;
            (((1u128 << ones) - 1) << 1, ones + 1)
        } else {
            (1u128, (-k) as u32 + 1)
        };
        let mut body = regime << (128 - regime_len);
        if es > 0 {
            body |= e << (128 - regime_len - es);
        }
        let room = 128 - regime_len - es;
        let f = (frac & !HIDDEN) as u128;
        let mut sticky = sticky;
        if room >= 63 {
            body |= f << (room - 63);
        } else {
            body |= f >> (63 - room);
            sticky |= f & ((1u128 << (63 - room)) - 1) != 0;
        }
        let keep = n - 1;
        let mut p = (body >> (128 - keep)) as u64;
        let round = (body >> (127 - keep)) & 1 == 1;
        sticky |= body & ((1u128 << (127 - keep)) - 1) != 0;
        if round && (sticky || p & 1 == 1) {
            p += 1;
        }
        p
    };
    if neg {
        mag.wrapping_neg() & cfg.mask()
    } else {
        mag
    }
}

struct Fields {
    neg: bool,
    k: i32,
    run: u32,
    exponent: u32,
    /// fraction bits, top-aligned, below the exponent
    rest: u64,
}

fn split(cfg: PositConfig, bits: u64) -> Fields {
    let n = cfg.nbits();
    let es = cfg.es();
    let neg = (bits >> (n - 1)) & 1 == 1;
    let mag = if neg { bits.wrapping_neg() & cfg.mask() } else { bits };
    let x = mag << (65 - n);
    let (k, run) = if x >> 63 == 1 {
        let m = x.leading_ones();
        (m as i32 - 1, m)
    } else {
        let m = x.leading_zeros();
        (-(m as i32), m)
    };
    let after = x.checked_shl(run + 1).unwrap_or(0);
    let exponent = if es == 0 { 0 } else { (after >> (64 - es)) as u32 };
    let rest = after.checked_shl(es).unwrap_or(0);
    Fields { neg, k, run, exponent, rest }
}

pub(crate) fn unpack(cfg: PositConfig, bits: u64) -> Class {
    if bits == 0 {
        return Class::Zero;
    }
    if bits == cfg.nar_bits() {
        return Class::NaR;
    }
    let f = split(cfg, bits);
    Class::Real(Unpacked {
        neg: f.neg,
        scale: f.k * cfg.useed_log2() + f.exponent as i32,
        frac: HIDDEN | (f.rest >> 1),
    })
}

pub(crate) fn decode_fields(cfg: PositConfig, bits: u64) -> Decoded {
    if bits == 0 {
        return Decoded::Zero;
    }
    if bits == cfg.nar_bits() {
        return Decoded::NaR;
    }
    let f = split(cfg, bits);
    let fraction_bits = (cfg.nbits() - 1).saturating_sub(f.run + 1).saturating_sub(cfg.es());
    let fraction_numerator = if fraction_bits == 0 { 0 } else { f.rest >> (64 - fraction_bits) };
    Decoded::Real(DecodedPosit {
        negative: f.neg,
        k: f.k,
        exponent: f.exponent,
        fraction_numerator,
        fraction_bits,
    })
}

pub(crate) fn unpack_f64(x: f64) -> Option<Class> {
    if !x.is_finite() {
        return Some(Class::NaR);
    }
    if x == 0.0 {
        return Some(Class::Zero);
    }
    let raw = x.to_bits();
    let neg = raw >> 63 == 1;
    let biased = ((raw >> 52) & 0x7ff) as i32;
    let mant = raw & ((1 << 52) - 1);
    let u = if biased == 0 {
        // subnormal
        let lz = mant.leading_zeros();
        Unpacked { neg, scale: -1074 + (63 - lz as i32), frac: mant << lz }
    } else {
        Unpacked { neg, scale: biased - 1023, frac: HIDDEN | (mant << 11) }
    };
    Some(Class::Real(u))
}

pub(crate) fn from_f64(cfg: PositConfig, x: f64) -> u64 {
    match unpack_f64(x) {
        Some(Class::Real(u)) => round_to_bits(cfg, u.neg, u.scale, u.frac, false),
        Some(Class::Zero) => 0,
        _ => cfg.nar_bits(),
    }
}

pub(crate) fn to_f64(cfg: PositConfig, bits: u64) -> f64 {
    match unpack(cfg, bits) {
        Class::Zero => 0.0,
        Class::NaR => f64::NAN,
        Class::Real(u) => {
            // frac as f64 lies in [2^63, 2^64]; the power of two is always normal
            let m = (u.frac as f64) * f64::from_bits(((1023 - 63) as u64) << 52);
            let v = m * pow2(u.scale);
            if u.neg {
                -v
            } else {
                v
            }
        }
    }
}

fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

pub(crate) fn convert(from: PositConfig, bits: u64, to: PositConfig) -> u64 {
    if from == to {
        return bits;
    }
    match unpack(from, bits) {
        Class::Zero => 0,
        Class::NaR => to.nar_bits(),
        Class::Real(u) => round_to_bits(to, u.neg, u.scale, u.frac, false),
    }
}

fn unpack_u64(neg: bool, v: u64) -> Unpacked {
    let lz = v.leading_zeros();
    Unpacked { neg, scale: 63 - lz as i32, frac: v << lz }
}

pub(crate) fn from_ratio(cfg: PositConfig, num: i64, den: u64) -> u64 {
    if den == 0 {
        return cfg.nar_bits();
    }
    if num == 0 {
        return 0;
    }
    let a = unpack_u64(num < 0, num.unsigned_abs());
    let b = unpack_u64(false, den);
    div_exact(a, b).round(cfg)
}

pub(crate) fn mul_exact(a: Unpacked, b: Unpacked) -> Exact {
    let p = a.frac as u128 * b.frac as u128;
    let neg = a.neg != b.neg;
    if p >> 127 == 1 {
        Exact { neg, scale: a.scale + b.scale + 1, frac: (p >> 64) as u64, sticky: p as u64 != 0 }
    } else {
        Exact {
            neg,
            scale: a.scale + b.scale,
            frac: (p >> 63) as u64,
            sticky: p & ((1u128 << 63) - 1) != 0,
        }
    }
}

pub(crate) fn div_exact(a: Unpacked, b: Unpacked) -> Exact {
    let num = (a.frac as u128) << 64;
    let den = b.frac as u128;
    let q = num / den;
    let r = num % den;
    let neg = a.neg != b.neg;
    if q >> 64 != 0 {
        Exact { neg, scale: a.scale - b.scale, frac: (q >> 1) as u64, sticky: r != 0 || q & 1 == 1 }
    } else {
        Exact { neg, scale: a.scale - b.scale - 1, frac: q as u64, sticky: r != 0 }
    }
}

/// Exact sum of two nonzero reals; `None` when they cancel exactly.
pub(crate) fn add_exact(a: Unpacked, b: Unpacked) -> Option<Exact> {
    let (big, small) = if (a.scale, a.frac) >= (b.scale, b.frac) { (a, b) } else { (b, a) };
    let d = (big.scale - small.scale) as u32;
    // the larger significand sits at bits 125..62, leaving room for a carry
    let wide = (big.frac as u128) << 62;
    let s = (small.frac as u128) << 62;
    let (shifted, lost) = if d >= 126 {
        (0, true)
    } else {
        (s >> d, d > 0 && s & ((1u128 << d) - 1) != 0)
    };
    let sum = if big.neg == small.neg {
        wide + shifted
    } else if lost {
        // true difference lies strictly between wide - shifted - 1 and wide - shifted
        wide - shifted - 1
    } else {
        wide - shifted
    };
    if sum == 0 {
        return None;
    }
    Some(Exact::from_u128(big.neg, sum, big.scale - 125, lost))
}

pub(crate) fn add(cfg: PositConfig, x: u64, y: u64) -> u64 {
    match (unpack(cfg, x), unpack(cfg, y)) {
        (Class::NaR, _) | (_, Class::NaR) => cfg.nar_bits(),
        (Class::Zero, _) => y,
        (_, Class::Zero) => x,
        (Class::Real(a), Class::Real(b)) => match add_exact(a, b) {
            Some(e) => e.round(cfg),
            None => 0,
        },
    }
}

pub(crate) fn sub(cfg: PositConfig, x: u64, y: u64) -> u64 {
    if y == cfg.nar_bits() {
        return y;
    }
    add(cfg, x, y.wrapping_neg() & cfg.mask())
}

pub(crate) fn mul(cfg: PositConfig, x: u64, y: u64) -> u64 {
    match (unpack(cfg, x), unpack(cfg, y)) {
        (Class::NaR, _) | (_, Class::NaR) => cfg.nar_bits(),
        (Class::Zero, _) | (_, Class::Zero) => 0,
        (Class::Real(a), Class::Real(b)) => mul_exact(a, b).round(cfg),
    }
}

pub(crate) fn div(cfg: PositConfig, x: u64, y: u64) -> u64 {
    match (unpack(cfg, x), unpack(cfg, y)) {
        (Class::NaR, _) | (_, Class::NaR) | (_, Class::Zero) => cfg.nar_bits(),
        (Class::Zero, _) => 0,
        (Class::Real(a), Class::Real(b)) => div_exact(a, b).round(cfg),
    }
}
