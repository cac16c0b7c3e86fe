//! Accelerated scalar paths.
//!
//! * formats up to 8 bits: 256×256 result tables for the four operations;
//! * formats up to 16 bits: a pattern → float64 value table. Sums, products
//!   and quotients of two such values rounded once to binary64 and then once
//!   more to the posit give the correctly rounded posit result, because
//!   binary64 carries more than twice the significand bits of any midpoint
//!   between neighbouring 16-bit posits.
//!
//! Everything here is generated from the integer kernels and is covered by
//! bit-identity tests against them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use super::kernel;
use super::PositConfig;

/// Largest width served by the float64 shortcut.
pub const FAST_F64_MAX_NBITS: u32 = 16;
/// Largest width served by full operation tables.
pub const LUT_MAX_NBITS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub(crate) fn exact(self, cfg: PositConfig, a: u64, b: u64) -> u64 {
        match self {
            Op::Add => kernel::add(cfg, a, b),
            Op::Sub => kernel::sub(cfg, a, b),
            Op::Mul => kernel::mul(cfg, a, b),
            Op::Div => kernel::div(cfg, a, b),
        }
    }

    fn float(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => a / b,
        }
    }
}

struct Lut {
    ops: [Box<[u8]>; 4],
}

/// Float64 → posit rounding by binary scale: for every scale whose posit
/// carries the full exponent field, the pattern of 2^scale and the shift that
/// lines the binary64 mantissa up with the posit fraction.
struct RoundTable {
    max_scale: i32,
    maxpos: f64,
    minpos: f64,
    /// (pattern of 2^scale, 52 − fraction bits), shift 0 marks "use the kernel"
    entries: Box<[(u64, u32)]>,
}

impl RoundTable {
    fn build(cfg: PositConfig) -> Self {
        let (n, es) = (cfg.nbits() as i32, cfg.es() as i32);
        let max_scale = cfg.max_scale();
        let entries = (-max_scale..max_scale)
            .map(|scale| {
                let k = scale >> es;
                let regime_len = if k >= 0 { k + 2 } else { 1 - k };
                let fb = n - 1 - regime_len - es;
                if fb < 0 {
                    (0, 0)
                } else {
                    (kernel::round_to_bits(cfg, false, scale, kernel::HIDDEN, false), (52 - fb) as u32)
                }
            })
            .collect();
        RoundTable {
            max_scale,
            maxpos: kernel::to_f64(cfg, cfg.maxpos_bits()),
            minpos: kernel::to_f64(cfg, 1),
            entries,
        }
    }

    #[inline]
    fn round(&self, cfg: PositConfig, x: f64) -> u64 {
        let raw = x.to_bits();
        let biased = ((raw >> 52) & 0x7ff) as i32;
        if biased == 0 || biased == 0x7ff {
            return kernel::from_f64(cfg, x);
        }
        let scale = biased - 1023;
        let mag = if scale >= self.max_scale {
            cfg.maxpos_bits()
        } else if scale < -self.max_scale {
            1
        } else {
            let (base, sh) = self.entries[(scale + self.max_scale) as usize];
            if sh == 0 {
                return kernel::from_f64(cfg, x);
            }
            let mant = raw & ((1u64 << 52) - 1);
            let mut p = base | (mant >> sh);
            let half = 1u64 << (sh - 1);
            let rest = mant & ((half << 1) - 1);
            if rest > half || (rest == half && p & 1 == 1) {
                p += 1;
            }
            p
        };
        if raw >> 63 == 1 {
            mag.wrapping_neg() & cfg.mask()
        } else {
            mag
        }
    }
}

impl RoundTable {
    /// Value of the correctly rounded posit, computed by rounding the binary64
    /// significand in place; `None` defers to the pattern path. A carry out of
    /// the significand lands in the exponent field, which is exactly the next
    /// posit up.
    #[inline]
    fn round_value(&self, x: f64) -> Option<f64> {
        let raw = x.to_bits();
        let biased = ((raw >> 52) & 0x7ff) as i32;
        if biased == 0 || biased == 0x7ff {
            return None;
        }
        let scale = biased - 1023;
        if scale >= self.max_scale {
            return Some(self.maxpos.copysign(x));
        }
        if scale < -self.max_scale {
            return Some(self.minpos.copysign(x));
        }
        let (base, sh) = self.entries[(scale + self.max_scale) as usize];
        if sh == 0 {
            return None;
        }
        let low = (1u64 << sh) - 1;
        let rest = raw & low;
        let half = 1u64 << (sh - 1);
        // parity of the posit pattern: last fraction bit, or the pattern of 2^scale itself
        let odd = if sh < 52 { (raw >> sh) & 1 == 1 } else { base & 1 == 1 };
        let up = rest > half || (rest == half && odd);
        Some(f64::from_bits((raw & !low) + ((up as u64) << sh)))
    }
}

/// Per-format lookup data, built once and shared read-only.
pub struct PositTables {
    cfg: PositConfig,
    values: Option<Box<[f64]>>,
    rounding: Option<RoundTable>,
    lut: Option<Lut>,
}

impl PositTables {
    fn build(cfg: PositConfig) -> Self {
        let values = (cfg.nbits() <= FAST_F64_MAX_NBITS)
            .then(|| (0..=cfg.mask()).map(|b| kernel::to_f64(cfg, b)).collect::<Box<[f64]>>());
        let lut = (cfg.nbits() <= LUT_MAX_NBITS).then(|| {
            let size = 1usize << (2 * cfg.nbits());
            let n = cfg.nbits();
            let ops = Op::ALL.map(|op| {
                (0..size)
                    .map(|i| {
                        let a = (i >> n) as u64;
                        let b = (i as u64) & cfg.mask();
                        op.exact(cfg, a, b) as u8
                    })
                    .collect::<Box<[u8]>>()
            });
            Lut { ops }
        });
        let rounding = (cfg.nbits() <= FAST_F64_MAX_NBITS).then(|| RoundTable::build(cfg));
        PositTables { cfg, values, rounding, lut }
    }

    pub fn config(&self) -> PositConfig {
        self.cfg
    }

    pub fn has_fast_path(&self) -> bool {
        self.values.is_some()
    }

    pub fn has_lut(&self) -> bool {
        self.lut.is_some()
    }

    /// Exact value of a pattern. Falls back to the kernel above 16 bits.
    #[inline]
    pub fn value(&self, bits: u64) -> f64 {
        match &self.values {
            Some(v) => v[bits as usize],
            None => kernel::to_f64(self.cfg, bits),
        }
    }

    /// Correctly rounded float64 → posit conversion.
    #[inline]
    pub fn round(&self, x: f64) -> u64 {
        match &self.rounding {
            Some(r) => r.round(self.cfg, x),
            None => kernel::from_f64(self.cfg, x),
        }
    }

    /// Rounds `x` to the format and returns the rounded value (fast-path formats only).
    #[inline]
    pub(crate) fn round_value(&self, x: f64) -> f64 {
        match self.rounding.as_ref().and_then(|r| r.round_value(x)) {
            Some(v) => v,
            None => self.value(self.round(x)),
        }
    }

    #[inline]
    pub fn apply(&self, op: Op, a: u64, b: u64) -> u64 {
        if let Some(lut) = &self.lut {
            let i = ((a as usize) << self.cfg.nbits()) | b as usize;
            return lut.ops[op as usize][i] as u64;
        }
        if self.values.is_some() {
            return self.apply_f64(op, a, b);
        }
        op.exact(self.cfg, a, b)
    }

    /// The float64 shortcut on its own, bypassing the operation tables.
    #[inline]
    pub fn apply_f64(&self, op: Op, a: u64, b: u64) -> u64 {
        self.round(op.float(self.value(a), self.value(b)))
    }
}

static CACHE: OnceLock<Mutex<HashMap<PositConfig, Arc<PositTables>>>> = OnceLock::new();

/// Shared tables for `cfg`, built on first use.
pub fn tables(cfg: PositConfig) -> Arc<PositTables> {
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap_or_else(|p| p.into_inner());
    map.entry(cfg).or_insert_with(|| Arc::new(PositTables::build(cfg))).clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lut_matches_kernel_for_all_small_formats() {
        for n in 2..=8 {
            for es in 0..=4 {
                let cfg = PositConfig::of(n, es);
                let t = tables(cfg);
                for a in 0..=cfg.mask() {
                    for b in 0..=cfg.mask() {
                        for op in Op::ALL {
                            assert_eq!(t.apply(op, a, b), op.exact(cfg, a, b), "{cfg} {op:?} {a} {b}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn rounding_table_matches_kernel() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 2..=FAST_F64_MAX_NBITS {
            for es in 0..=4 {
                let cfg = PositConfig::of(n, es);
                let t = tables(cfg);
                let span = cfg.max_scale() as f64 + 3.0;
                let mut probes: Vec<f64> = vec![0.0, -0.0, f64::NAN, f64::INFINITY, f64::MIN_POSITIVE / 4.0, 1e300];
                // exact patterns and the midpoints either side of them
                for b in 0..=cfg.mask() {
                    let v = kernel::to_f64(cfg, b);
                    probes.extend([v, v * (1.0 + f64::EPSILON), v * (1.0 - f64::EPSILON / 2.0)]);
                    let w = kernel::to_f64(cfg, (b + 1) & cfg.mask());
                    probes.push((v + w) / 2.0);
                }
                for _ in 0..20_000 {
                    let e = rng.gen_range(-span..span);
                    let sign = if rng.gen::<bool>() { -1.0 } else { 1.0 };
                    probes.push(sign * e.exp2());
                }
                for x in probes {
                    let want = kernel::from_f64(cfg, x);
                    assert_eq!(t.round(x), want, "{cfg} {x:e}");
                    let v = t.round_value(x);
                    assert!(v.to_bits() == kernel::to_f64(cfg, want).to_bits() || (v.is_nan() && want == cfg.nar_bits()), "{cfg} {x:e}");
                }
            }
        }
    }

    #[test]
    fn float_shortcut_is_bit_identical_up_to_ten_bits() {
        for n in 2..=10 {
            for es in 0..=4 {
                let cfg = PositConfig::of(n, es);
                let t = tables(cfg);
                for a in 0..=cfg.mask() {
                    for b in 0..=cfg.mask() {
                        for op in Op::ALL {
                            assert_eq!(t.apply_f64(op, a, b), op.exact(cfg, a, b), "{cfg} {op:?} {a} {b}");
                        }
                    }
                }
            }
        }
    }
}
