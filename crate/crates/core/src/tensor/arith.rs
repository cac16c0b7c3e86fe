//! Scalar arithmetic over raw tensor words for one numeric kind.
//!
//! Tensors store every element as a `u64` word: a posit bit pattern, or the
//! bits of an `f32`/`f64`. An [`Arith`] interprets those words and provides
//! the accumulation kernels used by the linear-algebra routines.

use std::cmp::Ordering;
use std::sync::Arc;

use super::Numeric;
use crate::posit::tables::{tables, Op, PositTables};
use crate::posit::{PositConfig, PositValue};
use crate::quire::{self, Quire};

#[derive(Clone)]
enum Imp {
    F32,
    F64,
    Posit(Arc<PositTables>),
}

#[derive(Clone)]
pub struct Arith {
    kind: Numeric,
    imp: Imp,
    /// 2^(quire fraction bits) when the quire fits an i128 and values fit f64 exactly
    fixed_scale: Option<i32>,
}

impl std::fmt::Debug for Arith {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Arith({})", self.kind)
    }
}

/// Exact `x · 2^frac_bits` as an integer, for an `x` already on that grid.
#[inline]
fn to_fixed(x: f64, frac_bits: i32) -> i128 {
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    if exp == 0 || exp == 0x7ff {
        // zero, or NaR (tracked separately by the caller)
        return 0;
    }
    let m = ((bits & ((1u64 << 52) - 1)) | (1u64 << 52)) as i128;
    let sh = exp - 1075 + frac_bits;
    let v = if sh >= 0 { m << sh } else { m >> -sh };
    if bits >> 63 == 1 {
        -v
    } else {
        v
    }
}

impl Arith {
    pub fn new(kind: Numeric) -> Self {
        match kind {
            Numeric::F32 => Arith { kind, imp: Imp::F32, fixed_scale: None },
            Numeric::F64 => Arith { kind, imp: Imp::F64, fixed_scale: None },
            Numeric::Posit(cfg) => {
                let t = tables(cfg);
                let fixed_scale =
                    (t.has_fast_path() && cfg.quire_bits() <= 128).then_some(cfg.quire_frac_bits() as i32);
                Arith { kind, imp: Imp::Posit(t), fixed_scale }
            }
        }
    }

    pub fn kind(&self) -> Numeric {
        self.kind
    }

    pub fn posit_config(&self) -> Option<PositConfig> {
        match self.kind {
            Numeric::Posit(c) => Some(c),
            _ => None,
        }
    }

    #[inline]
    pub fn to_f64(&self, w: u64) -> f64 {
        match &self.imp {
            Imp::F32 => f32::from_bits(w as u32) as f64,
            Imp::F64 => f64::from_bits(w),
            Imp::Posit(t) => t.value(w),
        }
    }

    #[inline]
    pub fn from_f64(&self, x: f64) -> u64 {
        match &self.imp {
            Imp::F32 => (x as f32).to_bits() as u64,
            Imp::F64 => x.to_bits(),
            Imp::Posit(t) => t.round(x),
        }
    }

    pub fn one(&self) -> u64 {
        self.from_f64(1.0)
    }

    /// Correctly rounded `num / den` (posits avoid the float detour).
    pub fn ratio(&self, num: i64, den: u64) -> u64 {
        match self.kind {
            Numeric::Posit(c) => PositValue::from_ratio(num, den, c).bits(),
            _ => self.from_f64(num as f64 / den as f64),
        }
    }

    #[inline]
    fn op(&self, op: Op, a: u64, b: u64) -> u64 {
        match &self.imp {
            Imp::F32 => {
                let (x, y) = (f32::from_bits(a as u32), f32::from_bits(b as u32));
                let r = match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                    Op::Mul => x * y,
                    Op::Div => x / y,
                };
                r.to_bits() as u64
            }
            Imp::F64 => {
                let (x, y) = (f64::from_bits(a), f64::from_bits(b));
                let r = match op {
                    Op::Add => x + y,
                    Op::Sub => x - y,
                    Op::Mul => x * y,
                    Op::Div => x / y,
                };
                r.to_bits()
            }
            Imp::Posit(t) => t.apply(op, a, b),
        }
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        self.op(Op::Add, a, b)
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        self.op(Op::Sub, a, b)
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.op(Op::Mul, a, b)
    }

    #[inline]
    pub fn div(&self, a: u64, b: u64) -> u64 {
        self.op(Op::Div, a, b)
    }

    pub fn neg(&self, a: u64) -> u64 {
        match &self.imp {
            Imp::F32 => (a ^ (1 << 31)) & 0xffff_ffff,
            Imp::F64 => a ^ (1 << 63),
            Imp::Posit(t) => (-PositValue::from_bits(t.config(), a)).bits(),
        }
    }

    /// Real ordering; NaR (and float NaN) sort below everything.
    #[inline]
    pub fn compare(&self, a: u64, b: u64) -> Ordering {
        match &self.imp {
            Imp::Posit(t) => {
                let c = t.config();
                PositValue::from_bits(c, a).signed_bits().cmp(&PositValue::from_bits(c, b).signed_bits())
            }
            _ => {
                let (x, y) = (self.to_f64(a), self.to_f64(b));
                match (x.is_nan(), y.is_nan()) {
                    (true, true) => Ordering::Equal,
                    (true, false) => Ordering::Less,
                    (false, true) => Ordering::Greater,
                    _ => x.partial_cmp(&y).unwrap(),
                }
            }
        }
    }

    pub fn is_positive(&self, a: u64) -> bool {
        self.compare(a, 0) == Ordering::Greater
    }

    /// Applies a real function through float64 and rounds once into this kind.
    #[inline]
    pub fn map_f64(&self, a: u64, f: impl Fn(f64) -> f64) -> u64 {
        self.from_f64(f(self.to_f64(a)))
    }

    /// `Σ a[i]·b[i] (+ bias)`. With `quire`, posit kinds accumulate exactly and
    /// round once; otherwise every product and every partial sum is rounded,
    /// in ascending index order, with the bias added last.
    pub fn dot(&self, a: &[u64], b: &[u64], bias: Option<u64>, quire: bool) -> u64 {
        debug_assert_eq!(a.len(), b.len());
        match &self.imp {
            Imp::F32 => {
                let mut acc = 0f32;
                for (&x, &y) in a.iter().zip(b) {
                    acc += f32::from_bits(x as u32) * f32::from_bits(y as u32);
                }
                if let Some(c) = bias {
                    acc += f32::from_bits(c as u32);
                }
                acc.to_bits() as u64
            }
            Imp::F64 => {
                let mut acc = 0f64;
                for (&x, &y) in a.iter().zip(b) {
                    acc += f64::from_bits(x) * f64::from_bits(y);
                }
                if let Some(c) = bias {
                    acc += f64::from_bits(c);
                }
                acc.to_bits()
            }
            Imp::Posit(t) => {
                if quire {
                    self.dot_quire(t, a, b, bias)
                } else {
                    dot_rounded(t, a, b, bias)
                }
            }
        }
    }

    fn dot_quire(&self, t: &PositTables, a: &[u64], b: &[u64], bias: Option<u64>) -> u64 {
        let cfg = t.config();
        if let Some(frac_bits) = self.fixed_scale {
            let mut acc: i128 = 0;
            let mut nar = false;
            for (&x, &y) in a.iter().zip(b) {
                let p = t.value(x) * t.value(y);
                nar |= p.is_nan();
                acc = acc.wrapping_add(to_fixed(p, frac_bits));
            }
            if let Some(c) = bias {
                let v = t.value(c);
                nar |= v.is_nan();
                acc = acc.wrapping_add(to_fixed(v, frac_bits));
            }
            return if nar { cfg.nar_bits() } else { quire::round_i128(cfg, acc) };
        }
        let mut q = Quire::new(cfg);
        for (&x, &y) in a.iter().zip(b) {
            q.add_product(PositValue::from_bits(cfg, x), PositValue::from_bits(cfg, y)).expect("same format");
        }
        if let Some(c) = bias {
            q.add_posit(PositValue::from_bits(cfg, c)).expect("same format");
        }
        q.to_posit().bits()
    }

    /// True when [`Arith::dot_decoded`] is the faster route for this kind:
    /// posits with a value table, except 8-bit rounded dots, which use the
    /// operation tables directly.
    pub(crate) fn prefers_decoded(&self, quire: bool) -> bool {
        match &self.imp {
            Imp::Posit(t) if quire => t.has_fast_path() && self.fixed_scale.is_some(),
            Imp::Posit(t) => t.has_fast_path() && !t.has_lut(),
            _ => false,
        }
    }

    /// Exact float64 values of a word slice (NaR becomes NaN).
    pub(crate) fn decode(&self, words: &[u64]) -> Vec<f64> {
        words.iter().map(|&w| self.to_f64(w)).collect()
    }

    /// [`Arith::dot`] over operands already decoded with [`Arith::decode`];
    /// only valid when [`Arith::prefers_decoded`] holds. Bit-identical to the
    /// word version.
    pub(crate) fn dot_decoded(&self, a: &[f64], b: &[f64], bias: Option<f64>, quire: bool) -> u64 {
        let Imp::Posit(t) = &self.imp else { unreachable!("decoded dots are posit-only") };
        if quire {
            let frac_bits = self.fixed_scale.expect("fixed quire");
            let mut acc: i128 = 0;
            let mut nar = false;
            for (&x, &y) in a.iter().zip(b) {
                let p = x * y;
                nar |= p.is_nan();
                acc = acc.wrapping_add(to_fixed(p, frac_bits));
            }
            if let Some(c) = bias {
                nar |= c.is_nan();
                acc = acc.wrapping_add(to_fixed(c, frac_bits));
            }
            let cfg = t.config();
            return if nar { cfg.nar_bits() } else { quire::round_i128(cfg, acc) };
        }
        let mut acc = 0f64;
        for (&x, &y) in a.iter().zip(b) {
            let p = t.round_value(x * y);
            acc = t.round_value(acc + p);
        }
        if let Some(c) = bias {
            acc = t.round_value(acc + c);
        }
        t.round(acc)
    }

    /// `out[j] = dot_decoded(a, rows[j], bias(j))` for consecutive rows of
    /// `a.len()` values. Without a quire, four independent accumulation chains
    /// are interleaved; each keeps its own order, so results are unchanged.
    pub(crate) fn dots_decoded(
        &self,
        a: &[f64],
        rows: &[f64],
        bias: impl Fn(usize) -> Option<f64>,
        quire: bool,
        out: &mut [u64],
    ) {
        let k = a.len();
        let row = |j: usize| &rows[j * k..(j + 1) * k];
        let Imp::Posit(t) = &self.imp else { unreachable!("decoded dots are posit-only") };
        let mut j = 0;
        if !quire {
            while j + 4 <= out.len() {
                let (r0, r1, r2, r3) = (row(j), row(j + 1), row(j + 2), row(j + 3));
                let mut acc = [0f64; 4];
                for i in 0..k {
                    let x = a[i];
                    acc[0] = t.round_value(acc[0] + t.round_value(x * r0[i]));
                    acc[1] = t.round_value(acc[1] + t.round_value(x * r1[i]));
                    acc[2] = t.round_value(acc[2] + t.round_value(x * r2[i]));
                    acc[3] = t.round_value(acc[3] + t.round_value(x * r3[i]));
                }
                for (q, mut v) in acc.into_iter().enumerate() {
                    if let Some(c) = bias(j + q) {
                        v = t.round_value(v + c);
                    }
                    out[j + q] = t.round(v);
                }
                j += 4;
            }
        }
        for (jj, o) in out.iter_mut().enumerate().skip(j) {
            *o = self.dot_decoded(a, row(jj), bias(jj), quire);
        }
    }

    /// `Σ xs` with the same accumulation rules as [`Arith::dot`].
    pub fn sum(&self, xs: &[u64], quire: bool) -> u64 {
        match &self.imp {
            Imp::Posit(t) if quire => {
                let cfg = t.config();
                if let Some(frac_bits) = self.fixed_scale {
                    let mut acc: i128 = 0;
                    let mut nar = false;
                    for &x in xs {
                        let v = t.value(x);
                        nar |= v.is_nan();
                        acc = acc.wrapping_add(to_fixed(v, frac_bits));
                    }
                    return if nar { cfg.nar_bits() } else { quire::round_i128(cfg, acc) };
                }
                let mut q = Quire::new(cfg);
                for &x in xs {
                    q.add_posit(PositValue::from_bits(cfg, x)).expect("same format");
                }
                q.to_posit().bits()
            }
            _ => xs.iter().fold(0, |acc, &x| self.add(acc, x)),
        }
    }
}

fn dot_rounded(t: &PositTables, a: &[u64], b: &[u64], bias: Option<u64>) -> u64 {
    let mut acc = if t.has_lut() {
        let mut acc = 0;
        for (&x, &y) in a.iter().zip(b) {
            acc = t.apply(Op::Add, acc, t.apply(Op::Mul, x, y));
        }
        acc
    } else if t.has_fast_path() {
        // values stay on the posit grid; each step rounds once
        let mut acc = 0f64;
        for (&x, &y) in a.iter().zip(b) {
            let p = t.round_value(t.value(x) * t.value(y));
            acc = t.round_value(acc + p);
        }
        t.round(acc)
    } else {
        let mut acc = 0;
        for (&x, &y) in a.iter().zip(b) {
            acc = t.apply(Op::Add, acc, t.apply(Op::Mul, x, y));
        }
        acc
    };
    if let Some(c) = bias {
        acc = t.apply(Op::Add, acc, c);
    }
    acc
}
