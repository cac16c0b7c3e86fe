//! Kulisch-style exact accumulator.
//!
//! A quire for posit(n, es) is a two's-complement fixed-point register of
//! `4·(n−2)·2^es + n` bits whose lsb weighs minpos². Every product of two
//! posits lands on that grid exactly, so sums of up to `2^(n−1)−1` products are
//! exact and rounding happens once, in [`Quire::to_posit`]. Past that limit the
//! register wraps modulo its width.

use crate::error::{Error, Result};
use crate::posit::{Class, Exact, PositConfig, PositValue};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Quire {
    config: PositConfig,
    width: u32,
    frac_bits: u32,
    /// little-endian 64-bit limbs
    limbs: Vec<u64>,
    nar: bool,
}

impl Quire {
    pub fn new(config: PositConfig) -> Self {
        let width = config.quire_bits();
        Quire {
            config,
            width,
            frac_bits: config.quire_frac_bits(),
            limbs: vec![0; width.div_ceil(64) as usize],
            nar: false,
        }
    }

    pub fn config(&self) -> PositConfig {
        self.config
    }

    pub fn width_bits(&self) -> u32 {
        self.width
    }

    pub fn is_nar(&self) -> bool {
        self.nar
    }

    pub fn is_zero(&self) -> bool {
        !self.nar && self.limbs.iter().all(|&l| l == 0)
    }

    pub fn clear(&mut self) {
        self.limbs.iter_mut().for_each(|l| *l = 0);
        self.nar = false;
    }

    fn check(&self, v: PositValue) -> Result<()> {
        if v.config() != self.config {
            return Err(Error::FormatMismatch { left: self.config, right: v.config() });
        }
        Ok(())
    }

    /// `q += a·b`, exactly.
    pub fn add_product(&mut self, a: PositValue, b: PositValue) -> Result<()> {
        self.product(a, b, false)
    }

    /// `q −= a·b`, exactly.
    pub fn sub_product(&mut self, a: PositValue, b: PositValue) -> Result<()> {
        self.product(a, b, true)
    }

    pub fn add_posit(&mut self, a: PositValue) -> Result<()> {
        self.single(a, false)
    }

    pub fn sub_posit(&mut self, a: PositValue) -> Result<()> {
        self.single(a, true)
    }

    fn product(&mut self, a: PositValue, b: PositValue, negate: bool) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        match (a.class(), b.class()) {
            (Class::NaR, _) | (_, Class::NaR) => self.nar = true,
            (Class::Zero, _) | (_, Class::Zero) => {}
            (Class::Real(x), Class::Real(y)) => {
                let mag = x.frac as u128 * y.frac as u128;
                self.accumulate((x.neg != y.neg) != negate, mag, x.scale + y.scale - 126);
            }
        }
        Ok(())
    }

    fn single(&mut self, a: PositValue, negate: bool) -> Result<()> {
        self.check(a)?;
        match a.class() {
            Class::NaR => self.nar = true,
            Class::Zero => {}
            Class::Real(x) => self.accumulate(x.neg != negate, x.frac as u128, x.scale - 63),
        }
        Ok(())
    }

    /// Adds `±mag · 2^lsb_scale`.
    fn accumulate(&mut self, neg: bool, mag: u128, lsb_scale: i32) {
        let mut pos = lsb_scale + self.frac_bits as i32;
        let mut mag = mag;
        if pos < 0 {
            debug_assert!(mag & ((1u128 << -pos) - 1) == 0, "value below the quire lsb");
            mag >>= -pos;
            pos = 0;
        }
        let limb = (pos / 64) as usize;
        let shift = (pos % 64) as u32;
        // mag << shift spans at most three limbs
        let lo = (mag << shift) as u64;
        let mid = ((mag << shift) >> 64) as u64;
        let hi = if shift == 0 { 0 } else { (mag >> (128 - shift)) as u64 };
        let parts = [lo, mid, hi];
        let n = self.limbs.len();
        let mut carry = false;
        for i in limb..n {
            let p = parts.get(i - limb).copied().unwrap_or(0);
            if i - limb >= 3 && !carry {
                break;
            }
            if neg {
                let (d, b1) = self.limbs[i].overflowing_sub(p);
                let (d, b2) = d.overflowing_sub(carry as u64);
                self.limbs[i] = d;
                carry = b1 || b2;
            } else {
                let (s, c1) = self.limbs[i].overflowing_add(p);
                let (s, c2) = s.overflowing_add(carry as u64);
                self.limbs[i] = s;
                carry = c1 || c2;
            }
        }
        self.wrap();
    }

    fn wrap(&mut self) {
        let top_bits = self.width % 64;
        if top_bits != 0 {
            let last = self.limbs.len() - 1;
            let sign = (self.limbs[last] >> (top_bits - 1)) & 1;
            let mask = (1u64 << top_bits) - 1;
            // keep the top limb sign-extended so comparisons stay simple
            self.limbs[last] = if sign == 1 { self.limbs[last] | !mask } else { self.limbs[last] & mask };
        }
    }

    fn is_negative(&self) -> bool {
        self.limbs.last().map(|l| l >> 63 == 1).unwrap_or(false)
    }

    /// The accumulated value rounded once into the element format.
    pub fn to_posit(&self) -> PositValue {
        let cfg = self.config;
        if self.nar {
            return cfg.nar();
        }
        let neg = self.is_negative();
        let mut mag = self.limbs.clone();
        if neg {
            let mut carry = true;
            for l in mag.iter_mut() {
                let (v, c) = (!*l).overflowing_add(carry as u64);
                *l = v;
                carry = c;
            }
        }
        let Some(top_limb) = mag.iter().rposition(|&l| l != 0) else {
            return cfg.zero();
        };
        let top = top_limb as i32 * 64 + 63 - mag[top_limb].leading_zeros() as i32;
        // 128-bit window ending at `top`
        let lo_bit = top - 127;
        let bit = |i: i32| -> u128 {
            if i < 0 {
                0
            } else {
                ((mag[(i / 64) as usize] >> (i % 64)) & 1) as u128
            }
        };
        let (window, sticky) = if lo_bit <= 0 {
            let mut w = 0u128;
            for (i, &l) in mag.iter().enumerate().take(2) {
                w |= (l as u128) << (64 * i);
            }
            (w, false)
        } else {
            let mut w = 0u128;
            for i in (lo_bit..=top).rev() {
                w = (w << 1) | bit(i);
            }
            let sticky = (0..lo_bit).any(|i| bit(i) == 1);
            (w, sticky)
        };
        let lsb_scale = lo_bit.max(0) - self.frac_bits as i32;
        let e = Exact::from_u128(neg, window, lsb_scale, sticky);
        PositValue::from_bits(cfg, e.round(cfg))
    }
}

/// Dot product accumulated exactly and rounded once.
pub fn fused_dot(a: &[PositValue], b: &[PositValue]) -> Result<PositValue> {
    if a.len() != b.len() {
        return Err(Error::shape("fused_dot", format!("lengths {} and {}", a.len(), b.len())));
    }
    let Some(first) = a.first().or(b.first()) else {
        return Err(Error::Usage("fused_dot of empty sequences has no format".into()));
    };
    let mut q = Quire::new(first.config());
    for (&x, &y) in a.iter().zip(b) {
        q.add_product(x, y)?;
    }
    Ok(q.to_posit())
}

/// Rounds a quire held in an `i128` (formats whose quire fits in 128 bits).
pub(crate) fn round_i128(cfg: PositConfig, acc: i128) -> u64 {
    let width = cfg.quire_bits();
    debug_assert!(width <= 128);
    let acc = if width < 128 { (acc << (128 - width)) >> (128 - width) } else { acc };
    if acc == 0 {
        return 0;
    }
    let neg = acc < 0;
    Exact::from_u128(neg, acc.unsigned_abs(), -(cfg.quire_frac_bits() as i32), false).round(cfg)
}
