mod common;

use common::{rational_of_f64, rational_value, round_wide, Oracle, Q};
use num_traits::Zero;
use positnn::posit::tables::{tables, Op};
use positnn::{PositConfig, PositValue};
use proptest::prelude::*;

const OPS: [(char, Op); 4] = [('+', Op::Add), ('-', Op::Sub), ('*', Op::Mul), ('/', Op::Div)];

fn apply(v: PositValue, w: PositValue, op: char) -> PositValue {
    match op {
        '+' => v + w,
        '-' => v - w,
        '*' => v * w,
        '/' => v / w,
        _ => unreachable!(),
    }
}

/// Every operand pair of every format with nbits <= 9, es <= 2.
#[test]
fn exhaustive_correct_rounding_small_formats() {
    for nbits in 3..=9 {
        for es in 0..=2 {
            let cfg = PositConfig::of(nbits, es);
            let oracle = Oracle::new(cfg);
            for a in 0..=cfg.mask() {
                for b in 0..=cfg.mask() {
                    let (va, vb) = (PositValue::from_bits(cfg, a), PositValue::from_bits(cfg, b));
                    for (c, _) in OPS {
                        let want = oracle.op(c, a, b);
                        assert_eq!(apply(va, vb, c).bits(), want, "{cfg} {a:#b} {c} {b:#b}");
                    }
                }
            }
        }
    }
}

/// 10-bit formats: every `a` against a stride of `b` covering all regimes.
#[test]
fn ten_bit_formats_against_oracle() {
    for es in 0..=2 {
        let cfg = PositConfig::of(10, es);
        let oracle = Oracle::new(cfg);
        for a in 0..=cfg.mask() {
            for b in (0..=cfg.mask()).step_by(7) {
                let (va, vb) = (PositValue::from_bits(cfg, a), PositValue::from_bits(cfg, b));
                for (c, _) in OPS {
                    assert_eq!(apply(va, vb, c).bits(), oracle.op(c, a, b), "{cfg} {a} {c} {b}");
                }
            }
        }
    }
}

#[test]
fn encode_decode_round_trip_up_to_twelve_bits() {
    for nbits in 2..=12 {
        for es in 0..=4 {
            let cfg = PositConfig::of(nbits, es);
            for bits in 0..=cfg.mask() {
                let v = PositValue::from_bits(cfg, bits);
                if v.is_nar() {
                    continue;
                }
                let want = rational_value(nbits, es, bits).unwrap();
                assert_eq!(rational_of_f64(v.to_f64()), want, "{v:?}");
                assert_eq!(PositValue::from_f64(v.to_f64(), cfg), v);
            }
        }
    }
}

#[test]
fn negation_is_twos_complement() {
    for cfg in [PositConfig::of(8, 0), PositConfig::of(8, 2), PositConfig::of(11, 1)] {
        for bits in 0..=cfg.mask() {
            let v = PositValue::from_bits(cfg, bits);
            if v.is_nar() {
                continue;
            }
            let neg = PositValue::from_f64(-v.to_f64(), cfg);
            assert_eq!(neg.bits(), bits.wrapping_neg() & cfg.mask());
        }
    }
}

#[test]
fn ordering_matches_signed_patterns_and_values() {
    let cfg = PositConfig::P8;
    for a in 0..=cfg.mask() {
        for b in 0..=cfg.mask() {
            let (va, vb) = (PositValue::from_bits(cfg, a), PositValue::from_bits(cfg, b));
            let got = va.compare(vb).unwrap();
            let want = match (rational_value(8, 0, a), rational_value(8, 0, b)) {
                (Some(x), Some(y)) => x.cmp(&y),
                (None, None) => std::cmp::Ordering::Equal,
                (None, Some(_)) => std::cmp::Ordering::Less,
                (Some(_), None) => std::cmp::Ordering::Greater,
            };
            assert_eq!(got, want, "{a} {b}");
            assert_eq!(got, ((a as u8) as i8).cmp(&((b as u8) as i8)));
        }
    }
}

#[test]
fn narrowing_conversion_matches_oracle() {
    let from = PositConfig::of(12, 2);
    let to = PositConfig::of(8, 2);
    let oracle = Oracle::new(to);
    for bits in 0..=from.mask() {
        let v = PositValue::from_bits(from, bits);
        let exact = rational_value(12, 2, bits);
        assert_eq!(v.convert(to).bits(), oracle.round(exact.as_ref()), "{v:?}");
    }
    // widening with equal es is exact
    for bits in 0..=to.mask() {
        let v = PositValue::from_bits(to, bits);
        assert_eq!(v.convert(from).convert(to), v);
        if !v.is_nar() {
            assert_eq!(v.convert(from).to_f64(), v.to_f64());
        }
    }
}

#[test]
fn sixteen_bit_conversion_to_posit8() {
    assert_eq!(PositConfig::P16.maxpos().to_f64(), 2f64.powi(28));
    assert_eq!(PositConfig::P16.maxpos().convert(PositConfig::P8).to_f64(), 64.0);
}

#[test]
fn saturation_examples_match_exhaustive_search() {
    let cfg = PositConfig::P8;
    let oracle = Oracle::new(cfg);
    let x = rational_of_f64(128.0);
    assert_eq!(oracle.round(Some(&x)), 0b0111_1111);
    assert_eq!(PositValue::from_f64(128.0, cfg).bits(), 0b0111_1111);
    let sixty_four = PositValue::from_f64(64.0, cfg);
    assert_eq!((sixty_four + sixty_four).bits(), oracle.op('+', 0x7f, 0x7f));
    assert_eq!(oracle.op('+', 0x40, 0x40), 0b0110_0000);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn sixteen_bit_ops_match_oracle(a in 0u64..65536, b in 0u64..65536, es in 0u32..=2) {
        let cfg = PositConfig::of(16, es);
        let (va, vb) = (PositValue::from_bits(cfg, a), PositValue::from_bits(cfg, b));
        for (c, _) in OPS {
            let want = match (rational_value(16, es, a), rational_value(16, es, b)) {
                (Some(x), Some(y)) => {
                    let exact = match c {
                        '+' => Some(x + y),
                        '-' => Some(x - y),
                        '*' => Some(x * y),
                        _ => (!y.is_zero()).then(|| x / y),
                    };
                    exact.map(|e| round_wide(cfg, &e)).unwrap_or(cfg.nar_bits())
                }
                _ => cfg.nar_bits(),
            };
            prop_assert_eq!(apply(va, vb, c).bits(), want);
        }
    }

    #[test]
    fn sixteen_bit_fast_path_is_bit_identical(a in 0u64..65536, b in 0u64..65536, es in 0u32..=4) {
        let cfg = PositConfig::of(16, es);
        let t = tables(cfg);
        let (va, vb) = (PositValue::from_bits(cfg, a), PositValue::from_bits(cfg, b));
        for (c, op) in OPS {
            prop_assert_eq!(t.apply_f64(op, a, b), apply(va, vb, c).bits());
        }
    }

    #[test]
    fn wide_formats_match_oracle(a: u64, b: u64, pick in 0usize..4) {
        let cfg = [PositConfig::of(32, 2), PositConfig::of(24, 3), PositConfig::of(64, 3), PositConfig::of(40, 4)][pick];
        let (va, vb) = (PositValue::from_bits(cfg, a), PositValue::from_bits(cfg, b));
        let (Some(x), Some(y)) = (rational_value(cfg.nbits(), cfg.es(), va.bits()), rational_value(cfg.nbits(), cfg.es(), vb.bits())) else {
            return Ok(());
        };
        prop_assert_eq!((va + vb).bits(), round_wide(cfg, &(x.clone() + y.clone())));
        prop_assert_eq!((va * vb).bits(), round_wide(cfg, &(x.clone() * y.clone())));
        if !y.is_zero() {
            prop_assert_eq!((va / vb).bits(), round_wide(cfg, &(x / y)));
        }
    }

    #[test]
    fn from_f64_matches_oracle(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL, pick in 0usize..3) {
        let cfg = [PositConfig::P16, PositConfig::P32, PositConfig::of(12, 2)][pick];
        let want = round_wide(cfg, &rational_of_f64(x));
        prop_assert_eq!(PositValue::from_f64(x, cfg).bits(), want);
    }

    #[test]
    fn to_f64_is_exact_up_to_32_bits(bits: u32) {
        let v = PositValue::from_bits(PositConfig::P32, bits as u64);
        if let Some(want) = rational_value(32, 2, bits as u64) {
            prop_assert_eq!(rational_of_f64(v.to_f64()), want);
        }
    }
}

#[test]
fn ratio_matches_oracle() {
    let cfg = PositConfig::of(10, 1);
    let oracle = Oracle::new(cfg);
    for num in -40i64..=40 {
        for den in 1u64..=30 {
            let exact = Q::new(num.into(), (den as i64).into());
            assert_eq!(PositValue::from_ratio(num, den, cfg).bits(), oracle.round(Some(&exact)));
        }
    }
}
