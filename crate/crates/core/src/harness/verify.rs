//! Self-checks runnable from the command line: exhaustive scalar rounding,
//! quire exactness, gradient checks and worker-count determinism.

use std::fmt;
use std::fs;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ExperimentConfig;
use super::gradcheck;
use super::oracle::Oracle;
use super::train;
use crate::error::{Error, Result};
use crate::quire::fused_dot;
use crate::tensor::{Arith, Numeric};
use crate::{PositConfig, PositValue};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    ScalarExhaustive,
    Quire,
    Gradcheck,
    Determinism,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::ScalarExhaustive, Suite::Quire, Suite::Gradcheck, Suite::Determinism];
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::ScalarExhaustive => "scalar-exhaustive",
            Suite::Quire => "quire",
            Suite::Gradcheck => "gradcheck",
            Suite::Determinism => "determinism",
        })
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.to_string() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite {s:?} (scalar-exhaustive, quire, gradcheck, determinism)")))
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct Report {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{} {}: {} ({})", self.suite, c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail)?;
        }
        write!(f, "{}: {}", self.suite, if self.passed() { "PASS" } else { "FAIL" })
    }
}

pub const EXHAUSTIVE_FORMATS: [(u32, u32); 3] = [(8, 0), (8, 1), (8, 2)];

/// Mismatches of `a op b` against the rational oracle over every operand pair.
pub fn exhaustive_mismatches(cfg: PositConfig, op: char) -> Result<u64> {
    let oracle = Oracle::new(cfg)?;
    let mut bad = 0;
    for a in 0..=cfg.mask() {
        let va = PositValue::from_bits(cfg, a);
        for b in 0..=cfg.mask() {
            let vb = PositValue::from_bits(cfg, b);
            let got = match op {
                '+' => va + vb,
                '-' => va - vb,
                '*' => va * vb,
                _ => va / vb,
            };
            bad += (got.bits() != oracle.op(op, a, b)) as u64;
        }
    }
    Ok(bad)
}

pub fn scalar_exhaustive() -> Result<Report> {
    let mut checks = Vec::new();
    for (n, es) in EXHAUSTIVE_FORMATS {
        let cfg = PositConfig::of(n, es);
        for op in ['+', '-', '*', '/'] {
            let bad = exhaustive_mismatches(cfg, op)?;
            checks.push(Check {
                name: format!("{cfg} {op}"),
                passed: bad == 0,
                detail: format!("{bad} mismatches of {}", 1u64 << (2 * n)),
            });
        }
    }
    Ok(Report { suite: Suite::ScalarExhaustive, checks })
}

/// `(format, longest dot)` pairs exercised by the quire suite.
pub const QUIRE_CASES: [((u32, u32), usize); 2] = [((8, 0), 127), ((8, 2), 500)];

fn random_finite(cfg: PositConfig, rng: &mut ChaCha8Rng) -> u64 {
    loop {
        let b = rng.gen_range(0..=cfg.mask());
        if b != cfg.nar_bits() {
            return b;
        }
    }
}

/// `dots` random fused dot products per format against the oracle, through
/// both the `Quire` API and the tensor kernels, then `shuffles` permutations
/// of one maximal-length dot.
pub fn quire_suite(dots: usize, shuffles: usize, seed: u64) -> Result<Report> {
    let mut checks = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ((n, es), max_len) in QUIRE_CASES {
        let cfg = PositConfig::of(n, es);
        let oracle = Oracle::new(cfg)?;
        let ar = Arith::new(Numeric::Posit(cfg));
        let mut bad = 0;
        for _ in 0..dots {
            let len = rng.gen_range(1..=max_len);
            let a: Vec<u64> = (0..len).map(|_| random_finite(cfg, &mut rng)).collect();
            let b: Vec<u64> = (0..len).map(|_| random_finite(cfg, &mut rng)).collect();
            let want = oracle.dot(&a, &b);
            let pa: Vec<PositValue> = a.iter().map(|&x| PositValue::from_bits(cfg, x)).collect();
            let pb: Vec<PositValue> = b.iter().map(|&x| PositValue::from_bits(cfg, x)).collect();
            let quire = fused_dot(&pa, &pb)?.bits();
            bad += (quire != want || ar.dot(&a, &b, None, true) != want) as usize;
        }
        checks.push(Check {
            name: format!("{cfg} random dots"),
            passed: bad == 0,
            detail: format!("{bad} of {dots} differ from exact-then-round, lengths 1..={max_len}"),
        });
        let mut a: Vec<u64> = (0..max_len).map(|_| random_finite(cfg, &mut rng)).collect();
        let mut b: Vec<u64> = (0..max_len).map(|_| random_finite(cfg, &mut rng)).collect();
        let first = ar.dot(&a, &b, None, true);
        let mut moved = 0;
        for _ in 0..shuffles {
            let mut idx: Vec<usize> = (0..max_len).collect();
            idx.shuffle(&mut rng);
            a = idx.iter().map(|&i| a[i]).collect();
            b = idx.iter().map(|&i| b[i]).collect();
            moved += (ar.dot(&a, &b, None, true) != first) as usize;
        }
        checks.push(Check {
            name: format!("{cfg} permutation invariance"),
            passed: moved == 0,
            detail: format!("{moved} of {shuffles} shuffles changed the result"),
        });
    }
    Ok(Report { suite: Suite::Quire, checks })
}

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn gradcheck_suite(seeds: u64) -> Result<Report> {
    let checks = gradcheck::gradcheck_all(0..seeds)?
        .into_iter()
        .map(|r| Check {
            name: r.layer.to_string(),
            passed: r.max_rel_err < GRADCHECK_TOLERANCE,
            detail: format!("max relative error {:.2e} over {seeds} seeds", r.max_rel_err),
        })
        .collect();
    Ok(Report { suite: Suite::Gradcheck, checks })
}

/// Trains `base` once per worker count (each into its own subdirectory of
/// `base.out_dir`, wall-clock column off) and compares the produced files.
pub fn determinism(base: &ExperimentConfig, workers: &[usize]) -> Result<Report> {
    let mut outputs = Vec::new();
    for &w in workers {
        let mut cfg = base.clone();
        cfg.workers = w;
        cfg.wallclock = false;
        cfg.out_dir = base.out_dir.join(format!("workers-{w}"));
        let run = train::train(&cfg, |_| {})?;
        let read = |p: &std::path::Path| fs::read(p).map_err(|e| Error::io(p, e));
        outputs.push((w, read(&run.checkpoint_path)?, read(&run.metrics_path)?));
    }
    let (w0, ckpt0, csv0) = &outputs[0];
    let checks = outputs[1..]
        .iter()
        .map(|(w, ckpt, csv)| Check {
            name: format!("workers {w0} vs {w}"),
            passed: ckpt == ckpt0 && csv == csv0,
            detail: format!(
                "checkpoint {}, metrics {}",
                if ckpt == ckpt0 { "identical" } else { "differs" },
                if csv == csv0 { "identical" } else { "differs" }
            ),
        })
        .collect();
    Ok(Report { suite: Suite::Determinism, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.to_string().parse::<Suite>().unwrap(), s);
        }
        assert!("fuzz".parse::<Suite>().is_err());
    }

    #[test]
    fn small_quire_run_passes() {
        let r = quire_suite(40, 5, 3).unwrap();
        assert!(r.passed(), "{r}");
        assert_eq!(r.checks.len(), 4);
    }

    #[test]
    fn posit8_multiplication_is_exact() {
        assert_eq!(exhaustive_mismatches(PositConfig::P8, '*').unwrap(), 0);
    }
}
