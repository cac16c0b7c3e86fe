//! Where the finite values of a posit format lie, on linear and log2 axes.

use std::fmt::Write as _;

use crate::error::Result;
use crate::PositConfig;

pub const DISTRIBUTION_HEADER: &str = "bits,value,linear_bucket,log2_bucket";

#[derive(Clone, Debug, PartialEq)]
pub struct Distribution {
    pub config: PositConfig,
    /// `(pattern, value)` of every finite value, ascending by value.
    pub values: Vec<(u64, f64)>,
    /// Equal-width buckets over `[-maxpos, maxpos]`.
    pub buckets: usize,
}

impl Distribution {
    pub fn new(config: PositConfig, buckets: usize) -> Result<Self> {
        let mut values: Vec<(u64, f64)> =
            config.enumerate_values()?.into_iter().filter_map(|(b, v)| v.map(|v| (b, v))).collect();
        values.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(Distribution { config, values, buckets: buckets.max(1) })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max)
    }

    pub fn linear_bucket(&self, v: f64) -> usize {
        let m = self.max_abs();
        let width = 2.0 * m / self.buckets as f64;
        (((v + m) / width) as usize).min(self.buckets - 1)
    }

    /// `floor(log2 |v|)`, absent for zero.
    pub fn log2_bucket(v: f64) -> Option<i32> {
        (v != 0.0).then(|| v.abs().log2().floor() as i32)
    }

    /// Count of values per linear bucket.
    pub fn linear_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.buckets];
        for &(_, v) in &self.values {
            h[self.linear_bucket(v)] += 1;
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{DISTRIBUTION_HEADER}\n");
        let digits = (self.config.nbits() as usize).div_ceil(4);
        for &(b, v) in &self.values {
            let log = Self::log2_bucket(v).map_or_else(String::new, |e| e.to_string());
            let _ = writeln!(s, "{b:#0w$x},{v:e},{},{log}", self.linear_bucket(v), w = digits + 2);
        }
        s
    }
}
