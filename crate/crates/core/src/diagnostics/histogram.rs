use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform bins over `[lo, hi)`, left-closed and right-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    /// Values `>= hi`, including NaN.
    pub overflow: u64,
}

impl Histogram {
    pub fn new(values: &[f64], bins: usize, lo: f64, hi: f64) -> Result<Self> {
        if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::BadRange { lo, hi });
        }
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins)
            .map(|i| if i == bins { hi } else { lo + i as f64 * width })
            .collect::<Vec<_>>();
        let mut counts = vec![0u64; bins];
        let (mut underflow, mut overflow) = (0, 0);
        for &v in values {
            if v < lo {
                underflow += 1;
            } else if v >= hi || v.is_nan() {
                overflow += 1;
            } else {
                let mut b = (((v - lo) / width) as usize).min(bins - 1);
                // correct for rounding in the division near edges
                if v < edges[b] {
                    b -= 1;
                } else if v >= edges[b + 1] {
                    b += 1;
                }
                counts[b] += 1;
            }
        }
        Ok(Self {
            edges,
            counts,
            underflow,
            overflow,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    /// Index of the fullest bin (lowest on ties).
    pub fn modal_bin(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }

    /// `bin_lo,bin_hi,count` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                format_float(self.edges[i]),
                format_float(self.edges[i + 1]),
                c
            ));
        }
        out
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
