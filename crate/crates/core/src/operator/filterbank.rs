use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Spatial dimensionality of filters and inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dims {
    One,
    Two,
}

impl Dims {
    pub fn count(self) -> u32 {
        match self {
            Dims::One => 1,
            Dims::Two => 2,
        }
    }

    /// Number of cells in a hypercube of side `len`.
    pub fn volume(self, len: usize) -> usize {
        len.pow(self.count())
    }
}

impl TryFrom<u8> for Dims {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Dims::One),
            2 => Ok(Dims::Two),
            other => Err(format!("dims must be 1 or 2, got {other}")),
        }
    }
}

impl From<Dims> for u8 {
    fn from(d: Dims) -> u8 {
        d.count() as u8
    }
}

/// `K` filters over `M` channels, each of spatial size `len` (1-d) or
/// `len x len` (2-d). Weights are stored in `(filter, channel, spatial)`
/// order with spatial indices row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    num_filters: usize,
    num_channels: usize,
    filter_len: usize,
    dims: Dims,
    weights: Vec<f64>,
}

impl FilterBank {
    pub fn new(
        num_filters: usize,
        num_channels: usize,
        filter_len: usize,
        dims: Dims,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if num_filters == 0 || num_channels == 0 || filter_len == 0 {
            return Err(Error::InvalidParameter(format!(
                "filter bank sizes must be positive (K={num_filters}, M={num_channels}, len={filter_len})"
            )));
        }
        let expected = num_filters * num_channels * dims.volume(filter_len);
        if weights.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: weights.len(),
            });
        }
        if let Some(pos) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight {pos} is not finite"
            )));
        }
        Ok(Self {
            num_filters,
            num_channels,
            filter_len,
            dims,
            weights,
        })
    }

    pub fn num_filters(&self) -> usize {
        self.num_filters
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn filter_len(&self) -> usize {
        self.filter_len
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of weights in one filter across all channels.
    pub fn group_len(&self) -> usize {
        self.num_channels * self.dims.volume(self.filter_len)
    }

    /// All channels of filter `i`, contiguous.
    pub fn filter(&self, i: usize) -> &[f64] {
        let g = self.group_len();
        &self.weights[i * g..(i + 1) * g]
    }

    /// `sqrt(sum_m ||w_{i,m}||^2)`, which is also the norm of every row of
    /// the induced operator belonging to filter `i`.
    pub fn group_norm(&self, i: usize) -> f64 {
        crate::norm2(self.filter(i))
    }

    /// Reorders filters: filter `j` of the result is filter `perm[j]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.num_filters];
        if perm.len() != self.num_filters
            || perm.iter().any(|&p| p >= self.num_filters || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidParameter("not a permutation of the filters".into()));
        }
        let weights = perm.iter().flat_map(|&p| self.filter(p).iter().copied()).collect();
        Ok(Self { weights, ..self.clone() })
    }
}

/// Draws i.i.d. `N(0, 1)` weights scaled by `1/sqrt(M * len^dims)` so that
/// every induced row has unit expected squared norm.
pub fn new_random_filterbank(
    num_filters: usize,
    num_channels: usize,
    filter_len: usize,
    dims: Dims,
    seed: u64,
) -> Result<FilterBank> {
    if num_filters == 0 || num_channels == 0 || filter_len == 0 {
        return Err(Error::InvalidParameter(
            "filter bank sizes must be positive".into(),
        ));
    }
    let count = num_filters * num_channels * dims.volume(filter_len);
    let scale = 1.0 / ((num_channels * dims.volume(filter_len)) as f64).sqrt();
    let mut rng = rng::stream(seed, rng::FILTER_STREAM);
    let weights = (0..count)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * scale
        })
        .collect();
    FilterBank::new(num_filters, num_channels, filter_len, dims, weights)
}

/// Rescales each filter group to unit norm across channels.
pub fn normalize_rows(bank: &FilterBank) -> Result<FilterBank> {
    let g = bank.group_len();
    let mut weights = bank.weights.clone();
    for (i, group) in weights.chunks_mut(g).enumerate() {
        let norm = crate::norm2(group);
        if norm == 0.0 {
            return Err(Error::ZeroFilter { index: i });
        }
        group.iter_mut().for_each(|w| *w /= norm);
    }
    Ok(FilterBank {
        weights,
        ..bank.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_four_five() {
        let bank = FilterBank::new(1, 1, 2, Dims::One, vec![3.0, 4.0]).unwrap();
        let n = normalize_rows(&bank).unwrap();
        assert!((n.weights()[0] - 0.6).abs() < 1e-15);
        assert!((n.weights()[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn normalization_is_idempotent() {
        let bank = normalize_rows(&new_random_filterbank(4, 3, 3, Dims::Two, 1).unwrap()).unwrap();
        let again = normalize_rows(&bank).unwrap();
        for (a, b) in bank.weights().iter().zip(again.weights()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn zero_filter_rejected() {
        let bank = FilterBank::new(2, 1, 2, Dims::One, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(normalize_rows(&bank), Err(Error::ZeroFilter { index: 1 })));
    }

    #[test]
    fn paper_sized_bank() {
        let bank = new_random_filterbank(96, 32, 5, Dims::One, 3).unwrap();
        assert_eq!(bank.weights().len(), 96 * 32 * 5);
        let bank = normalize_rows(&bank).unwrap();
        for i in 0..96 {
            assert!((bank.group_norm(i) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn scalar_bank_is_unscaled_gaussian() {
        let bank = new_random_filterbank(1, 1, 1, Dims::One, 11).unwrap();
        let mut rng = rng::stream(11, rng::FILTER_STREAM);
        let g: f64 = StandardNormal.sample(&mut rng);
        assert_eq!(bank.weights(), &[g]);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = new_random_filterbank(3, 2, 4, Dims::One, 5).unwrap();
        let b = new_random_filterbank(3, 2, 4, Dims::One, 5).unwrap();
        let c = new_random_filterbank(3, 2, 4, Dims::One, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn entry_variance_matches_scaling() {
        // K=M=1, len=4: each entry has variance 1/4.
        let seeds = 10_000u64;
        let sq: Vec<f64> = (0..seeds)
            .map(|s| {
                let b = new_random_filterbank(1, 1, 4, Dims::One, s).unwrap();
                b.weights().iter().map(|w| w * w).sum::<f64>() / 4.0
            })
            .collect();
        let mean = sq.iter().sum::<f64>() / seeds as f64;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64;
        let se = (var / seeds as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(FilterBank::new(0, 1, 1, Dims::One, vec![]).is_err());
        assert!(FilterBank::new(1, 1, 2, Dims::One, vec![1.0]).is_err());
        assert!(FilterBank::new(1, 1, 1, Dims::One, vec![f64::NAN]).is_err());
        assert!(new_random_filterbank(1, 0, 1, Dims::One, 0).is_err());
    }
}
