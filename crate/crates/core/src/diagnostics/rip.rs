use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_sparse::{
    sample_model_sparse, sample_region_sparse, ModelSparseSignal, Pooling, PoolingGeometry,
};
use crate::operator::StructuredOperator;
use crate::{norm2, rng};

pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

/// Consecutive all-zero draws tolerated before a trial is abandoned.
const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
}

/// Mean, sample standard deviation, min and max. Empty input gives NaNs.
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let stddev = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if values.is_empty() {
        return Summary { mean: f64::NAN, stddev: f64::NAN, min: f64::NAN, max: f64::NAN };
    }
    Summary { mean, stddev, min, max }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipParams {
    pub blocks: usize,
    pub shifts: usize,
    pub k: Option<usize>,
    pub region_fraction: Option<f64>,
    pub pooling: Pooling,
    pub trials: usize,
    pub seed: u64,
    /// All-zero draws that were rejected and redrawn.
    pub resampled: usize,
}

/// Distribution of `||W^T z|| / ||z||` over sampled model-sparse `z`.
///
/// `delta_hat = max |ratio^2 - 1|` is a lower bound on the true model-RIP
/// constant: sampling never sees the worst support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub ratios: Vec<f64>,
    pub mean: f64,
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub delta_hat: f64,
    pub params: RipParams,
}

impl RipReport {
    fn from_ratios(ratios: Vec<f64>, params: RipParams) -> Self {
        let s = summarize(&ratios);
        let delta_hat = ratios.iter().map(|r| (r * r - 1.0).abs()).fold(0.0, f64::max);
        Self {
            mean: s.mean,
            stddev: s.stddev,
            min: s.min,
            max: s.max,
            delta_hat,
            ratios,
            params,
        }
    }
}

fn ratio(op: &StructuredOperator, z: &ModelSparseSignal) -> Result<f64> {
    Ok(norm2(&op.apply_adjoint(&z.coeffs)?) / norm2(&z.coeffs))
}

/// Draws `trials` independent signals in parallel; trial `i` uses stream
/// `(seed, i)` and redraws while its sample is all zero. Also returns the
/// total number of redraws.
pub(crate) fn draw_trials<F>(trials: usize, seed: u64, draw: F) -> Result<(Vec<ModelSparseSignal>, usize)>
where
    F: Fn(&mut rng::StreamRng) -> Result<ModelSparseSignal> + Sync + Send,
{
    let per_trial: Vec<Result<(ModelSparseSignal, usize)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t);
            for attempt in 0..MAX_RESAMPLES {
                let z = draw(&mut r)?;
                if z.nnz() > 0 {
                    return Ok((z, attempt));
                }
            }
            Err(Error::DegenerateSignal {
                attempts: MAX_RESAMPLES,
            })
        })
        .collect();
    let mut signals = Vec::with_capacity(trials);
    let mut resampled = 0;
    for r in per_trial {
        let (z, extra) = r?;
        resampled += extra;
        signals.push(z);
    }
    Ok((signals, resampled))
}

fn ratios(op: &StructuredOperator, signals: &[ModelSparseSignal]) -> Result<Vec<f64>> {
    signals.par_iter().map(|z| ratio(op, z)).collect()
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    Ok(())
}

/// Samples `z` in `M_k` (one nonzero in each of `k` blocks) and records
/// `||W^T z|| / ||z||` per trial.
pub fn empirical_rip(
    op: &StructuredOperator,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<RipReport> {
    check_trials(trials)?;
    let layout = op.block_layout();
    if k > layout.blocks {
        return Err(Error::SparsityTooLarge {
            k,
            blocks: layout.blocks,
        });
    }
    let (signals, resampled) = draw_trials(trials, seed, |r| sample_model_sparse(layout, k, r))?;
    let params = RipParams {
        blocks: layout.blocks,
        shifts: layout.shifts,
        k: Some(k),
        region_fraction: None,
        pooling: Pooling::FullBlock,
        trials,
        seed,
        resampled,
    };
    Ok(RipReport::from_ratios(ratios(op, &signals)?, params))
}

/// Per-region sparse codes: each pooling region is active with probability
/// `region_fraction`. All-zero draws are redrawn and counted.
pub fn rip_2d_experiment(
    op: &StructuredOperator,
    geom: &PoolingGeometry,
    region_fraction: f64,
    trials: usize,
    seed: u64,
) -> Result<RipReport> {
    check_trials(trials)?;
    if geom.signal_len() != op.row_count() {
        return Err(Error::DimensionMismatch {
            expected: op.row_count(),
            actual: geom.signal_len(),
        });
    }
    let (signals, resampled) =
        draw_trials(trials, seed, |r| sample_region_sparse(geom, region_fraction, r))?;
    let layout = geom.layout();
    let params = RipParams {
        blocks: layout.blocks,
        shifts: layout.shifts,
        k: None,
        region_fraction: Some(region_fraction),
        pooling: geom.mode(),
        trials,
        seed,
        resampled,
    };
    Ok(RipReport::from_ratios(ratios(op, &signals)?, params))
}

/// Support family for exact model-RIP constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RipOrder {
    /// Supports of `M_k`: `k` distinct blocks, one position each.
    Single,
    /// Unions of two `M_k` supports: at most two positions per block, at most
    /// `k` doubled blocks and at most `2k` positions in total.
    Pair,
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Enumerates the maximal supports of the family and calls `visit` on each.
fn for_each_support(
    blocks: usize,
    block_len: usize,
    k: usize,
    order: RipOrder,
    visit: &mut dyn FnMut(&[usize]),
) {
    let pair_cap = if order == RipOrder::Pair { 2usize.min(block_len) } else { 1 };
    let budget = if order == RipOrder::Pair { 2 * k } else { k };
    let mut current = Vec::new();
    // (block, singles b1, doubles b2)
    fn rec(
        b: usize,
        b1: usize,
        b2: usize,
        ctx: (usize, usize, usize, usize, usize),
        current: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize]),
    ) {
        let (blocks, block_len, k, budget, pair_cap) = ctx;
        let used = b1 + 2 * b2;
        if b == blocks {
            // maximal: no free block can take one more position and no single
            // block can be doubled
            let free_blocks = blocks - b1 - b2;
            let can_add_single = free_blocks > 0 && used < budget;
            let can_double = pair_cap == 2 && b1 > 0 && b2 < k && used < budget;
            if !can_add_single && !can_double {
                visit(current);
            }
            return;
        }
        let base = b * block_len;
        rec(b + 1, b1, b2, ctx, current, visit);
        if used < budget {
            for p in 0..block_len {
                current.push(base + p);
                rec(b + 1, b1 + 1, b2, ctx, current, visit);
                current.pop();
            }
        }
        if pair_cap == 2 && b2 < k && used + 2 <= budget {
            for p in 0..block_len {
                for q in p + 1..block_len {
                    current.push(base + p);
                    current.push(base + q);
                    rec(b + 1, b1, b2 + 1, ctx, current, visit);
                    current.pop();
                    current.pop();
                }
            }
        }
    }
    rec(0, 0, 0, (blocks, block_len, k, budget, pair_cap), &mut current, visit);
}

/// Number of supports the enumeration may visit (all members of the family,
/// maximal or not), used against the cap before any work is done.
fn family_size(blocks: usize, block_len: usize, k: usize, order: RipOrder) -> u128 {
    let bl = block_len as u128;
    match order {
        RipOrder::Single => {
            let kk = k.min(blocks) as u128;
            binomial(blocks as u128, kk).saturating_mul(bl.saturating_pow(kk as u32))
        }
        RipOrder::Pair => {
            // counts[b1][b2] over processed blocks
            let budget = 2 * k;
            let mut counts = vec![vec![0u128; k + 1]; budget + 1];
            counts[0][0] = 1;
            let pairs = binomial(bl, 2);
            for _ in 0..blocks {
                let mut next = counts.clone();
                for b1 in 0..=budget {
                    for b2 in 0..=k {
                        let c = counts[b1][b2];
                        if c == 0 {
                            continue;
                        }
                        if b1 + 1 + 2 * b2 <= budget {
                            next[b1 + 1][b2] = next[b1 + 1][b2].saturating_add(c.saturating_mul(bl));
                        }
                        if b2 < k && b1 + 2 * (b2 + 1) <= budget {
                            next[b1][b2 + 1] = next[b1][b2 + 1].saturating_add(c.saturating_mul(pairs));
                        }
                    }
                }
                counts = next;
            }
            counts.iter().flatten().fold(0u128, |a, &c| a.saturating_add(c))
        }
    }
}

fn extreme_distortion(gram: &DMatrix<f64>, support: &[usize]) -> f64 {
    if support.is_empty() {
        return 0.0;
    }
    let sub = DMatrix::from_fn(support.len(), support.len(), |a, b| gram[(support[a], support[b])]);
    let eig = SymmetricEigen::new(sub).eigenvalues;
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    (hi - 1.0).max(1.0 - lo)
}

/// Exact model-RIP constant of `W^T`: the maximum over every support `S` of
/// the family of `max(lambda_max - 1, 1 - lambda_min)` of the Gram matrix
/// `W_S W_S^T`. By eigenvalue interlacing only maximal supports are visited.
pub fn exact_model_rip_delta(
    op: &StructuredOperator,
    k: usize,
    order: RipOrder,
    cap: u128,
) -> Result<f64> {
    let layout = op.block_layout();
    let count = family_size(layout.blocks, layout.block_len(), k, order);
    if count > cap {
        return Err(Error::EnumerationTooLarge { count, cap });
    }
    let w = op.materialize_dense();
    let gram = &w * w.transpose();
    let mut delta = 0.0f64;
    for_each_support(layout.blocks, layout.block_len(), k, order, &mut |s| {
        delta = delta.max(extreme_distortion(&gram, s));
    });
    Ok(delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactDeltas {
    pub delta_k: f64,
    pub delta_2k: f64,
}

/// Both exact constants. Every `M_k` support is contained in some pair
/// support, so `delta_k <= delta_2k` holds mathematically; the pair value is
/// lifted to `delta_k` if eigenvalue rounding says otherwise.
pub fn exact_deltas(op: &StructuredOperator, k: usize, cap: u128) -> Result<ExactDeltas> {
    let delta_k = exact_model_rip_delta(op, k, RipOrder::Single, cap)?;
    let delta_2k = exact_model_rip_delta(op, k, RipOrder::Pair, cap)?;
    assert!(
        delta_k <= delta_2k + 1e-12,
        "delta_k={delta_k} exceeds delta_2k={delta_2k}"
    );
    Ok(ExactDeltas {
        delta_k,
        delta_2k: delta_2k.max(delta_k),
    })
}
