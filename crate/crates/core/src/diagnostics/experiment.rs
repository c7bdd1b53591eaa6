use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bounds::theorem2_bound;
use super::histogram::Histogram;
use super::rip::{draw_trials, exact_deltas, ExactDeltas};
use crate::error::{Error, Result};
use crate::model_sparse::{sample_model_sparse, PoolingGeometry, Upsampling};
use crate::operator::StructuredOperator;
use crate::recovery::{feedforward_reconstruct, model_iht, IhtConfig, IhtResult};
use crate::{norm2, rng};

/// Per-trial series of a reconstruction experiment on `x = W^T z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionExperiment {
    /// `||W^T z|| / ||z||`
    pub rip_ratios: Vec<f64>,
    /// `||W_S W_S^T z|| / ||z||` with `S` the support of `z`: the code
    /// re-encoded from `x`, read on the true support.
    pub wwt_ratios: Vec<f64>,
    /// `||W W^T z|| / ||z||` over all rows. Off-support leakage makes this
    /// grow with `Kn / MD`.
    pub wwt_full_ratios: Vec<f64>,
    /// `||x_hat - x|| / ||x||` with `x_hat = W^T M(W x, k)`
    pub errors: Vec<f64>,
}

impl ReconstructionExperiment {
    pub fn error_histogram(&self, bins: usize) -> Result<Histogram> {
        Histogram::new(&self.errors, bins, 0.0, 1.0)
    }
}

/// Trial `i` draws `z` in `M_k` from stream `(seed, i)`, the same draw as
/// [`empirical_rip`](super::empirical_rip) with equal arguments.
pub fn reconstruction_experiment(
    op: &StructuredOperator,
    k: usize,
    geom: &PoolingGeometry,
    upsampling: Upsampling,
    trials: usize,
    seed: u64,
) -> Result<ReconstructionExperiment> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let layout = op.block_layout();
    let (signals, _) = draw_trials(trials, seed, |r| sample_model_sparse(layout, k, r))?;
    let rows: Vec<(f64, f64, f64, f64)> = signals
        .par_iter()
        .map(|z| {
            let zn = norm2(&z.coeffs);
            let x = op.apply_adjoint(&z.coeffs)?;
            let xn = norm2(&x);
            let h = op.apply_forward(&x)?;
            let wwt_full = norm2(&h);
            let wwt = z
                .flat_support(layout)
                .iter()
                .map(|&i| h[i] * h[i])
                .sum::<f64>()
                .sqrt();
            let (x_hat, _) = feedforward_reconstruct(op, &x, k, geom, upsampling)?;
            let err = x.iter().zip(&x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            Ok((xn / zn, wwt / zn, wwt_full / zn, err / xn))
        })
        .collect::<Result<_>>()?;
    Ok(ReconstructionExperiment {
        rip_ratios: rows.iter().map(|r| r.0).collect(),
        wwt_ratios: rows.iter().map(|r| r.1).collect(),
        wwt_full_ratios: rows.iter().map(|r| r.2).collect(),
        errors: rows.iter().map(|r| r.3).collect(),
    })
}

/// Model IHT on `x = W^T z` for each trial, with the draws of
/// [`reconstruction_experiment`] at `k = cfg.k`.
pub fn iht_experiment(
    op: &StructuredOperator,
    cfg: &IhtConfig,
    trials: usize,
    seed: u64,
) -> Result<Vec<IhtResult>> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be >= 1".into()));
    }
    let layout = op.block_layout();
    let (signals, _) = draw_trials(trials, seed, |r| sample_model_sparse(layout, cfg.k, r))?;
    signals
        .par_iter()
        .map(|z| model_iht(op, &op.apply_adjoint(&z.coeffs)?, cfg))
        .collect()
}

/// Reconstruction bound evaluated with exact constants against every
/// `M_k` support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta_k: f64,
    pub delta_2k: f64,
    pub bound: f64,
    pub relative_errors: Vec<f64>,
    pub violations: usize,
}

/// For every support of exactly `k` blocks (one position each) and
/// `draws` value draws per support, checks
/// `||x_hat - x|| <= bound * ||x||` for `x = W^T z` and the one-pass
/// reconstruction with true switches.
pub fn theorem2_compliance(
    op: &StructuredOperator,
    k: usize,
    draws: usize,
    seed: u64,
    cap: u128,
) -> Result<BoundReport> {
    let ExactDeltas { delta_k, delta_2k } = exact_deltas(op, k, cap)?;
    let bound = theorem2_bound(delta_k, delta_2k)?;
    let layout = op.block_layout();
    let geom = PoolingGeometry::full_block(layout);
    let bl = layout.block_len();
    let kk = k.min(layout.blocks);

    let mut supports = Vec::new();
    let mut blocks: Vec<usize> = (0..kk).collect();
    loop {
        let mut pos = vec![0usize; kk];
        loop {
            supports.push(blocks.iter().zip(&pos).map(|(b, p)| b * bl + p).collect::<Vec<_>>());
            // odometer over positions
            let mut i = 0;
            while i < kk {
                pos[i] += 1;
                if pos[i] < bl {
                    break;
                }
                pos[i] = 0;
                i += 1;
            }
            if i == kk {
                break;
            }
        }
        if !next_combination(&mut blocks, layout.blocks) {
            break;
        }
    }

    let mut relative_errors = Vec::with_capacity(supports.len() * draws);
    let mut violations = 0;
    for (si, support) in supports.iter().enumerate() {
        let mut r = rng::stream(seed, si as u64);
        for _ in 0..draws {
            let mut z = vec![0.0; layout.len()];
            for &i in support {
                z[i] = loop {
                    let v: f64 = r.random_range(-1.0..=1.0);
                    if v != 0.0 {
                        break v;
                    }
                };
            }
            let x = op.apply_adjoint(&z)?;
            let (x_hat, _) = feedforward_reconstruct(op, &x, k, &geom, Upsampling::Switches)?;
            let err = x.iter().zip(&x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            let xn = norm2(&x);
            if err > bound * xn * (1.0 + 1e-12) + 1e-14 {
                violations += 1;
            }
            relative_errors.push(if xn > 0.0 { err / xn } else { 0.0 });
        }
    }
    Ok(BoundReport {
        delta_k,
        delta_2k,
        bound,
        relative_errors,
        violations,
    })
}

/// Advances `c` (strictly increasing, values `< n`) to the next
/// combination in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
