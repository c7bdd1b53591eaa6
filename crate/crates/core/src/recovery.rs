//! Reconstruction algorithms: the one-pass feedforward decoder, model-based
//! IHT, ISTA for the l1-regularised least-squares problem, and sparse hidden
//! activation recovery (ISTA, pool to a support, ISTA on that support).

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model_sparse::{
    max_pool, structured_approx, upsample, ModelSparseSignal, PoolingGeometry, Upsampling,
};
use crate::operator::StructuredOperator;
use crate::{norm2, rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IhtConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once `||x - W^T z|| / ||x|| <= residual_tol`.
    pub residual_tol: f64,
    pub pooling: PoolingGeometry,
    pub upsampling: Upsampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls to this value.
    pub objective_tol: f64,
}

impl LassoConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.max_iters == 0 || !(self.objective_tol >= 0.0) {
            return Err(Error::InvalidParameter(
                "lasso max_iters must be >= 1 and objective_tol >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// `x_hat = W^T M(W x, k)`.
pub fn feedforward_reconstruct(
    op: &StructuredOperator,
    x: &[f64],
    k: usize,
    geom: &PoolingGeometry,
    upsampling: Upsampling,
) -> Result<(Vec<f64>, ModelSparseSignal)> {
    let h = op.apply_forward(x)?;
    let (z_hat, _) = structured_approx(&h, k, geom, upsampling)?;
    let x_hat = op.apply_adjoint(&z_hat.coeffs)?;
    Ok((x_hat, z_hat))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IhtResult {
    pub z_hat: ModelSparseSignal,
    pub iterations: usize,
    /// Relative residual `||x - W^T z_i|| / ||x||` after each iteration.
    pub residual_history: Vec<f64>,
}

fn relative(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Model-based IHT with sensing matrix `W^T` and unit step:
/// `b = z + W d`, `z = M(b, k)`, `d = x - W^T z`.
pub fn model_iht(op: &StructuredOperator, x: &[f64], cfg: &IhtConfig) -> Result<IhtResult> {
    if cfg.max_iters == 0 {
        return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
    }
    let x_norm = norm2(x);
    let mut z = vec![0.0; op.row_count()];
    let mut d = x.to_vec();
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut z_hat = ModelSparseSignal::zeros(cfg.pooling.layout(), cfg.k);
    for _ in 0..cfg.max_iters {
        let grad = op.apply_forward(&d)?;
        let b: Vec<f64> = z.iter().zip(&grad).map(|(zi, gi)| zi + gi).collect();
        let (next, _) = structured_approx(&b, cfg.k, &cfg.pooling, cfg.upsampling)?;
        let recon = op.apply_adjoint(&next.coeffs)?;
        d = x.iter().zip(&recon).map(|(xi, ri)| xi - ri).collect();
        let res = relative(norm2(&d), x_norm);
        history.push(res);
        z.clone_from(&next.coeffs);
        z_hat = next;
        if res <= cfg.residual_tol {
            break;
        }
    }
    Ok(IhtResult {
        z_hat,
        iterations: history.len(),
        residual_history: history,
    })
}

/// Largest eigenvalue of `W W^T` (equivalently `W^T W`) by 50 steps of
/// power iteration from a fixed pseudo-random start, inflated by 1%.
pub fn lipschitz_bound(op: &StructuredOperator) -> Result<f64> {
    let mut r = rng::stream(0, rng::SOLVER_STREAM);
    let mut v: Vec<f64> = (0..op.col_count())
        .map(|_| StandardNormal.sample(&mut r))
        .collect();
    let mut est = 0.0;
    for _ in 0..50 {
        let nv = norm2(&v);
        if nv == 0.0 {
            return Ok(f64::MIN_POSITIVE);
        }
        v.iter_mut().for_each(|e| *e /= nv);
        let wv = op.apply_forward(&v)?;
        est = crate::dot(&wv, &wv);
        v = op.apply_adjoint(&wv)?;
    }
    Ok((est * 1.01).max(f64::MIN_POSITIVE))
}

pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// `||x - W^T z||^2 + lambda ||z||_1`.
pub fn lasso_objective(op: &StructuredOperator, x: &[f64], z: &[f64], lambda: f64) -> Result<f64> {
    let r = op.apply_adjoint(z)?;
    let fit: f64 = x.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(fit + lambda * z.iter().map(|v| v.abs()).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoSolution {
    pub z: Vec<f64>,
    /// Objective at the start and after every iteration.
    pub objective_history: Vec<f64>,
    pub iterations: usize,
    pub lipschitz: f64,
}

/// Proximal gradient for `min ||x - W^T z||^2 + lambda ||z||_1`:
/// `z <- soft(z - W(W^T z - x)/L, lambda/(2L))`, with `z_i` pinned to zero
/// wherever `support_mask` is false.
///
/// The objective is non-increasing. If rounding makes a step increase it,
/// `L` is doubled and the step retried.
pub fn ista_l1(
    op: &StructuredOperator,
    x: &[f64],
    cfg: &LassoConfig,
    support_mask: Option<&[bool]>,
) -> Result<LassoSolution> {
    cfg.validate()?;
    if x.len() != op.col_count() {
        return Err(Error::DimensionMismatch {
            expected: op.col_count(),
            actual: x.len(),
        });
    }
    if let Some(mask) = support_mask {
        if mask.len() != op.row_count() {
            return Err(Error::DimensionMismatch {
                expected: op.row_count(),
                actual: mask.len(),
            });
        }
    }
    let mut lip = lipschitz_bound(op)?;
    let mut z = vec![0.0; op.row_count()];
    let mut resid: Vec<f64> = x.iter().map(|v| -v).collect(); // W^T z - x
    let mut obj = lasso_objective(op, x, &z, cfg.lambda)?;
    let mut history = vec![obj];
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let grad = op.apply_forward(&resid)?;
        let (next, next_resid, next_obj) = loop {
            let tau = cfg.lambda / (2.0 * lip);
            let next: Vec<f64> = z
                .iter()
                .zip(&grad)
                .enumerate()
                .map(|(i, (zi, gi))| match support_mask {
                    Some(mask) if !mask[i] => 0.0,
                    _ => soft_threshold(zi - gi / lip, tau),
                })
                .collect();
            let recon = op.apply_adjoint(&next)?;
            let next_resid: Vec<f64> = recon.iter().zip(x).map(|(r, xi)| r - xi).collect();
            let fit: f64 = next_resid.iter().map(|v| v * v).sum();
            let next_obj = fit + cfg.lambda * next.iter().map(|v| v.abs()).sum::<f64>();
            if !next_obj.is_finite() {
                return Err(Error::NonFiniteObjective { iteration: iterations });
            }
            if next_obj <= obj || lip > 1e300 {
                break (next, next_resid, next_obj);
            }
            lip *= 2.0;
        };
        let decrease = obj - next_obj;
        z = next;
        resid = next_resid;
        obj = next_obj;
        history.push(obj);
        if decrease <= cfg.objective_tol * history[history.len() - 2].abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    Ok(LassoSolution {
        z,
        objective_history: history,
        iterations,
        lipschitz: lip,
    })
}

/// Sparse hidden activation recovery: unconstrained ISTA, max pooling with
/// true switches to fix one support position per region, then ISTA
/// restricted to that support. Regions that are entirely zero after the
/// first pass stay empty.
pub fn recover_activation(
    op: &StructuredOperator,
    x: &[f64],
    cfg: &LassoConfig,
    geom: &PoolingGeometry,
) -> Result<ModelSparseSignal> {
    if geom.signal_len() != op.row_count() {
        return Err(Error::DimensionMismatch {
            expected: op.row_count(),
            actual: geom.signal_len(),
        });
    }
    let init = ista_l1(op, x, cfg, None)?;
    let (pooled, switches) = max_pool(&init.z, geom)?;
    let z_model = upsample(&pooled, Some(&switches), Upsampling::Switches, geom)?;
    let mask: Vec<bool> = z_model.iter().map(|v| *v != 0.0).collect();
    let refined = ista_l1(op, x, cfg, Some(&mask))?;
    let k = geom.region_count();
    Ok(ModelSparseSignal::from_coeffs(refined.z, geom.layout(), k))
}
