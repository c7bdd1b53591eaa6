use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::filterbank::Dims;
use super::structured::StructuredOperator;
use crate::error::{Error, Result};

/// Mutual coherence of the rows of `W`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceValue {
    pub mu: f64,
}

const NORM_TOL: f64 = 1e-9;

/// `max_{r != s} |<W_r, W_s>|` over distinct rows.
///
/// Two rows only interact when their shifted filters overlap, so the
/// maximum is taken over filter pairs and the relative shifts `(dr, dc)`
/// with `|d * t| < len`; every other pair of rows is orthogonal.
pub fn coherence(op: &StructuredOperator) -> Result<CoherenceValue> {
    let bank = op.bank();
    let per_filter = op.row_count() / bank.num_filters();
    for i in 0..bank.num_filters() {
        let norm = bank.group_norm(i);
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized {
                row: i * per_filter,
                norm,
            });
        }
    }

    let l = bank.filter_len() as isize;
    let t = op.geometry().stride as isize;
    let n = op.shifts() as isize;
    let (f_h, max_dr) = match bank.dims() {
        Dims::One => (1, 0),
        Dims::Two => (l, n - 1),
    };
    let max_dc = n - 1;
    // Relative shifts with nonempty overlap, in filter-index units.
    let mut offsets = Vec::new();
    for dr in -max_dr..=max_dr {
        for dc in -max_dc..=max_dc {
            if (dr * t).abs() < f_h && (dc * t).abs() < l {
                offsets.push((dr * t, dc * t));
            }
        }
    }
    let k = bank.num_filters();
    let m_count = bank.num_channels();

    // For a fixed offset, <W_(i,j), W_(i',j-d)> = sum_p <tap_i(p), tap_i'(p - d)>,
    // so all filter pairs at once are one product L R^T, with L and R
    // stacking the overlapping taps of every filter.
    let mu = offsets
        .par_iter()
        .map(|&(dr, dc)| {
            let mut taps = Vec::new();
            for r in dr.max(0)..(f_h + dr).min(f_h) {
                for c in dc.max(0)..(l + dc).min(l) {
                    taps.push(((r * l + c) as usize, ((r - dr) * l + c - dc) as usize));
                }
            }
            let width = taps.len() * m_count;
            let mut lhs = DMatrix::zeros(k, width);
            let mut rhs = DMatrix::zeros(k, width);
            for i in 0..k {
                for (slot, &(p, q)) in taps.iter().enumerate() {
                    let (a, b) = (op.tap(i, p), op.tap(i, q));
                    for m in 0..m_count {
                        lhs[(i, slot * m_count + m)] = a[m];
                        rhs[(i, slot * m_count + m)] = b[m];
                    }
                }
            }
            let gram = &lhs * rhs.transpose();
            let mut best = 0.0f64;
            for i in 0..k {
                for j in 0..k {
                    // the zero offset on the diagonal is a row with itself
                    if i == j && (dr, dc) == (0, 0) {
                        continue;
                    }
                    best = best.max(gram[(i, j)].abs());
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max);
    Ok(CoherenceValue { mu })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{
        build_operator, new_random_filterbank, normalize_rows, FilterBank, InputGeometry,
    };

    fn dense_coherence(op: &StructuredOperator) -> f64 {
        let w = op.materialize_dense();
        let mut mu = 0.0f64;
        for r in 0..w.nrows() {
            for s in r + 1..w.nrows() {
                mu = mu.max(w.row(r).dot(&w.row(s)).abs());
            }
        }
        mu
    }

    #[test]
    fn identity_has_zero_coherence() {
        let bank = FilterBank::new(1, 1, 1, Dims::One, vec![1.0]).unwrap();
        let op = build_operator(bank, InputGeometry::new(Dims::One, 6, 1).unwrap()).unwrap();
        assert_eq!(coherence(&op).unwrap().mu, 0.0);
    }

    #[test]
    fn unnormalized_is_rejected() {
        let bank = new_random_filterbank(2, 2, 3, Dims::One, 1).unwrap();
        let op = build_operator(bank, InputGeometry::new(Dims::One, 5, 1).unwrap()).unwrap();
        assert!(matches!(coherence(&op), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn matches_dense_pairwise_scan() {
        let cases = [
            (Dims::One, 3, 2, 3, 7, 1),
            (Dims::One, 2, 1, 4, 10, 2),
            (Dims::One, 4, 3, 2, 5, 3),
            (Dims::Two, 2, 2, 3, 5, 1),
            (Dims::Two, 3, 1, 2, 6, 2),
            (Dims::Two, 2, 2, 3, 7, 2),
        ];
        for (seed, &(dims, k, m, l, d, t)) in cases.iter().enumerate() {
            let bank = normalize_rows(&new_random_filterbank(k, m, l, dims, seed as u64).unwrap()).unwrap();
            let op = build_operator(bank, InputGeometry::new(dims, d, t).unwrap()).unwrap();
            let fast = coherence(&op).unwrap().mu;
            let slow = dense_coherence(&op);
            assert!((fast - slow).abs() < 1e-12, "{dims:?} {k} {m} {l} {d} {t}: {fast} vs {slow}");
        }
    }

    #[test]
    fn invariant_under_filter_permutation() {
        let bank = normalize_rows(&new_random_filterbank(5, 2, 3, Dims::Two, 4).unwrap()).unwrap();
        let geom = InputGeometry::new(Dims::Two, 6, 1).unwrap();
        let mu = coherence(&build_operator(bank.clone(), geom).unwrap()).unwrap().mu;
        let permuted = bank.permuted(&[3, 0, 4, 2, 1]).unwrap();
        let mu_p = coherence(&build_operator(permuted, geom).unwrap()).unwrap().mu;
        assert_eq!(mu, mu_p);
    }
}
