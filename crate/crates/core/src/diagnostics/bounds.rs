use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value of `C` when the caller has no better estimate. The inequality's
/// constant is not known, so the predicate is a reporting aid only.
pub const DEFAULT_C: f64 = 1.0;

/// Inputs of the sample-complexity inequality
/// `M len^2 / D >= C / delta^2 * (k (ln K + ln n) - ln eps)`.
/// Logarithms are natural; a different base only rescales `C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexity {
    pub channels: usize,
    pub filter_len: usize,
    pub input_len: usize,
    pub k: usize,
    pub filters: usize,
    pub shifts: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Check {
    pub holds: bool,
    pub lhs: f64,
    pub rhs: f64,
}

pub fn theorem1_predicate(p: &SampleComplexity) -> Result<Theorem1Check> {
    let sizes = [p.channels, p.filter_len, p.input_len, p.k, p.filters, p.shifts];
    if sizes.contains(&0)
        || !(p.delta > 0.0 && p.delta < 1.0)
        || !(p.epsilon > 0.0 && p.epsilon < 1.0)
        || !(p.c > 0.0)
    {
        return Err(Error::InvalidParameter(format!(
            "sample-complexity parameters out of range: {p:?}"
        )));
    }
    let lhs = (p.channels * p.filter_len * p.filter_len) as f64 / p.input_len as f64;
    let log_count = p.k as f64 * ((p.filters as f64).ln() + (p.shifts as f64).ln());
    let rhs = p.c / (p.delta * p.delta) * (log_count - p.epsilon.ln());
    Ok(Theorem1Check {
        holds: lhs >= rhs,
        lhs,
        rhs,
    })
}

/// `5 d2 / (1 - d1) * sqrt((1 + d2) / (1 - d2))` for `0 <= d1 <= d2 < 1`.
pub fn theorem2_bound(delta_k: f64, delta_2k: f64) -> Result<f64> {
    if !(0.0 <= delta_k && delta_k <= delta_2k && delta_2k < 1.0) {
        return Err(Error::DeltaOutOfRange { delta_k, delta_2k });
    }
    Ok(5.0 * delta_2k / (1.0 - delta_k) * ((1.0 + delta_2k) / (1.0 - delta_2k)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_setup() -> SampleComplexity {
        SampleComplexity {
            channels: 32,
            filter_len: 5,
            input_len: 32,
            k: 10,
            filters: 96,
            shifts: 28,
            delta: 0.5,
            epsilon: 0.1,
            c: 0.1,
        }
    }

    #[test]
    fn paper_setup_fails_predicate() {
        let r = theorem1_predicate(&paper_setup()).unwrap();
        assert_eq!(r.lhs, 25.0);
        let rhs = 0.4 * (10.0 * (96f64.ln() + 28f64.ln()) - 0.1f64.ln());
        assert!((r.rhs - rhs).abs() < 1e-12);
        assert!((r.rhs - 32.5).abs() < 0.05);
        assert!(!r.holds);
    }

    #[test]
    fn doubling_channels_flips() {
        let mut p = paper_setup();
        p.channels = 64;
        let r = theorem1_predicate(&p).unwrap();
        assert_eq!(r.lhs, 50.0);
        assert!(r.holds);
    }

    #[test]
    fn large_delta_small_c_holds() {
        let mut p = paper_setup();
        p.delta = 0.999;
        p.c = 0.01;
        assert!(theorem1_predicate(&p).unwrap().holds);
    }

    #[test]
    fn predicate_rejects_bad_params() {
        let mut p = paper_setup();
        p.epsilon = 1.0;
        assert!(theorem1_predicate(&p).is_err());
    }

    #[test]
    fn bound_values() {
        assert_eq!(theorem2_bound(0.0, 0.0).unwrap(), 0.0);
        let b = theorem2_bound(0.1, 0.2).unwrap();
        assert!((b - 1.5f64.sqrt() / 0.9).abs() < 1e-12);
        assert!((b - 1.3608).abs() < 1e-4);
        assert!(theorem2_bound(0.5, 0.99).unwrap().is_finite());
    }

    #[test]
    fn bound_domain() {
        assert!(matches!(theorem2_bound(0.3, 0.2), Err(Error::DeltaOutOfRange { .. })));
        assert!(theorem2_bound(0.1, 1.0).is_err());
        assert!(theorem2_bound(-0.1, 0.2).is_err());
        assert!(theorem2_bound(f64::NAN, 0.2).is_err());
    }

    #[test]
    fn bound_is_monotone() {
        let grid: Vec<f64> = (0..20).map(|i| i as f64 * 0.045).collect();
        for (a, &d1) in grid.iter().enumerate() {
            for &d2 in &grid[a..] {
                let b = theorem2_bound(d1, d2).unwrap();
                if let Some(&d2n) = grid.iter().find(|&&g| g > d2) {
                    assert!(theorem2_bound(d1, d2n).unwrap() >= b);
                }
                if let Some(&d1n) = grid.iter().find(|&&g| g > d1 && g <= d2) {
                    assert!(theorem2_bound(d1n, d2).unwrap() >= b);
                }
            }
        }
    }
}
