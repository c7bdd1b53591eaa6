use super::structured::StructuredOperator;
use crate::error::Result;

/// Splits `h` into its positive and negative parts, `h = h_plus - h_minus`.
pub fn crelu_split(h: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let plus = h.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let minus = h.iter().map(|&v| if v < 0.0 { -v } else { 0.0 }).collect();
    (plus, minus)
}

/// One layer with the paired filter bank `[W; -W]` followed by ReLU, decoded
/// with `[W^T, -W^T]`: `W^T (ReLU(Wx) - ReLU(-Wx)) = W^T W x`.
pub fn crelu_reconstruct(op: &StructuredOperator, x: &[f64]) -> Result<Vec<f64>> {
    let h = op.apply_forward(x)?;
    let (plus, minus) = crelu_split(&h);
    let mut x_plus = op.apply_adjoint(&plus)?;
    let x_minus = op.apply_adjoint(&minus)?;
    x_plus.iter_mut().zip(&x_minus).for_each(|(p, m)| *p -= m);
    Ok(x_plus)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_example() {
        let (p, m) = crelu_split(&[1.0, -2.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        assert_eq!(m, vec![0.0, 2.0, 0.0]);
    }

    #[test]
    fn nonnegative_input() {
        let h = [0.0, 3.0, 1.5];
        let (p, m) = crelu_split(&h);
        assert_eq!(p, h.to_vec());
        assert!(m.iter().all(|&v| v == 0.0));
    }
}
