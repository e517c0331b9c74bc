use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ActionAngleError {
    #[error("action variable iota[{index}] = {value} is negative")]
    NegativeAction { index: usize, value: f64 },
    #[error("frequency lambda[{index}] = {value} must be positive")]
    NonPositiveFrequency { index: usize, value: f64 },
    #[error("expected {expected} entries, got {got}")]
    Length { expected: usize, got: usize },
}

/// Phase point `(x, ξ)` with `λ_j x_j = √(2λ_j ι_j) cosh φ_j` and
/// `ξ_j = √(2λ_j ι_j) sinh φ_j`.
///
/// The returned vector is laid out as `[x_1..x_n, ξ_1..ξ_n]`. The map has unit
/// Jacobian, `dx_j ∧ dξ_j = dι_j ∧ dφ_j`, and the quadratic form
/// `ξ_j² − λ_j² x_j²` equals `−2λ_j ι_j` on its image.
pub fn hyperbolic_action_angle(
    lambda: &[f64],
    iota: &[f64],
    phi: &[f64],
) -> Result<Vec<f64>, ActionAngleError> {
    let n = lambda.len();
    for len in [iota.len(), phi.len()] {
        if len != n {
            return Err(ActionAngleError::Length { expected: n, got: len });
        }
    }
    let mut out = vec![0.0; 2 * n];
    for j in 0..n {
        let (l, i) = (lambda[j], iota[j]);
        if !(l > 0.0) {
            return Err(ActionAngleError::NonPositiveFrequency { index: j, value: l });
        }
        if i < 0.0 {
            return Err(ActionAngleError::NegativeAction { index: j, value: i });
        }
        let r = (2.0 * l * i).sqrt();
        out[j] = r * phi[j].cosh() / l;
        out[n + j] = r * phi[j].sinh();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_point() {
        assert_eq!(hyperbolic_action_angle(&[1.0], &[0.5], &[0.0]).unwrap(), vec![1.0, 0.0]);
    }

    #[test]
    fn log_two_angle() {
        let p = hyperbolic_action_angle(&[1.0], &[0.5], &[2f64.ln()]).unwrap();
        assert!((p[0] - 1.25).abs() < 1e-15);
        assert!((p[1] - 0.75).abs() < 1e-15);
        assert!((p[1] * p[1] - p[0] * p[0] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn unit_jacobian() {
        let lam = 1.7;
        let h = 1e-6;
        for &i in &[0.1, 0.5, 2.0] {
            for &f in &[-1.0, 0.0, 0.3, 1.2] {
                let at = |i: f64, f: f64| hyperbolic_action_angle(&[lam], &[i], &[f]).unwrap();
                let (a, b) = (at(i + h, f), at(i - h, f));
                let (c, d) = (at(i, f + h), at(i, f - h));
                let dx_di = (a[0] - b[0]) / (2.0 * h);
                let dxi_di = (a[1] - b[1]) / (2.0 * h);
                let dx_df = (c[0] - d[0]) / (2.0 * h);
                let dxi_df = (c[1] - d[1]) / (2.0 * h);
                let det = dx_di * dxi_df - dx_df * dxi_di;
                assert!((det - 1.0).abs() < 1e-8, "det {det} at ({i}, {f})");
            }
        }
    }

    #[test]
    fn negative_action_rejected() {
        assert_eq!(
            hyperbolic_action_angle(&[1.0, 2.0], &[0.1, -0.2], &[0.0, 0.0]),
            Err(ActionAngleError::NegativeAction { index: 1, value: -0.2 })
        );
    }
}
