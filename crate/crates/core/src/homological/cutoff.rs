use super::HomologicalError;
use crate::smooth::Smoothstep;
use crate::symplectic::AnisotropicNorm;

/// Degree-0 homogeneous partition of unity `χ^out + χ^in = 1` away from the
/// origin.
///
/// With `r = ‖ξ‖₀/‖x‖₀`, `χ^out = 1 − S(log₂ r + ½)`, so the transition lives
/// in `1/√2 ≤ r ≤ √2`, strictly inside the overlap of the two cones. Outside it
/// the values are exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffPair {
    step: Smoothstep,
    b0: AnisotropicNorm,
}

pub fn make_partition(order: usize, b0: AnisotropicNorm) -> Result<CutoffPair, HomologicalError> {
    if order == 0 {
        return Err(HomologicalError::InvalidProfile);
    }
    Ok(CutoffPair {
        step: Smoothstep::new(order),
        b0,
    })
}

impl CutoffPair {
    pub fn order(&self) -> usize {
        self.step.order()
    }

    pub fn b0(&self) -> &AnisotropicNorm {
        &self.b0
    }

    fn n(&self) -> usize {
        self.b0.dim()
    }

    /// `log₂ r + ½`; `None` at the origin.
    fn coordinate(&self, y: &[f64]) -> Option<f64> {
        let n = self.n();
        let qx = self.b0.quad(&y[..n]).max(0.0);
        let qxi = self.b0.quad(&y[n..]).max(0.0);
        if qx == 0.0 && qxi == 0.0 {
            return None;
        }
        // ±∞ on the axes is clamped by the smoothstep
        Some(0.5 * (qxi / qx).log2() + 0.5)
    }

    /// NaN at the origin.
    pub fn chi_out(&self, y: &[f64]) -> f64 {
        match self.coordinate(y) {
            Some(u) => 1.0 - self.step.value(u),
            None => f64::NAN,
        }
    }

    pub fn chi_in(&self, y: &[f64]) -> f64 {
        1.0 - self.chi_out(y)
    }

    /// `∇χ^out`; zero off the transition zone, `None` at the origin.
    pub fn chi_out_gradient(&self, y: &[f64]) -> Option<Vec<f64>> {
        let n = self.n();
        let u = self.coordinate(y)?;
        let (_, ds, _) = self.step.eval(u);
        if ds == 0.0 {
            return Some(vec![0.0; 2 * n]);
        }
        let qx = self.b0.quad(&y[..n]);
        let qxi = self.b0.quad(&y[n..]);
        let bx = self.b0.apply(&y[..n]);
        let bxi = self.b0.apply(&y[n..]);
        let k = -ds / std::f64::consts::LN_2;
        let mut g = Vec::with_capacity(2 * n);
        g.extend(bx.iter().map(|v| -k * v / qx));
        g.extend(bxi.iter().map(|v| k * v / qxi));
        Some(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::fd_gradient;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair() -> CutoffPair {
        make_partition(3, AnisotropicNorm::scalar(2, 0.5)).unwrap()
    }

    #[test]
    fn plateaus() {
        let c = pair();
        assert_eq!(c.chi_out(&[1.0, 0.0, 3.0, 0.0]), 0.0);
        assert_eq!(c.chi_in(&[1.0, 0.0, 3.0, 0.0]), 1.0);
        assert_eq!(c.chi_out(&[0.2, 0.1, 0.0, 0.0]), 1.0);
        assert_eq!(c.chi_out(&[0.0, 0.0, 0.0, 0.1]), 0.0);
        assert!(c.chi_out(&[0.0; 4]).is_nan());
    }

    #[test]
    fn zero_order_rejected() {
        assert_eq!(
            make_partition(0, AnisotropicNorm::scalar(1, 1.0)),
            Err(HomologicalError::InvalidProfile)
        );
    }

    #[test]
    fn sum_is_one_and_supports_nest() {
        let c = pair();
        let spec_b0 = AnisotropicNorm::scalar(2, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (o, i) = (c.chi_out(&y), c.chi_in(&y));
            assert_eq!(o + i, 1.0);
            let nx = spec_b0.quad(&y[..2]).sqrt();
            let nxi = spec_b0.quad(&y[2..]).sqrt();
            if nxi >= 2.0 * nx {
                assert_eq!(o, 0.0);
            }
            if nx >= 2.0 * nxi {
                assert_eq!(i, 0.0);
            }
        }
    }

    #[test]
    fn homogeneous() {
        let c = pair();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v = c.chi_out(&y);
            // powers of two scale without rounding
            for s in [0.25, 2.0, 1024.0] {
                let z: Vec<f64> = y.iter().map(|a| a * s).collect();
                assert_eq!(c.chi_out(&z), v);
            }
            let z: Vec<f64> = y.iter().map(|a| a * 0.37).collect();
            assert!((c.chi_out(&z) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let c = pair();
        let y = [0.3, -0.1, 0.25, 0.12];
        let g = c.chi_out_gradient(&y).unwrap();
        assert!(g.iter().any(|v| v.abs() > 1e-3), "point must be in the transition");
        let fd = fd_gradient(&|z| c.chi_out(z), &y, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-7, "{a} vs {b}");
        }
        // degree-0 homogeneity: ∇χ · y = 0
        let radial: f64 = g.iter().zip(&y).map(|(a, b)| a * b).sum();
        assert!(radial.abs() < 1e-12);
    }
}
