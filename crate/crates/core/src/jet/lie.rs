use super::{Coeff, Jet, JetError};

/// Poisson bracket `{f, g} = Σ_j ∂_{ξ_j} f ∂_{x_j} g − ∂_{x_j} f ∂_{ξ_j} g`.
///
/// With this sign `{p, g} = H_p g`, the derivative of `g` along the flow of
/// `p`. The result is truncated at `min(N_f, N_g)`.
pub fn poisson<C: Coeff>(f: &Jet<C>, g: &Jet<C>) -> Result<Jet<C>, JetError> {
    if f.n() != g.n() {
        return Err(JetError::DimensionMismatch {
            left: f.n(),
            right: g.n(),
        });
    }
    let n = f.n();
    let order = f.order().min(g.order());
    let mut out = Jet::zero(n, order);
    for j in 0..n {
        let dxi_f = f.derivative(n + j);
        let dx_g = g.derivative(j);
        let dx_f = f.derivative(j);
        let dxi_g = g.derivative(n + j);
        let plus = dxi_f.with_order(order).mul(&dx_g.with_order(order));
        let minus = dx_f.with_order(order).mul(&dxi_g.with_order(order));
        out = out.add(&plus).sub(&minus);
    }
    Ok(out)
}

/// Lie series `exp(ad_f) g = Σ_k ad_f^k g / k!`, i.e. `g ∘ exp(H_f)`.
///
/// `f` must vanish to order 3 so every bracket raises the minimal degree and
/// the series stops after at most `N` terms.
pub fn lie_transform<C: Coeff>(f: &Jet<C>, g: &Jet<C>) -> Result<Jet<C>, JetError> {
    if let Some(d) = f.min_degree() {
        if d < 3 {
            return Err(JetError::GeneratorTooLowDegree { degree: d });
        }
    }
    let mut sum = g.clone();
    let mut term = g.clone();
    let mut k = 1i64;
    loop {
        term = poisson(f, &term)?;
        if term.is_zero() {
            break;
        }
        term = term.scale(&(C::one() / C::from_i64(k)));
        sum = sum.add(&term);
        k += 1;
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::ratio;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(n: i64) -> Q {
        Q::from_i64(n)
    }

    #[test]
    fn canonical_pair() {
        let x: Jet<Q> = Jet::coordinate(1, 4, 0);
        let xi: Jet<Q> = Jet::coordinate(1, 4, 1);
        assert_eq!(poisson(&x, &xi).unwrap(), Jet::constant(1, 4, q(-1)));
        assert_eq!(poisson(&xi, &x).unwrap(), Jet::constant(1, 4, q(1)));
    }

    #[test]
    fn bracket_with_saddle_is_eigen_operator() {
        let lam = ratio(3, 2);
        let p2: Jet<Q> = Jet::monomial(1, 9, &[1], &[1], lam.clone());
        for (a, b) in [(3u16, 0u16), (2, 4), (1, 1), (0, 5)] {
            let m: Jet<Q> = Jet::monomial(1, 9, &[a], &[b], q(1));
            let expected = m.scale(&(lam.clone() * q(a as i64 - b as i64)));
            assert_eq!(poisson(&p2, &m).unwrap(), expected);
        }
    }

    #[test]
    fn saddle_bracket_with_x_is_x() {
        let p: Jet<Q> = Jet::monomial(1, 4, &[1], &[1], q(1));
        let x: Jet<Q> = Jet::coordinate(1, 4, 0);
        assert_eq!(poisson(&p, &x).unwrap(), x);
    }

    #[test]
    fn low_degree_generator_rejected() {
        let f: Jet<Q> = Jet::monomial(1, 4, &[1], &[1], q(1));
        let g: Jet<Q> = Jet::coordinate(1, 4, 0);
        assert_eq!(
            lie_transform(&f, &g),
            Err(JetError::GeneratorTooLowDegree { degree: 2 })
        );
    }

    #[test]
    fn constants_are_invariant() {
        let f: Jet<Q> = Jet::monomial(1, 6, &[2], &[1], ratio(1, 10));
        let c: Jet<Q> = Jet::constant(1, 6, q(7));
        assert_eq!(lie_transform(&f, &c).unwrap(), c);
    }

    #[test]
    fn one_dof_cubic_generator() {
        // {x²ξ, xξ} = x²ξ − 2x²ξ = −x²ξ
        let eps = ratio(1, 10);
        let f: Jet<Q> = Jet::monomial(1, 3, &[2], &[1], eps.clone());
        let g: Jet<Q> = Jet::monomial(1, 3, &[1], &[1], q(1));
        let h = lie_transform(&f, &g).unwrap();
        assert_eq!(h.coeff_of(&[1], &[1]), q(1));
        assert_eq!(h.coeff_of(&[2], &[1]), -eps);
        assert_eq!(h.len(), 2);
    }

    #[test]
    fn dimension_mismatch() {
        let a: Jet<f64> = Jet::coordinate(1, 3, 0);
        let b: Jet<f64> = Jet::coordinate(2, 3, 0);
        assert!(matches!(
            poisson(&a, &b),
            Err(JetError::DimensionMismatch { left: 1, right: 2 })
        ));
    }
}
