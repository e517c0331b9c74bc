use std::collections::BTreeMap;

use super::{lie_transform, Coeff, Jet, JetError, Monomial};

/// Polynomial `q(ι)` in the action variables `ι_j = x_j ξ_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionPolynomial<C: Coeff> {
    n: usize,
    terms: BTreeMap<Vec<u16>, C>,
}

impl<C: Coeff> ActionPolynomial<C> {
    pub fn zero(n: usize) -> Self {
        ActionPolynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<u16>, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, iota: &[u16]) -> C {
        self.terms.get(iota).cloned().unwrap_or_else(C::zero)
    }

    pub fn insert(&mut self, iota: Vec<u16>, c: C) {
        assert_eq!(iota.len(), self.n);
        if c.is_zero() {
            self.terms.remove(&iota);
        } else {
            self.terms.insert(iota, c);
        }
    }

    /// Highest total degree in `ι`.
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|m| m.iter().map(|&e| e as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn eval(&self, iota: &[C]) -> C {
        let mut acc = C::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, &e) in iota.iter().zip(m) {
                for _ in 0..e {
                    t = t * v.clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    /// Expands back to phase variables, `ι_j ↦ x_j ξ_j`.
    pub fn to_jet(&self, order: usize) -> Jet<C> {
        let mut j = Jet::zero(self.n, order);
        for (m, c) in &self.terms {
            j.add_term(Monomial::from_parts(m, m), c.clone());
        }
        j
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> ActionPolynomial<D> {
        let mut out = ActionPolynomial::zero(self.n);
        for (m, c) in &self.terms {
            out.insert(m.clone(), f(c));
        }
        out
    }
}

/// Reads a jet made only of `∏ (x_j ξ_j)^{m_j}` monomials as a polynomial in `ι`.
pub fn action_form<C: Coeff>(q: &Jet<C>) -> Result<ActionPolynomial<C>, JetError> {
    let offenders: Vec<String> = q
        .terms()
        .filter(|(m, _)| !m.is_action())
        .map(|(m, _)| m.to_string())
        .collect();
    if !offenders.is_empty() {
        return Err(JetError::NonActionMonomial { offenders });
    }
    let mut out = ActionPolynomial::zero(q.n());
    for (m, c) in q.terms() {
        out.insert(m.alpha().to_vec(), c.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct BirkhoffOptions {
    /// `|⟨α−β, λ⟩|` below `resonance_tol · max|λ|` is an obstruction.
    pub resonance_tol: f64,
    /// Off-form quadratic coefficients above `williamson_tol · max|λ|` are rejected;
    /// smaller ones are treated as round-off and dropped.
    pub williamson_tol: f64,
}

impl Default for BirkhoffOptions {
    fn default() -> Self {
        BirkhoffOptions {
            resonance_tol: 1e-10,
            williamson_tol: 1e-9,
        }
    }
}

/// Outcome of order-by-order normalization.
#[derive(Debug, Clone)]
pub struct NormalFormResult<C: Coeff> {
    pub order: usize,
    /// Frequencies read off `p₂ = Σ λ_j x_j ξ_j`.
    pub lambda: Vec<C>,
    /// `f_3, …, f_N`; `f_k` is homogeneous of degree `k`.
    pub generators: Vec<Jet<C>>,
    pub q0: ActionPolynomial<C>,
    /// `p ∘ κ` through degree `N`.
    pub transformed: Jet<C>,
    /// Largest non-action coefficient left in `transformed` (0 in exact arithmetic).
    pub max_non_action: f64,
    /// Lowest degree at which uncancelled terms may remain.
    pub residual_degree: usize,
}

impl<C: Coeff> NormalFormResult<C> {
    /// Re-applies the generators to `p` from scratch.
    pub fn apply(&self, p: &Jet<C>) -> Result<Jet<C>, JetError> {
        let mut h = p.with_order(self.order);
        for f in &self.generators {
            if !f.is_zero() {
                h = lie_transform(f, &h)?;
            }
        }
        Ok(h)
    }
}

/// Frequencies of a quadratic part already in the diagonal form `Σ λ_j x_j ξ_j`.
pub(crate) fn williamson_frequencies<C: Coeff>(
    p: &Jet<C>,
    tol: f64,
) -> Result<(Vec<C>, Jet<C>), JetError> {
    let n = p.n();
    let p2 = p.homogeneous(2);
    let mut lambda = vec![C::zero(); n];
    for j in 0..n {
        let mut e = vec![0u16; n];
        e[j] = 1;
        lambda[j] = p2.coeff_of(&e, &e);
    }
    let scale = lambda.iter().map(Coeff::magnitude).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(JetError::NotWilliamson {
            detail: "quadratic part has no x_j*xi_j terms".into(),
        });
    }
    if let Some((m, c)) = p
        .terms()
        .find(|(m, c)| m.degree() == 1 && c.magnitude() > tol * scale)
    {
        return Err(JetError::NotWilliamson {
            detail: format!("linear term {c:?}*{m}: origin is not a critical point"),
        });
    }
    for (m, c) in p2.terms() {
        let diagonal = m.is_action();
        if !diagonal && c.magnitude() > tol * scale {
            return Err(JetError::NotWilliamson {
                detail: format!("off-form quadratic term {c:?}*{m}"),
            });
        }
    }
    if let Some(j) = lambda.iter().position(|l| l.magnitude() <= tol * scale) {
        return Err(JetError::NotWilliamson {
            detail: format!("missing frequency for x{0}*xi{0}", j + 1),
        });
    }
    // drop round-off in degrees 1 and 2 outside the diagonal
    let cleaned = p.filter(|m| {
        let d = m.degree();
        d >= 3 || d == 0 || (d == 2 && m.is_action())
    });
    Ok((lambda, cleaned))
}

/// Birkhoff normalization with default tolerances.
pub fn birkhoff_normalize<C: Coeff>(
    p: &Jet<C>,
    order: usize,
) -> Result<NormalFormResult<C>, JetError> {
    birkhoff_normalize_with(p, order, BirkhoffOptions::default())
}

/// Removes every non-action monomial of degree `3..=order` from `p`.
///
/// `p` must already be in Williamson coordinates, `p₂ = Σ λ_j x_j ξ_j`
/// (complexified for loxodromic blocks). Degree `k` is handled by one
/// homogeneous generator `f_k` with `{p₂, x^α ξ^β} = ⟨α−β, λ⟩ x^α ξ^β`, so the
/// coefficient of `f_k` is the coefficient of `p` divided by `⟨α−β, λ⟩`.
pub fn birkhoff_normalize_with<C: Coeff>(
    p: &Jet<C>,
    order: usize,
    opts: BirkhoffOptions,
) -> Result<NormalFormResult<C>, JetError> {
    let n = p.n();
    let (lambda, cleaned) = williamson_frequencies(p, opts.williamson_tol)?;
    let scale = lambda.iter().map(Coeff::magnitude).fold(0.0, f64::max);
    let mut h = cleaned.with_order(order);
    let mut generators = Vec::new();
    for k in 3..=order {
        let hk = h.homogeneous(k);
        let mut fk = Jet::zero(n, order);
        for (m, c) in hk.terms() {
            if m.is_action() {
                continue;
            }
            let weight = m.weight();
            let w = weight
                .iter()
                .zip(&lambda)
                .fold(C::zero(), |acc, (&kj, l)| acc + l.clone() * C::from_i64(kj));
            if w.magnitude() <= opts.resonance_tol * scale {
                return Err(JetError::ResonanceObstruction {
                    monomial: m.to_string(),
                    k: weight,
                    value: w.magnitude(),
                });
            }
            fk.add_term(m.clone(), c.clone() / w);
        }
        if !fk.is_zero() {
            h = lie_transform(&fk, &h)?;
        }
        generators.push(fk);
    }
    let max_non_action = h.max_non_action(0..=order);
    let q0 = action_form(&h.filter(Monomial::is_action))?;
    Ok(NormalFormResult {
        order,
        lambda,
        generators,
        q0,
        transformed: h,
        max_non_action,
        residual_degree: order + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::ratio;
    use num_rational::BigRational;

    type Q = BigRational;

    fn q(v: i64) -> Q {
        Q::from_i64(v)
    }

    #[test]
    fn saddle_plus_cubic_one_dof() {
        // p = xξ + x³: the only cubic monomial has weight 3, f₃ = x³/3
        let p: Jet<Q> = Jet::from_terms(
            1,
            3,
            vec![(vec![1], vec![1], q(1)), (vec![3], vec![0], q(1))],
        )
        .unwrap();
        let nf = birkhoff_normalize(&p, 3).unwrap();
        assert_eq!(nf.generators.len(), 1);
        assert_eq!(nf.generators[0].coeff_of(&[3], &[0]), ratio(1, 3));
        assert_eq!(nf.q0.coeff(&[1]), q(1));
        assert_eq!(nf.q0.degree(), 1);
        assert_eq!(nf.max_non_action, 0.0);
        let again = nf.apply(&p).unwrap();
        assert_eq!(again, nf.q0.to_jet(3));
    }

    #[test]
    fn already_normal_needs_no_generators() {
        let p: Jet<Q> = Jet::monomial(1, 6, &[1], &[1], ratio(5, 4));
        let nf = birkhoff_normalize(&p, 6).unwrap();
        assert!(nf.generators.iter().all(Jet::is_zero));
        assert_eq!(nf.q0.coeff(&[1]), ratio(5, 4));
    }

    #[test]
    fn exact_resonance_is_reported() {
        // λ = (1, 2): x2 ξ1² has weight (−2, 1), ⟨k, λ⟩ = 0
        let p: Jet<Q> = Jet::from_terms(
            2,
            3,
            vec![
                (vec![1, 0], vec![1, 0], q(1)),
                (vec![0, 1], vec![0, 1], q(2)),
                (vec![0, 1], vec![2, 0], q(1)),
            ],
        )
        .unwrap();
        match birkhoff_normalize(&p, 3) {
            Err(JetError::ResonanceObstruction { k, value, .. }) => {
                assert_eq!(k, vec![-2, 1]);
                assert_eq!(value, 0.0);
            }
            other => panic!("expected obstruction, got {other:?}"),
        }
    }

    #[test]
    fn off_form_quadratic_rejected() {
        let p: Jet<f64> = Jet::from_terms(
            1,
            3,
            vec![(vec![1], vec![1], 1.0), (vec![2], vec![0], 0.5)],
        )
        .unwrap();
        assert!(matches!(
            birkhoff_normalize(&p, 3),
            Err(JetError::NotWilliamson { .. })
        ));
    }

    #[test]
    fn action_form_relabels() {
        let qj: Jet<f64> = Jet::from_terms(
            2,
            4,
            vec![
                (vec![1, 0], vec![1, 0], 3.0),
                (vec![1, 1], vec![1, 1], 2.0),
            ],
        )
        .unwrap();
        let a = action_form(&qj).unwrap();
        assert_eq!(a.coeff(&[1, 0]), 3.0);
        assert_eq!(a.coeff(&[1, 1]), 2.0);
        assert_eq!(a.to_jet(4), qj);

        let bad: Jet<f64> = Jet::monomial(2, 4, &[1, 0], &[0, 1], 1.0);
        match action_form(&bad) {
            Err(JetError::NonActionMonomial { offenders }) => {
                assert_eq!(offenders, vec!["x1*xi2".to_string()])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn order_two_leaves_quadratic_part() {
        let p: Jet<f64> = Jet::from_terms(
            2,
            2,
            vec![
                (vec![1, 0], vec![1, 0], 1.0),
                (vec![0, 1], vec![0, 1], 2f64.sqrt()),
            ],
        )
        .unwrap();
        let nf = birkhoff_normalize(&p, 2).unwrap();
        assert!(nf.generators.is_empty());
        assert_eq!(nf.q0.coeff(&[0, 1]), 2f64.sqrt());
    }
}
