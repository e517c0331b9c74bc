//! Truncated power series in the phase variables `(x_1..x_n, ξ_1..ξ_n)`.
//!
//! A [`Jet`] stores the Taylor coefficients of a function up to a fixed total
//! degree. Products, Poisson brackets and Lie series are all exactly graded:
//! the degree-`k` part of a result only depends on parts of the operands whose
//! degrees add up to `k`, and anything above the truncation order is dropped.

mod action_angle;
mod birkhoff;
mod coeff;
mod lie;
mod resonance;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use action_angle::{hyperbolic_action_angle, ActionAngleError};
pub use birkhoff::{
    action_form, birkhoff_normalize, birkhoff_normalize_with, ActionPolynomial, BirkhoffOptions,
    NormalFormResult,
};
pub use coeff::{ratio, Coeff};
pub use lie::{lie_transform, poisson};
pub use resonance::{resonance_scan, ResonanceReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum JetError {
    #[error("dimension mismatch: {left} vs {right} degrees of freedom")]
    DimensionMismatch { left: usize, right: usize },
    #[error("Lie generator has a term of degree {degree} < 3")]
    GeneratorTooLowDegree { degree: usize },
    #[error("resonance obstruction at monomial {monomial}: <alpha-beta, lambda> = {value:e}")]
    ResonanceObstruction {
        monomial: String,
        k: Vec<i64>,
        value: f64,
    },
    #[error("quadratic part is not in Williamson form: {detail}")]
    NotWilliamson { detail: String },
    #[error("non-action monomials present: {offenders:?}")]
    NonActionMonomial { offenders: Vec<String> },
    #[error("exponent vector of length {got} for n = {n}")]
    BadExponent { n: usize, got: usize },
}

/// Exponent vector over `(x, ξ)`, length `2n`.
///
/// Ordered graded-lexicographically: lower total degree first, and inside a
/// degree the exponent vectors compare in reverse lexicographic order so that
/// `x_1^k` comes first.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Monomial(Box<[u16]>);

impl Monomial {
    pub fn new(exps: Vec<u16>) -> Self {
        Monomial(exps.into_boxed_slice())
    }

    pub fn one(n: usize) -> Self {
        Monomial(vec![0; 2 * n].into_boxed_slice())
    }

    pub fn from_parts(alpha: &[u16], beta: &[u16]) -> Self {
        let mut v = alpha.to_vec();
        v.extend_from_slice(beta);
        Monomial::new(v)
    }

    pub fn exponents(&self) -> &[u16] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len() / 2
    }

    pub fn alpha(&self) -> &[u16] {
        &self.0[..self.n()]
    }

    pub fn beta(&self) -> &[u16] {
        &self.0[self.n()..]
    }

    pub fn degree(&self) -> usize {
        self.0.iter().map(|&e| e as usize).sum()
    }

    /// `α = β`, i.e. a product of powers of `x_j ξ_j`.
    pub fn is_action(&self) -> bool {
        self.alpha() == self.beta()
    }

    /// `α − β` as signed integers.
    pub fn weight(&self) -> Vec<i64> {
        self.alpha()
            .iter()
            .zip(self.beta())
            .map(|(&a, &b)| a as i64 - b as i64)
            .collect()
    }

    fn mul(&self, other: &Monomial) -> Monomial {
        Monomial(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.n();
        let mut first = true;
        for (i, &e) in self.0.iter().enumerate() {
            if e == 0 {
                continue;
            }
            if !first {
                write!(f, "*")?;
            }
            first = false;
            let name = if i < n { "x" } else { "xi" };
            write!(f, "{name}{}", i % n + 1)?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        if first {
            write!(f, "1")?;
        }
        Ok(())
    }
}

/// Truncated multivariate power series in `2n` phase variables.
#[derive(Clone, PartialEq)]
pub struct Jet<C: Coeff> {
    n: usize,
    order: usize,
    terms: BTreeMap<Monomial, C>,
}

impl<C: Coeff> fmt::Debug for Jet<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Jet(n={}, N={}) {{", self.n, self.order)?;
        for (m, c) in &self.terms {
            write!(f, " {c:?}*{m}")?;
        }
        write!(f, " }}")
    }
}

impl<C: Coeff> Jet<C> {
    pub fn zero(n: usize, order: usize) -> Self {
        Jet {
            n,
            order,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, order: usize, c: C) -> Self {
        let mut j = Jet::zero(n, order);
        j.add_term(Monomial::one(n), c);
        j
    }

    /// The coordinate function with index `var` (`0..n` are `x`, `n..2n` are `ξ`).
    pub fn coordinate(n: usize, order: usize, var: usize) -> Self {
        let mut e = vec![0u16; 2 * n];
        e[var] = 1;
        let mut j = Jet::zero(n, order);
        j.add_term(Monomial::new(e), C::one());
        j
    }

    pub fn monomial(n: usize, order: usize, alpha: &[u16], beta: &[u16], c: C) -> Self {
        assert_eq!(alpha.len(), n);
        assert_eq!(beta.len(), n);
        let mut j = Jet::zero(n, order);
        j.add_term(Monomial::from_parts(alpha, beta), c);
        j
    }

    /// Builds a jet from `(alpha, beta, coeff)` triples, summing duplicates.
    pub fn from_terms<I>(n: usize, order: usize, terms: I) -> Result<Self, JetError>
    where
        I: IntoIterator<Item = (Vec<u16>, Vec<u16>, C)>,
    {
        let mut j = Jet::zero(n, order);
        for (a, b, c) in terms {
            if a.len() != n {
                return Err(JetError::BadExponent { n, got: a.len() });
            }
            if b.len() != n {
                return Err(JetError::BadExponent { n, got: b.len() });
            }
            j.add_term(Monomial::from_parts(&a, &b), c);
        }
        Ok(j)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).cloned().unwrap_or_else(C::zero)
    }

    pub fn coeff_of(&self, alpha: &[u16], beta: &[u16]) -> C {
        self.coeff(&Monomial::from_parts(alpha, beta))
    }

    /// Adds `c·m`, silently dropping terms above the truncation order.
    pub fn add_term(&mut self, m: Monomial, c: C) {
        debug_assert_eq!(m.n(), self.n);
        if m.degree() > self.order || c.is_zero() {
            return;
        }
        match self.terms.get_mut(&m) {
            Some(v) => {
                *v = v.clone() + c;
                if v.is_zero() {
                    self.terms.remove(&m);
                }
            }
            None => {
                self.terms.insert(m, c);
            }
        }
    }

    pub fn min_degree(&self) -> Option<usize> {
        self.terms.keys().map(Monomial::degree).min()
    }

    pub fn max_degree(&self) -> Option<usize> {
        self.terms.keys().map(Monomial::degree).max()
    }

    /// Homogeneous part of degree `k`.
    pub fn homogeneous(&self, k: usize) -> Self {
        self.filter(|m| m.degree() == k)
    }

    pub fn truncate(&self, order: usize) -> Self {
        let mut j = self.filter(|m| m.degree() <= order);
        j.order = order.min(self.order);
        j
    }

    /// Same terms, new truncation order (terms above `order` are dropped).
    pub fn with_order(&self, order: usize) -> Self {
        let mut j = self.filter(|m| m.degree() <= order);
        j.order = order;
        j
    }

    pub fn filter(&self, keep: impl Fn(&Monomial) -> bool) -> Self {
        Jet {
            n: self.n,
            order: self.order,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, c)| (m.clone(), c.clone()))
                .collect(),
        }
    }

    pub fn map_coeffs<D: Coeff>(&self, f: impl Fn(&C) -> D) -> Jet<D> {
        let mut j = Jet::zero(self.n, self.order);
        for (m, c) in &self.terms {
            j.add_term(m.clone(), f(c));
        }
        j
    }

    pub fn scale(&self, s: &C) -> Self {
        self.map_coeffs(|c| c.clone() * s.clone())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.check_dim(other);
        let mut j = self.clone();
        j.order = self.order.min(other.order);
        j = j.with_order(j.order);
        for (m, c) in &other.terms {
            j.add_term(m.clone(), c.clone());
        }
        j
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(&-C::one()))
    }

    /// Truncated product, order `min(N_self, N_other)`.
    pub fn mul(&self, other: &Self) -> Self {
        self.check_dim(other);
        let order = self.order.min(other.order);
        let mut j = Jet::zero(self.n, order);
        for (ma, ca) in &self.terms {
            let da = ma.degree();
            if da > order {
                continue;
            }
            for (mb, cb) in &other.terms {
                if da + mb.degree() > order {
                    continue;
                }
                j.add_term(ma.mul(mb), ca.clone() * cb.clone());
            }
        }
        j
    }

    /// Partial derivative with respect to variable `var` (`0..2n`).
    pub fn derivative(&self, var: usize) -> Self {
        let mut j = Jet::zero(self.n, self.order);
        for (m, c) in &self.terms {
            let e = m.0[var];
            if e == 0 {
                continue;
            }
            let mut exps = m.0.to_vec();
            exps[var] -= 1;
            j.add_term(Monomial::new(exps), c.clone() * C::from_i64(e as i64));
        }
        j
    }

    pub fn eval(&self, z: &[C]) -> C {
        assert_eq!(z.len(), 2 * self.n);
        let mut acc = C::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (v, &e) in z.iter().zip(m.0.iter()) {
                for _ in 0..e {
                    t = t * v.clone();
                }
            }
            acc = acc + t;
        }
        acc
    }

    /// Composition with a linear change of variables.
    ///
    /// `rows[i]` expresses old variable `i` as a linear form in the new
    /// variables, so the result is `self(R·z)`. Degrees are preserved.
    pub fn linear_substitute(&self, rows: &[Vec<C>]) -> Self {
        let dim = 2 * self.n;
        assert_eq!(rows.len(), dim);
        let forms: Vec<Jet<C>> = rows
            .iter()
            .map(|row| {
                let mut f = Jet::zero(self.n, self.order);
                for (k, c) in row.iter().enumerate() {
                    let mut e = vec![0u16; dim];
                    e[k] = 1;
                    f.add_term(Monomial::new(e), c.clone());
                }
                f
            })
            .collect();
        // powers[i][e] = forms[i]^e, built lazily
        let mut powers: Vec<Vec<Jet<C>>> = forms
            .iter()
            .map(|_| vec![Jet::constant(self.n, self.order, C::one())])
            .collect();
        let mut out = Jet::zero(self.n, self.order);
        for (m, c) in &self.terms {
            let mut prod = Jet::constant(self.n, self.order, c.clone());
            for (i, &e) in m.0.iter().enumerate() {
                let e = e as usize;
                while powers[i].len() <= e {
                    let next = powers[i].last().unwrap().mul(&forms[i]);
                    powers[i].push(next);
                }
                if e > 0 {
                    prod = prod.mul(&powers[i][e]);
                }
            }
            for (pm, pc) in prod.terms {
                out.add_term(pm, pc);
            }
        }
        out
    }

    /// Largest coefficient magnitude over non-action monomials with degree in `degrees`.
    pub fn max_non_action(&self, degrees: std::ops::RangeInclusive<usize>) -> f64 {
        self.terms
            .iter()
            .filter(|(m, _)| !m.is_action() && degrees.contains(&m.degree()))
            .map(|(_, c)| c.magnitude())
            .fold(0.0, f64::max)
    }

    fn check_dim(&self, other: &Self) {
        assert_eq!(
            self.n, other.n,
            "jets over different phase spaces ({} vs {})",
            self.n, other.n
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn x(n: usize, order: usize, i: usize) -> Jet<BigRational> {
        Jet::coordinate(n, order, i)
    }

    #[test]
    fn grlex_order_puts_lower_degree_first() {
        let a = Monomial::new(vec![2, 0]);
        let b = Monomial::new(vec![1, 1]);
        let c = Monomial::new(vec![0, 1]);
        let mut v = vec![b.clone(), a.clone(), c.clone()];
        v.sort();
        assert_eq!(v, vec![c, a, b]);
    }

    #[test]
    fn product_truncates_at_order() {
        let x1 = x(1, 3, 0);
        let xi = x(1, 3, 1);
        let p = x1.mul(&x1).mul(&xi).mul(&xi);
        assert!(p.is_zero());
        let q = x1.mul(&xi).mul(&x1);
        assert_eq!(q.len(), 1);
        assert_eq!(q.max_degree(), Some(3));
    }

    #[test]
    fn exact_cancellation_removes_terms() {
        let x1 = x(1, 4, 0);
        let d = x1.sub(&x1);
        assert!(d.is_zero());
    }

    #[test]
    fn derivative_of_monomial() {
        let j: Jet<f64> = Jet::monomial(1, 6, &[3], &[2], 2.0);
        let dx = j.derivative(0);
        assert_eq!(dx.coeff_of(&[2], &[2]), 6.0);
        let dxi = j.derivative(1);
        assert_eq!(dxi.coeff_of(&[3], &[1]), 4.0);
    }

    #[test]
    fn linear_substitution_matches_pointwise_eval() {
        let p: Jet<f64> = Jet::from_terms(
            1,
            4,
            vec![
                (vec![1], vec![1], 1.0),
                (vec![3], vec![0], 0.5),
                (vec![1], vec![2], -2.0),
            ],
        )
        .unwrap();
        let rows = vec![vec![0.3, 1.2], vec![-0.7, 0.4]];
        let q = p.linear_substitute(&rows);
        let z = [0.11, -0.27];
        let old = [
            rows[0][0] * z[0] + rows[0][1] * z[1],
            rows[1][0] * z[0] + rows[1][1] * z[1],
        ];
        assert!((q.eval(&z) - p.eval(&old)).abs() < 1e-14);
    }

    #[test]
    fn display_names_variables() {
        let m = Monomial::new(vec![2, 0, 0, 1]);
        assert_eq!(m.to_string(), "x1^2*xi2");
        assert_eq!(Monomial::one(2).to_string(), "1");
    }
}
