//! Evaluable functions on phase space `ℝ^{2n}` with exact first and second
//! derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::jet::Jet;

/// A smooth function of `y = (x, ξ) ∈ ℝ^{2n}`.
pub trait PhaseFunction: Send + Sync {
    /// Degrees of freedom `n`.
    fn dof(&self) -> usize;

    fn value(&self, y: &[f64]) -> f64;

    fn gradient(&self, y: &[f64]) -> Vec<f64>;

    fn hessian(&self, y: &[f64]) -> DMatrix<f64>;

    /// `H_p(y) = (∂_ξ p, −∂_x p)`.
    fn hamiltonian_field(&self, y: &[f64]) -> Vec<f64> {
        symplectic_gradient(&self.gradient(y))
    }
}

/// `J∇` for `J = [[0, I], [−I, 0]]`.
pub fn symplectic_gradient(grad: &[f64]) -> Vec<f64> {
    let n = grad.len() / 2;
    let mut out = vec![0.0; 2 * n];
    for j in 0..n {
        out[j] = grad[n + j];
        out[n + j] = -grad[j];
    }
    out
}

impl<T: PhaseFunction + ?Sized> PhaseFunction for Arc<T> {
    fn dof(&self) -> usize {
        (**self).dof()
    }
    fn value(&self, y: &[f64]) -> f64 {
        (**self).value(y)
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        (**self).gradient(y)
    }
    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        (**self).hessian(y)
    }
}

#[inline]
fn pow(b: f64, e: u16) -> f64 {
    match e {
        0 => 1.0,
        1 => b,
        2 => b * b,
        _ => b.powi(e as i32),
    }
}

/// A real polynomial flattened for fast evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledPoly {
    n: usize,
    // (coefficient, sparse exponents as (variable, power))
    terms: Vec<(f64, Vec<(usize, u16)>)>,
}

impl CompiledPoly {
    pub fn new(jet: &Jet<f64>) -> Self {
        let terms = jet
            .terms()
            .map(|(m, &c)| {
                let sparse = m
                    .exponents()
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(v, &e)| (v, e))
                    .collect();
                (c, sparse)
            })
            .collect();
        CompiledPoly { n: jet.n(), terms }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl PhaseFunction for CompiledPoly {
    fn dof(&self) -> usize {
        self.n
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, m)| m.iter().fold(*c, |acc, &(v, e)| acc * pow(y[v], e)))
            .sum()
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 2 * self.n];
        for (c, m) in &self.terms {
            for (i, &(vi, ei)) in m.iter().enumerate() {
                let mut t = c * ei as f64 * pow(y[vi], ei - 1);
                for (k, &(vk, ek)) in m.iter().enumerate() {
                    if k != i {
                        t *= pow(y[vk], ek);
                    }
                }
                g[vi] += t;
            }
        }
        g
    }

    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let d = 2 * self.n;
        let mut h = DMatrix::zeros(d, d);
        for (c, m) in &self.terms {
            for (i, &(vi, ei)) in m.iter().enumerate() {
                for (j, &(vj, ej)) in m.iter().enumerate() {
                    let mut t = *c;
                    if i == j {
                        if ei < 2 {
                            continue;
                        }
                        t *= (ei as f64) * (ei as f64 - 1.0) * pow(y[vi], ei - 2);
                    } else {
                        t *= ei as f64 * pow(y[vi], ei - 1) * ej as f64 * pow(y[vj], ej - 1);
                    }
                    for (k, &(vk, ek)) in m.iter().enumerate() {
                        if k != i && k != j {
                            t *= pow(y[vk], ek);
                        }
                    }
                    h[(vi, vj)] += t;
                }
            }
        }
        h
    }
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Polynomial smoothstep `S_N` of degree `2N+1`: `S(0) = 0`, `S(1) = 1`, and the
/// first `N` derivatives vanish at both ends. Clamped to 0 and 1 outside `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Smoothstep {
    order: usize,
    // ascending powers of u
    coeffs: Vec<f64>,
}

impl Smoothstep {
    pub fn new(order: usize) -> Self {
        let nn = order as u64;
        let mut coeffs = vec![0.0; 2 * order + 2];
        for k in 0..=nn {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[(nn + 1 + k) as usize] =
                sign * binomial(nn + k, k) * binomial(2 * nn + 1, nn - k);
        }
        Smoothstep { order, coeffs }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// `(S(u), S'(u), S''(u))`.
    pub fn eval(&self, u: f64) -> (f64, f64, f64) {
        if u <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if u >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        // S(u) = 1 − S(1 − u); evaluating on u ≤ ½ keeps the alternating
        // coefficients from cancelling
        if u > 0.5 {
            let (s, d1, d2) = self.horner(1.0 - u);
            return (1.0 - s, d1, -d2);
        }
        self.horner(u)
    }

    fn horner(&self, u: f64) -> (f64, f64, f64) {
        let (mut s, mut d1, mut d2) = (0.0, 0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            d2 = d2 * u + d1 * 2.0;
            d1 = d1 * u + s;
            s = s * u + c;
        }
        (s, d1, d2)
    }

    pub fn value(&self, u: f64) -> f64 {
        self.eval(u).0
    }
}

/// Radial cutoff `Φ(|y|²/R²)`: equal to 1 on `|y| ≤ R/2`, 0 on `|y| ≥ R`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialBump {
    radius: f64,
    step: Smoothstep,
}

const BUMP_PLATEAU: f64 = 0.25;

impl RadialBump {
    pub fn new(radius: f64, order: usize) -> Self {
        assert!(radius > 0.0, "bump radius must be positive");
        RadialBump {
            radius,
            step: Smoothstep::new(order),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// `(Φ, Φ′, Φ″)` as functions of `t = |y|²/R²`.
    fn profile(&self, t: f64) -> (f64, f64, f64) {
        let w = 1.0 - BUMP_PLATEAU;
        let (s, d1, d2) = self.step.eval((t - BUMP_PLATEAU) / w);
        (1.0 - s, -d1 / w, -d2 / (w * w))
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let t = y.iter().map(|v| v * v).sum::<f64>() / (self.radius * self.radius);
        self.profile(t).0
    }

    /// Value, gradient and Hessian together.
    pub fn jet2(&self, y: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        let r2 = self.radius * self.radius;
        let t = y.iter().map(|v| v * v).sum::<f64>() / r2;
        let (p, p1, p2) = self.profile(t);
        let d = y.len();
        let grad: Vec<f64> = y.iter().map(|v| p1 * 2.0 * v / r2).collect();
        let mut h = DMatrix::zeros(d, d);
        if p1 != 0.0 || p2 != 0.0 {
            for i in 0..d {
                for j in 0..d {
                    h[(i, j)] = p2 * 4.0 * y[i] * y[j] / (r2 * r2);
                }
                h[(i, i)] += p1 * 2.0 / r2;
            }
        }
        (p, grad, h)
    }
}

/// `f(y)·Φ(|y|²/R²)`, a compactly supported version of `f`.
#[derive(Clone)]
pub struct Bumped<F> {
    pub inner: F,
    pub bump: RadialBump,
}

impl<F: PhaseFunction> PhaseFunction for Bumped<F> {
    fn dof(&self) -> usize {
        self.inner.dof()
    }

    fn value(&self, y: &[f64]) -> f64 {
        let b = self.bump.value(y);
        if b == 0.0 {
            0.0
        } else {
            b * self.inner.value(y)
        }
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let (b, db, _) = self.bump.jet2(y);
        if b == 0.0 {
            return vec![0.0; y.len()];
        }
        let f = self.inner.value(y);
        let df = self.inner.gradient(y);
        df.iter().zip(&db).map(|(a, c)| b * a + f * c).collect()
    }

    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let d = y.len();
        let (b, db, hb) = self.bump.jet2(y);
        if b == 0.0 {
            return DMatrix::zeros(d, d);
        }
        let f = self.inner.value(y);
        let df = self.inner.gradient(y);
        let hf = self.inner.hessian(y);
        let mut h = hf * b + hb * f;
        for i in 0..d {
            for j in 0..d {
                h[(i, j)] += df[i] * db[j] + db[i] * df[j];
            }
        }
        h
    }
}

/// `scale · f`.
#[derive(Clone)]
pub struct Scaled<F> {
    pub scale: f64,
    pub inner: F,
}

impl<F: PhaseFunction> PhaseFunction for Scaled<F> {
    fn dof(&self) -> usize {
        self.inner.dof()
    }
    fn value(&self, y: &[f64]) -> f64 {
        self.scale * self.inner.value(y)
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        self.inner.gradient(y).into_iter().map(|g| g * self.scale).collect()
    }
    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        self.inner.hessian(y) * self.scale
    }
}

/// Smooth Hamiltonian: a polynomial jet plus an optional remainder that is
/// invisible to the jet (typically flat at the origin).
#[derive(Clone)]
pub struct Hamiltonian {
    jet: Jet<f64>,
    poly: CompiledPoly,
    remainder: Option<Arc<dyn PhaseFunction>>,
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Hamiltonian")
            .field("jet", &self.jet)
            .field("remainder", &self.remainder.is_some())
            .finish()
    }
}

impl Hamiltonian {
    pub fn from_jet(jet: Jet<f64>) -> Self {
        let poly = CompiledPoly::new(&jet);
        Hamiltonian {
            jet,
            poly,
            remainder: None,
        }
    }

    pub fn with_remainder(mut self, r: Arc<dyn PhaseFunction>) -> Self {
        assert_eq!(r.dof(), self.jet.n(), "remainder dimension");
        self.remainder = Some(r);
        self
    }

    pub fn jet(&self) -> &Jet<f64> {
        &self.jet
    }

    pub fn remainder(&self) -> Option<&Arc<dyn PhaseFunction>> {
        self.remainder.as_ref()
    }
}

impl PhaseFunction for Hamiltonian {
    fn dof(&self) -> usize {
        self.jet.n()
    }

    fn value(&self, y: &[f64]) -> f64 {
        let mut v = self.poly.value(y);
        if let Some(r) = &self.remainder {
            v += r.value(y);
        }
        v
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = self.poly.gradient(y);
        if let Some(r) = &self.remainder {
            for (a, b) in g.iter_mut().zip(r.gradient(y)) {
                *a += b;
            }
        }
        g
    }

    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let mut h = self.poly.hessian(y);
        if let Some(r) = &self.remainder {
            h += r.hessian(y);
        }
        h
    }
}

/// `f ∘ M` for a linear change of coordinates `old = M·new`.
#[derive(Clone)]
pub struct LinearPullback<F> {
    pub inner: F,
    pub m: DMatrix<f64>,
}

impl<F> LinearPullback<F> {
    fn to_old(&self, y: &[f64]) -> Vec<f64> {
        (&self.m * nalgebra::DVector::from_column_slice(y)).iter().copied().collect()
    }
}

impl<F: PhaseFunction> PhaseFunction for LinearPullback<F> {
    fn dof(&self) -> usize {
        self.inner.dof()
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.inner.value(&self.to_old(y))
    }

    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let g = nalgebra::DVector::from_vec(self.inner.gradient(&self.to_old(y)));
        (self.m.transpose() * g).iter().copied().collect()
    }

    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        self.m.transpose() * self.inner.hessian(&self.to_old(y)) * &self.m
    }
}

/// Centered-difference gradient, used as a test oracle and for functions known
/// only through values.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, y: &[f64], h: f64) -> Vec<f64> {
    let mut p = y.to_vec();
    (0..y.len())
        .map(|i| {
            p[i] = y[i] + h;
            let a = f(&p);
            p[i] = y[i] - h;
            let b = f(&p);
            p[i] = y[i];
            (a - b) / (2.0 * h)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_jet() -> Jet<f64> {
        Jet::from_terms(
            2,
            6,
            vec![
                (vec![1, 0], vec![1, 0], 1.5),
                (vec![2, 1], vec![0, 3], -0.7),
                (vec![0, 0], vec![2, 1], 0.25),
                (vec![3, 0], vec![0, 0], 2.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn pullback_matches_jet_substitution() {
        let j = sample_jet();
        let m = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.2, 0.0, 0.1,
            0.0, 1.0, -0.3, 0.0,
            0.5, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.4, 1.0,
        ]);
        let rows: Vec<Vec<f64>> = (0..4).map(|i| m.row(i).iter().copied().collect()).collect();
        let direct = CompiledPoly::new(&j.linear_substitute(&rows));
        let pulled = LinearPullback { inner: CompiledPoly::new(&j), m };
        let y = [0.3, -0.2, 0.1, 0.25];
        assert!((pulled.value(&y) - direct.value(&y)).abs() < 1e-14);
        let (a, b) = (pulled.gradient(&y), direct.gradient(&y));
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-13));
        assert!((pulled.hessian(&y) - direct.hessian(&y)).amax() < 1e-12);
    }

    #[test]
    fn compiled_poly_matches_jet() {
        let j = sample_jet();
        let p = CompiledPoly::new(&j);
        let y = [0.3, -0.8, 1.1, 0.45];
        assert!((p.value(&y) - j.eval(&y)).abs() < 1e-14);
        for v in 0..4 {
            let dj = j.derivative(v).eval(&y);
            assert!((p.gradient(&y)[v] - dj).abs() < 1e-13);
            for w in 0..4 {
                let hj = j.derivative(v).derivative(w).eval(&y);
                assert!((p.hessian(&y)[(v, w)] - hj).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn smoothstep_endpoints_and_symmetry() {
        for order in 1..8 {
            let s = Smoothstep::new(order);
            assert!((s.value(0.5) - 0.5).abs() < 1e-13, "order {order}");
            for &u in &[0.1, 0.27, 0.8] {
                assert!((s.value(u) + s.value(1.0 - u) - 1.0).abs() < 1e-12);
            }
            let (_, d1, _) = s.eval(1e-9);
            assert!(d1.abs() < 1e-6);
            assert_eq!(s.eval(-0.1), (0.0, 0.0, 0.0));
            assert_eq!(s.eval(1.5), (1.0, 0.0, 0.0));
        }
        // S_1 = 3u² − 2u³
        let s1 = Smoothstep::new(1);
        assert!((s1.value(0.3) - (0.27 - 0.054)).abs() < 1e-15);
    }

    #[test]
    fn smoothstep_derivatives() {
        let s = Smoothstep::new(4);
        let h = 1e-5;
        for &u in &[0.2, 0.5, 0.77] {
            let (_, d1, d2) = s.eval(u);
            let fd1 = (s.value(u + h) - s.value(u - h)) / (2.0 * h);
            let fd2 = (s.eval(u + h).1 - s.eval(u - h).1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-8);
            assert!((d2 - fd2).abs() < 1e-6);
        }
    }

    #[test]
    fn bumped_derivatives_match_differences() {
        let f = Bumped {
            inner: CompiledPoly::new(&sample_jet()),
            bump: RadialBump::new(1.0, 3),
        };
        let y = [0.3, -0.4, 0.35, 0.2]; // inside the transition shell
        let t: f64 = y.iter().map(|v| v * v).sum();
        assert!(t > BUMP_PLATEAU && t < 1.0);
        let g = f.gradient(&y);
        let fd = fd_gradient(&|z| f.value(z), &y, 1e-6);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
        let hes = f.hessian(&y);
        for i in 0..4 {
            let col = fd_gradient(&|z| f.gradient(z)[i], &y, 1e-6);
            for j in 0..4 {
                assert!((hes[(i, j)] - col[j]).abs() < 1e-7);
            }
        }
        assert_eq!(f.value(&[1.0, 0.1, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn hamiltonian_field_sign() {
        // p = xξ: ẋ = x, ξ̇ = −ξ
        let h = Hamiltonian::from_jet(Jet::monomial(1, 2, &[1], &[1], 1.0));
        assert_eq!(h.hamiltonian_field(&[2.0, 3.0]), vec![2.0, -3.0]);
    }
}
