//! Linear symplectic algebra at a fixed point.
//!
//! Coordinates are `y = (x_1..x_n, ξ_1..ξ_n)` and `J = [[0, I], [−I, 0]]`, so
//! the Hamiltonian field of `p` is `J∇p` and its linearization at a critical
//! point is `L = J·Hess p`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jet::Jet;
use crate::smooth::PhaseFunction;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymplecticError {
    #[error("not a critical point: |grad p| = {norm:e} exceeds {tol:e}")]
    NotCriticalPoint { norm: f64, tol: f64 },
    #[error("degenerate Hessian (condition number {condition:e})")]
    DegenerateHessian { condition: f64 },
    #[error("purely imaginary spectrum: eigenvalue {re}{im:+}i has |Re| below the gap tolerance")]
    PurelyImaginarySpectrum { re: f64, im: f64 },
    #[error("zero eigenvalue in the fundamental matrix")]
    ZeroEigenvalue,
    #[error("fundamental matrix is not diagonalizable near eigenvalue {re}{im:+}i")]
    NonDiagonalizable { re: f64, im: f64 },
    #[error("spectrum does not split into quadruples: no partner for {re}{im:+}i")]
    BrokenQuadruple { re: f64, im: f64 },
    #[error("resonant or multiple eigenvalue {re}{im:+}i (multiplicity {multiplicity})")]
    ResonantOrMultipleSpectrum { re: f64, im: f64, multiplicity: usize },
    #[error("symplectic normalization of eigenvectors failed: {detail}")]
    NormalizationFailed { detail: String },
    #[error("frame has no complex blocks")]
    NoComplexBlocks,
    #[error("A0 is not stable: eigenvalue {re}{im:+}i has Re <= 0")]
    UnstableA0 { re: f64, im: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("jet is not purely quadratic: found degree {degree}")]
    NotQuadratic { degree: usize },
}

/// A point `(x, ξ)` of `T*ℝⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    coords: Vec<f64>,
}

impl PhasePoint {
    pub fn new(n: usize, coords: Vec<f64>) -> Result<Self, SymplecticError> {
        if coords.len() != 2 * n {
            return Err(SymplecticError::DimensionMismatch {
                expected: 2 * n,
                got: coords.len(),
            });
        }
        Ok(PhasePoint { coords })
    }

    pub fn from_parts(x: &[f64], xi: &[f64]) -> Self {
        assert_eq!(x.len(), xi.len());
        PhasePoint {
            coords: x.iter().chain(xi).copied().collect(),
        }
    }

    pub fn origin(n: usize) -> Self {
        PhasePoint {
            coords: vec![0.0; 2 * n],
        }
    }

    pub fn n(&self) -> usize {
        self.coords.len() / 2
    }

    pub fn x(&self) -> &[f64] {
        &self.coords[..self.n()]
    }

    pub fn xi(&self) -> &[f64] {
        &self.coords[self.n()..]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }
}

/// The standard symplectic matrix of size `2n`.
pub fn standard_j(n: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

/// `‖MᵀJM − J‖∞` (max entry).
pub fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let j = standard_j(m.nrows() / 2);
    (m.transpose() * &j * m - j).amax()
}

/// `F = convention_factor · J · Hess p(ρ₀)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalMatrix {
    pub f: DMatrix<f64>,
    pub convention_factor: f64,
}

/// Default normalization: `½F = J·Hess`.
pub const DEFAULT_CONVENTION_FACTOR: f64 = 2.0;

impl FundamentalMatrix {
    pub fn from_hessian(hess: &DMatrix<f64>, convention_factor: f64) -> Self {
        let j = standard_j(hess.nrows() / 2);
        FundamentalMatrix {
            f: j * hess * convention_factor,
            convention_factor,
        }
    }

    /// `L = J·Hess`, the linearization of `H_p`.
    pub fn linearization(&self) -> DMatrix<f64> {
        &self.f / self.convention_factor
    }

    pub fn n(&self) -> usize {
        self.f.nrows() / 2
    }

    /// `‖Fᵀ J + J F‖∞`, zero for a Hamiltonian matrix.
    pub fn hamiltonian_defect(&self) -> f64 {
        let j = standard_j(self.n());
        (self.f.transpose() * &j + &j * &self.f).amax()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LinearOptions {
    pub convention_factor: f64,
    pub grad_tol: f64,
    /// Largest accepted condition number of the Hessian.
    pub max_condition: f64,
    /// Relative to the spectral radius.
    pub spectral_gap_tol: f64,
}

impl Default for LinearOptions {
    fn default() -> Self {
        LinearOptions {
            convention_factor: DEFAULT_CONVENTION_FACTOR,
            grad_tol: 1e-10,
            max_condition: 1e12,
            spectral_gap_tol: 1e-8,
        }
    }
}

/// Fundamental matrix of `h` at `rho0`.
pub fn fundamental_matrix(
    h: &dyn PhaseFunction,
    rho0: &PhasePoint,
    opts: &LinearOptions,
) -> Result<FundamentalMatrix, SymplecticError> {
    if rho0.n() != h.dof() {
        return Err(SymplecticError::DimensionMismatch {
            expected: h.dof(),
            got: rho0.n(),
        });
    }
    let g = h.gradient(rho0.as_slice());
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > opts.grad_tol {
        return Err(SymplecticError::NotCriticalPoint {
            norm,
            tol: opts.grad_tol,
        });
    }
    let hess = h.hessian(rho0.as_slice());
    let sv = hess.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin == 0.0 || smax / smin > opts.max_condition {
        return Err(SymplecticError::DegenerateHessian {
            condition: if smin == 0.0 { f64::INFINITY } else { smax / smin },
        });
    }
    Ok(FundamentalMatrix::from_hessian(&hess, opts.convention_factor))
}

/// Hessian of the degree-2 part of a jet (constant matrix).
pub fn quadratic_hessian(p: &Jet<f64>) -> DMatrix<f64> {
    let d = 2 * p.n();
    let mut h = DMatrix::zeros(d, d);
    for (m, &c) in p.homogeneous(2).terms() {
        let idx: Vec<usize> = m
            .exponents()
            .iter()
            .enumerate()
            .flat_map(|(v, &e)| std::iter::repeat_n(v, e as usize))
            .collect();
        if idx[0] == idx[1] {
            h[(idx[0], idx[0])] += 2.0 * c;
        } else {
            h[(idx[0], idx[1])] += c;
            h[(idx[1], idx[0])] += c;
        }
    }
    h
}

/// Quadratic jet `½ yᵀ H y`.
pub fn quadratic_jet(hess: &DMatrix<f64>, order: usize) -> Jet<f64> {
    let d = hess.nrows();
    let mut out = Jet::zero(d / 2, order.max(2));
    for i in 0..d {
        for k in i..d {
            let c = if i == k { 0.5 * hess[(i, i)] } else { hess[(i, k)] };
            if c != 0.0 {
                let mut e = vec![0u16; d];
                e[i] += 1;
                e[k] += 1;
                out.add_term(crate::jet::Monomial::new(e), c);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadKind {
    Real,
    ComplexPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    /// Representative with `Re λ > 0` (and `Im λ > 0` for complex pairs).
    pub lambda: Complex64,
    pub multiplicity: usize,
    pub kind: QuadKind,
}

/// Eigenvalues of `L = J·Hess` grouped into `λ, λ̄, −λ, −λ̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumQuadruples {
    pub quads: Vec<Quad>,
    pub simple: bool,
    /// `L` itself, kept for the eigenvector stage.
    #[serde(skip)]
    linearization: Option<DMatrix<f64>>,
}

impl SpectrumQuadruples {
    pub fn real_count(&self) -> usize {
        self.quads
            .iter()
            .filter(|q| q.kind == QuadKind::Real)
            .map(|q| q.multiplicity)
            .sum()
    }

    pub fn complex_count(&self) -> usize {
        self.quads
            .iter()
            .filter(|q| q.kind == QuadKind::ComplexPair)
            .map(|q| q.multiplicity)
            .sum()
    }

    /// Smallest `Re λ`.
    pub fn lambda_min(&self) -> f64 {
        self.quads.first().map(|q| q.lambda.re).unwrap_or(0.0)
    }

    /// Largest `Re λ`.
    pub fn lambda_max(&self) -> f64 {
        self.quads.last().map(|q| q.lambda.re).unwrap_or(0.0)
    }
}

fn complex_null_vector(m: DMatrix<Complex64>) -> (DVector<Complex64>, f64, f64) {
    let svd = m.svd(false, true);
    let sv = &svd.singular_values;
    let k = sv.imin();
    let next = sv
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, &s)| s)
        .fold(f64::INFINITY, f64::min);
    let v_t = svd.v_t.expect("v_t requested");
    (v_t.row(k).adjoint(), sv[k], next)
}

/// Validates the quadruple structure of the spectrum of `F`.
pub fn classify_spectrum(
    f: &FundamentalMatrix,
    opts: &LinearOptions,
) -> Result<SpectrumQuadruples, SymplecticError> {
    let l = f.linearization();
    let d = l.nrows();
    let eig: Vec<Complex64> = l.clone().complex_eigenvalues().iter().copied().collect();
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if radius == 0.0 {
        return Err(SymplecticError::ZeroEigenvalue);
    }
    let gap = opts.spectral_gap_tol * radius;
    for z in &eig {
        if z.norm() < gap {
            return Err(SymplecticError::ZeroEigenvalue);
        }
    }
    for z in &eig {
        if z.re.abs() < gap {
            return Err(SymplecticError::PurelyImaginarySpectrum { re: z.re, im: z.im });
        }
    }
    let pair_tol = 1e-6 * radius;
    let has = |w: Complex64| eig.iter().any(|z| (z - w).norm() < pair_tol);
    let mut reps: Vec<Complex64> = Vec::new();
    for &z in &eig {
        if z.re <= 0.0 {
            continue;
        }
        let real = z.im.abs() <= 1e-9 * radius;
        for partner in [-z, z.conj(), -z.conj()] {
            if !has(partner) {
                return Err(SymplecticError::BrokenQuadruple { re: z.re, im: z.im });
            }
        }
        if real {
            reps.push(Complex64::new(z.re, 0.0));
        } else if z.im > 0.0 {
            reps.push(z);
        }
    }
    reps.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut quads: Vec<Quad> = Vec::new();
    for z in reps {
        if let Some(last) = quads.last_mut() {
            if (last.lambda - z).norm() < pair_tol {
                last.multiplicity += 1;
                continue;
            }
        }
        let kind = if z.im == 0.0 {
            QuadKind::Real
        } else {
            QuadKind::ComplexPair
        };
        quads.push(Quad {
            lambda: z,
            multiplicity: 1,
            kind,
        });
    }
    let simple = quads.iter().all(|q| q.multiplicity == 1);
    for q in quads.iter().filter(|q| q.multiplicity > 1) {
        let shifted = l.map(|v| Complex64::new(v, 0.0)) - DMatrix::identity(d, d) * q.lambda;
        let sv = shifted.singular_values();
        let kernel = sv.iter().filter(|&&s| s < 1e-7 * radius).count();
        if kernel < q.multiplicity {
            return Err(SymplecticError::NonDiagonalizable {
                re: q.lambda.re,
                im: q.lambda.im,
            });
        }
    }
    Ok(SpectrumQuadruples {
        quads,
        simple,
        linearization: Some(l),
    })
}

/// Symplectic change of coordinates bringing `p₂` to the form
/// `Σ a_j x_j ξ_j + Σ c_j(x'ξ' + x''ξ'') + d_j(x'ξ'' − x''ξ')`.
#[derive(Debug, Clone, PartialEq)]
pub struct WilliamsonFrame {
    /// `new = S · old`.
    pub s: DMatrix<f64>,
    /// `old = M · new`, `M = S⁻¹`.
    pub m: DMatrix<f64>,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    pub symplectic_defect: f64,
}

/// JSON shape of a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameDocument {
    pub n: usize,
    pub ell: usize,
    pub m: usize,
    pub a: Vec<f64>,
    pub c: Vec<f64>,
    pub d: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<Vec<f64>>,
    pub symplectic_defect: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

impl WilliamsonFrame {
    pub fn n(&self) -> usize {
        self.s.nrows() / 2
    }

    pub fn ell(&self) -> usize {
        self.a.len()
    }

    pub fn complex_blocks(&self) -> usize {
        self.c.len()
    }

    pub fn identity(n: usize, a: Vec<f64>) -> Self {
        WilliamsonFrame {
            s: DMatrix::identity(2 * n, 2 * n),
            m: DMatrix::identity(2 * n, 2 * n),
            a,
            c: vec![],
            d: vec![],
            symplectic_defect: 0.0,
        }
    }

    pub fn to_new(&self, old: &[f64]) -> Vec<f64> {
        (&self.s * DVector::from_column_slice(old)).iter().copied().collect()
    }

    pub fn to_old(&self, new: &[f64]) -> Vec<f64> {
        (&self.m * DVector::from_column_slice(new)).iter().copied().collect()
    }

    /// `p ∘ M`: the jet expressed in the new coordinates.
    pub fn pullback(&self, p: &Jet<f64>) -> Jet<f64> {
        p.linear_substitute(&rows(&self.m))
    }

    /// The `n×n` block `A₀` with `p₂ = ⟨A₀x, ξ⟩` in the new coordinates.
    pub fn a0(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut a0 = DMatrix::zeros(n, n);
        for (j, &a) in self.a.iter().enumerate() {
            a0[(j, j)] = a;
        }
        let l = self.ell();
        for (j, (&c, &d)) in self.c.iter().zip(&self.d).enumerate() {
            let (p, q) = (l + 2 * j, l + 2 * j + 1);
            a0[(p, p)] = c;
            a0[(q, q)] = c;
            a0[(p, q)] = -d;
            a0[(q, p)] = d;
        }
        a0
    }

    /// The model quadratic form `⟨A₀x, ξ⟩` as a jet.
    pub fn normal_form(&self, order: usize) -> Jet<f64> {
        let n = self.n();
        let a0 = self.a0();
        let mut out = Jet::zero(n, order.max(2));
        for i in 0..n {
            for k in 0..n {
                if a0[(i, k)] != 0.0 {
                    // (A₀x)_i ξ_i contains A₀[i,k] x_k ξ_i
                    let mut e = vec![0u16; 2 * n];
                    e[k] += 1;
                    e[n + i] += 1;
                    out.add_term(crate::jet::Monomial::new(e), a0[(i, k)]);
                }
            }
        }
        out
    }

    /// Complex frequencies per coordinate after complexification:
    /// `a_j`, then `c ± i d` for each complex block.
    pub fn frequencies(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = self.a.iter().map(|&a| Complex64::new(a, 0.0)).collect();
        for (&c, &d) in self.c.iter().zip(&self.d) {
            out.push(Complex64::new(c, d));
            out.push(Complex64::new(c, -d));
        }
        out
    }

    pub fn document(&self) -> FrameDocument {
        FrameDocument {
            n: self.n(),
            ell: self.ell(),
            m: self.complex_blocks(),
            a: self.a.clone(),
            c: self.c.clone(),
            d: self.d.clone(),
            s: rows(&self.s),
            symplectic_defect: self.symplectic_defect,
        }
    }
}

/// Largest coefficient by which `pullback(p₂)` differs from the model form.
pub fn normal_form_error(frame: &WilliamsonFrame, p2: &Jet<f64>) -> f64 {
    frame
        .pullback(&p2.homogeneous(2))
        .with_order(2)
        .sub(&frame.normal_form(2))
        .terms()
        .map(|(_, c)| c.abs())
        .fold(0.0, f64::max)
}

fn fix_phase(mut v: DVector<Complex64>) -> DVector<Complex64> {
    let norm = v.norm();
    v /= Complex64::new(norm, 0.0);
    let lead = v
        .iter()
        .find(|z| z.norm() > 1e-8)
        .copied()
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = lead / lead.norm();
    v.map(|z| z / phase)
}

/// Williamson normalization of a purely quadratic hyperbolic `p₂`.
pub fn williamson_normalize(
    p2: &Jet<f64>,
    spec: &SpectrumQuadruples,
) -> Result<WilliamsonFrame, SymplecticError> {
    let n = p2.n();
    if let Some(degree) = p2.terms().map(|(m, _)| m.degree()).find(|&d| d != 2) {
        return Err(SymplecticError::NotQuadratic { degree });
    }
    if !spec.simple {
        let q = spec.quads.iter().find(|q| q.multiplicity > 1).unwrap();
        return Err(SymplecticError::ResonantOrMultipleSpectrum {
            re: q.lambda.re,
            im: q.lambda.im,
            multiplicity: q.multiplicity,
        });
    }
    let l = match &spec.linearization {
        Some(l) => l.clone(),
        None => standard_j(n) * quadratic_hessian(p2),
    };
    if l.nrows() != 2 * n {
        return Err(SymplecticError::DimensionMismatch {
            expected: 2 * n,
            got: l.nrows(),
        });
    }
    if spec.real_count() + 2 * spec.complex_count() != n {
        return Err(SymplecticError::NormalizationFailed {
            detail: format!(
                "spectrum accounts for {} of {n} degrees of freedom",
                spec.real_count() + 2 * spec.complex_count()
            ),
        });
    }
    let lc = l.map(|v| Complex64::new(v, 0.0));
    let id = DMatrix::<Complex64>::identity(2 * n, 2 * n);
    let radius = spec
        .quads
        .iter()
        .map(|q| q.lambda.norm())
        .fold(0.0, f64::max);
    let eigvec = |mu: Complex64| -> Result<DVector<Complex64>, SymplecticError> {
        let (v, smin, snext) = complex_null_vector(&lc - &id * mu);
        if smin > 1e-6 * radius || snext < 1e-7 * radius {
            return Err(SymplecticError::NormalizationFailed {
                detail: format!("eigenvector for {mu} not isolated (sigma {smin:e}, {snext:e})"),
            });
        }
        Ok(fix_phase(v))
    };

    let mut ex: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut exi: Vec<DVector<f64>> = Vec::with_capacity(n);
    let (mut a, mut c, mut d) = (vec![], vec![], vec![]);
    let ordered: Vec<&Quad> = spec
        .quads
        .iter()
        .filter(|q| q.kind == QuadKind::Real)
        .chain(spec.quads.iter().filter(|q| q.kind == QuadKind::ComplexPair))
        .collect();
    for q in ordered {
        let mu = q.lambda;
        let w = eigvec(mu)?;
        let u = eigvec(-mu.conj())?;
        match q.kind {
            QuadKind::Real => {
                ex.push(w.map(|z| z.re));
                exi.push(u.map(|z| z.re));
                a.push(mu.re);
            }
            QuadKind::ComplexPair => {
                ex.push(w.map(|z| z.re));
                ex.push(w.map(|z| -z.im));
                exi.push(u.map(|z| z.re));
                exi.push(u.map(|z| -z.im));
                c.push(mu.re);
                d.push(mu.im);
            }
        }
    }
    let ex = DMatrix::from_columns(&ex);
    let exi = DMatrix::from_columns(&exi);
    let j = standard_j(n);
    let g = ex.transpose() * &j * &exi;
    let ginv = g.clone().try_inverse().ok_or_else(|| SymplecticError::NormalizationFailed {
        detail: "Lagrangian eigenspaces are not in duality".into(),
    })?;
    let exi = exi * ginv;
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (2 * n, n)).copy_from(&ex);
    m.view_mut((0, n), (2 * n, n)).copy_from(&exi);
    // M symplectic ⇒ M⁻¹ = −J Mᵀ J
    let s = -(&j * m.transpose() * &j);
    let defect = symplectic_defect(&s).max(symplectic_defect(&m));
    let frame = WilliamsonFrame {
        s,
        m,
        a,
        c,
        d,
        symplectic_defect: defect,
    };
    if !(defect < 1e-6) {
        return Err(SymplecticError::NormalizationFailed {
            detail: format!("symplectic defect {defect:e}"),
        });
    }
    Ok(frame)
}

/// Fundamental matrix, spectrum and frame of the quadratic part of `p`.
pub fn williamson_from_jet(
    p: &Jet<f64>,
    opts: &LinearOptions,
) -> Result<(FundamentalMatrix, SpectrumQuadruples, WilliamsonFrame), SymplecticError> {
    let hess = quadratic_hessian(p);
    let sv = hess.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin == 0.0 || smax / smin > opts.max_condition {
        return Err(SymplecticError::DegenerateHessian {
            condition: if smin == 0.0 { f64::INFINITY } else { smax / smin },
        });
    }
    let f = FundamentalMatrix::from_hessian(&hess, opts.convention_factor);
    let spec = classify_spectrum(&f, opts)?;
    let frame = williamson_normalize(&p.homogeneous(2), &spec)?;
    Ok((f, spec, frame))
}

/// The complex coordinates that diagonalize each loxodromic block:
/// for a block on indices `(p, q) = (ℓ+2j−1, ℓ+2j)`,
/// `z_q = (x_q + i x_p)/√2`, `z_p = (x_q − i x_p)/√2`,
/// `ζ_q = (ξ_q − i ξ_p)/√2`, `ζ_p = (ξ_q + i ξ_p)/√2`.
/// Real blocks are left alone.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSymplecticMap {
    /// `new = C · old`.
    pub c: DMatrix<Complex64>,
    pub c_inv: DMatrix<Complex64>,
    /// Per-coordinate frequencies in the new coordinates.
    pub lambda: Vec<Complex64>,
}

pub fn complexify(frame: &WilliamsonFrame) -> Result<ComplexSymplecticMap, SymplecticError> {
    if frame.complex_blocks() == 0 {
        return Err(SymplecticError::NoComplexBlocks);
    }
    let n = frame.n();
    let one = Complex64::new(1.0, 0.0);
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let ih = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
    let mut c = DMatrix::<Complex64>::identity(2 * n, 2 * n);
    for j in 0..frame.complex_blocks() {
        let (p, q) = (frame.ell() + 2 * j, frame.ell() + 2 * j + 1);
        for (off, sign) in [(0, one), (n, -one)] {
            let (p, q) = (p + off, q + off);
            c[(p, p)] = -ih * sign;
            c[(p, q)] = h;
            c[(q, p)] = ih * sign;
            c[(q, q)] = h;
        }
    }
    let c_inv = c.clone().try_inverse().expect("unitary block map");
    Ok(ComplexSymplecticMap {
        c,
        c_inv,
        lambda: frame.frequencies(),
    })
}

impl ComplexSymplecticMap {
    pub fn apply(&self, old: &[Complex64]) -> Vec<Complex64> {
        (&self.c * DVector::from_column_slice(old)).iter().copied().collect()
    }

    pub fn apply_inverse(&self, new: &[Complex64]) -> Vec<Complex64> {
        (&self.c_inv * DVector::from_column_slice(new)).iter().copied().collect()
    }

    /// `p ∘ C⁻¹`: a real jet written in the complex coordinates.
    pub fn to_complex(&self, p: &Jet<f64>) -> Jet<Complex64> {
        let rows: Vec<Vec<Complex64>> = (0..self.c_inv.nrows())
            .map(|i| self.c_inv.row(i).iter().copied().collect())
            .collect();
        p.map_coeffs(|&v| Complex64::new(v, 0.0)).linear_substitute(&rows)
    }

    /// `f ∘ C` with the imaginary parts checked against `tol` (relative).
    pub fn to_real(&self, f: &Jet<Complex64>, tol: f64) -> Result<Jet<f64>, f64> {
        let rows: Vec<Vec<Complex64>> = (0..self.c.nrows())
            .map(|i| self.c.row(i).iter().copied().collect())
            .collect();
        let back = f.linear_substitute(&rows);
        let scale = back.terms().map(|(_, z)| z.norm()).fold(0.0, f64::max);
        let worst = back.terms().map(|(_, z)| z.im.abs()).fold(0.0, f64::max);
        if worst > tol * scale.max(1.0) {
            return Err(worst);
        }
        Ok(back.map_coeffs(|z| z.re))
    }

    /// `‖CᵀJC − J‖∞`: the complex bilinear symplectic form is preserved.
    pub fn symplectic_defect(&self) -> f64 {
        let n = self.c.nrows() / 2;
        let j = standard_j(n).map(|v| Complex64::new(v, 0.0));
        (self.c.transpose() * &j * &self.c - j)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// `B₀` with `‖x‖₀² = ⟨B₀x, x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropicNorm {
    pub b0: DMatrix<f64>,
}

impl AnisotropicNorm {
    pub fn dim(&self) -> usize {
        self.b0.nrows()
    }

    /// Plain Euclidean scaling `B₀ = s·I`.
    pub fn scalar(n: usize, s: f64) -> Self {
        AnisotropicNorm {
            b0: DMatrix::identity(n, n) * s,
        }
    }

    /// `⟨B₀v, v⟩` without dimension checks.
    #[inline]
    pub fn quad(&self, v: &[f64]) -> f64 {
        let n = v.len();
        let mut s = 0.0;
        for (i, vi) in v.iter().enumerate() {
            let row: f64 = (0..n).map(|k| self.b0[(i, k)] * v[k]).sum();
            s += row * vi;
        }
        s
    }

    /// Smallest eigenvalue of `B₀`, so that `|v|² ≤ ‖v‖₀²/μ_min`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.b0
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `B₀v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        (&self.b0 * DVector::from_column_slice(v)).iter().copied().collect()
    }
}

/// `‖v‖₀ = √⟨B₀v, v⟩`.
pub fn anorm(b: &AnisotropicNorm, v: &[f64]) -> Result<f64, SymplecticError> {
    if v.len() != b.dim() {
        return Err(SymplecticError::DimensionMismatch {
            expected: b.dim(),
            got: v.len(),
        });
    }
    Ok(b.quad(v).max(0.0).sqrt())
}

/// Recognizes `A₀` made of `a` scalars and `[[c, −d], [d, c]]` blocks along the
/// diagonal, returning the closed-form `B₀` when it does.
fn block_lyapunov(a0: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a0.nrows();
    let mut b = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let off_right = i + 1 < n && a0[(i, i + 1)] != 0.0;
        if off_right {
            let (c, d) = (a0[(i, i)], a0[(i + 1, i)]);
            if a0[(i + 1, i + 1)] != c || a0[(i, i + 1)] != -d {
                return None;
            }
            for r in 0..n {
                if r != i && r != i + 1 && (a0[(r, i)] != 0.0 || a0[(r, i + 1)] != 0.0) {
                    return None;
                }
                if r != i && r != i + 1 && (a0[(i, r)] != 0.0 || a0[(i + 1, r)] != 0.0) {
                    return None;
                }
            }
            b[(i, i)] = 1.0 / (2.0 * c);
            b[(i + 1, i + 1)] = 1.0 / (2.0 * c);
            i += 2;
        } else {
            for r in 0..n {
                if r != i && (a0[(r, i)] != 0.0 || a0[(i, r)] != 0.0) {
                    return None;
                }
            }
            b[(i, i)] = 1.0 / (2.0 * a0[(i, i)]);
            i += 1;
        }
    }
    Some(b)
}

/// Solves `A₀ᵀB₀ + B₀A₀ = I`, i.e. `B₀ = ∫₀^∞ e^{−sA₀ᵀ} e^{−sA₀} ds`.
pub fn lyapunov_b0(a0: &DMatrix<f64>) -> Result<AnisotropicNorm, SymplecticError> {
    let n = a0.nrows();
    if a0.ncols() != n {
        return Err(SymplecticError::DimensionMismatch {
            expected: n,
            got: a0.ncols(),
        });
    }
    for z in a0.clone().complex_eigenvalues().iter() {
        if z.re <= 0.0 {
            return Err(SymplecticError::UnstableA0 { re: z.re, im: z.im });
        }
    }
    let b0 = match block_lyapunov(a0) {
        Some(b) => b,
        None => {
            // column-major vec: vec(A₀ᵀB) = (I⊗A₀ᵀ)vec B, vec(BA₀) = (A₀ᵀ⊗I)vec B
            let id = DMatrix::<f64>::identity(n, n);
            let at = a0.transpose();
            let k = id.kronecker(&at) + at.kronecker(&id);
            let rhs = DVector::from_iterator(n * n, id.iter().copied());
            let sol = k.lu().solve(&rhs).ok_or(SymplecticError::UnstableA0 {
                re: 0.0,
                im: 0.0,
            })?;
            let b = DMatrix::from_column_slice(n, n, sol.as_slice());
            (&b + b.transpose()) * 0.5
        }
    };
    Ok(AnisotropicNorm { b0 })
}

/// Random symplectic matrix built from block generators
/// `diag(A, A⁻ᵀ)`, `[[I, B], [0, I]]`, `[[I, 0], [C, I]]` with `B, C` symmetric.
pub fn random_symplectic<R: Rng + ?Sized>(n: usize, rng: &mut R, scale: f64) -> DMatrix<f64> {
    let id = DMatrix::<f64>::identity(n, n);
    let sym = |rng: &mut R| {
        let m = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
        (&m + m.transpose()) * 0.5
    };
    let a = loop {
        let a = &id + DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
        if a.determinant().abs() > 0.2 {
            break a;
        }
    };
    let a_inv_t = a.clone().try_inverse().unwrap().transpose();
    let mut g1 = DMatrix::zeros(2 * n, 2 * n);
    g1.view_mut((0, 0), (n, n)).copy_from(&a);
    g1.view_mut((n, n), (n, n)).copy_from(&a_inv_t);
    let mut g2 = DMatrix::<f64>::identity(2 * n, 2 * n);
    g2.view_mut((0, n), (n, n)).copy_from(&sym(rng));
    let mut g3 = DMatrix::<f64>::identity(2 * n, 2 * n);
    g3.view_mut((n, 0), (n, n)).copy_from(&sym(rng));
    g1 * g2 * g3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth::Hamiltonian;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn jet(n: usize, terms: Vec<(Vec<u16>, Vec<u16>, f64)>) -> Jet<f64> {
        Jet::from_terms(n, 2, terms).unwrap()
    }

    #[test]
    fn saddle_fundamental_matrix() {
        let h = Hamiltonian::from_jet(jet(1, vec![(vec![1], vec![1], 1.0)]));
        let opts = LinearOptions {
            convention_factor: 1.0,
            ..Default::default()
        };
        let f = fundamental_matrix(&h, &PhasePoint::origin(1), &opts).unwrap();
        assert_eq!(f.f, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert!(f.hamiltonian_defect() < 1e-12);
    }

    #[test]
    fn xi_squared_minus_x_squared() {
        let p = jet(1, vec![(vec![0], vec![2], 1.0), (vec![2], vec![0], -1.0)]);
        let f = FundamentalMatrix::from_hessian(&quadratic_hessian(&p), 1.0);
        assert_eq!(f.f, DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0]));
        let spec = classify_spectrum(&f, &LinearOptions::default()).unwrap();
        assert_eq!(spec.quads.len(), 1);
        assert_abs_diff_eq!(spec.quads[0].lambda.re, 2.0, epsilon = 1e-12);

        let frame = williamson_normalize(&p, &spec).unwrap();
        assert_abs_diff_eq!(frame.a[0], 2.0, epsilon = 1e-12);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let want = DMatrix::from_row_slice(2, 2, &[r, r, -r, r]);
        assert!((&frame.s - want).amax() < 1e-12, "{}", frame.s);
        assert!(normal_form_error(&frame, &p) < 1e-12);
    }

    #[test]
    fn already_normal_gives_identity() {
        let p = jet(1, vec![(vec![1], vec![1], 1.0)]);
        let (_, _, frame) = williamson_from_jet(&p, &LinearOptions::default()).unwrap();
        assert!((&frame.s - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert_eq!(frame.a, vec![1.0]);
    }

    #[test]
    fn elliptic_rejected() {
        let p = jet(1, vec![(vec![2], vec![0], 0.5), (vec![0], vec![2], 0.5)]);
        let opts = LinearOptions {
            convention_factor: 1.0,
            ..Default::default()
        };
        let h = Hamiltonian::from_jet(p);
        let f = fundamental_matrix(&h, &PhasePoint::origin(1), &opts).unwrap();
        assert_eq!(f.f, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]));
        assert!(matches!(
            classify_spectrum(&f, &opts),
            Err(SymplecticError::PurelyImaginarySpectrum { .. })
        ));
    }

    #[test]
    fn not_critical_and_degenerate() {
        let h = Hamiltonian::from_jet(
            Jet::from_terms(1, 2, vec![(vec![1], vec![0], 0.1), (vec![1], vec![1], 1.0)]).unwrap(),
        );
        assert!(matches!(
            fundamental_matrix(&h, &PhasePoint::origin(1), &LinearOptions::default()),
            Err(SymplecticError::NotCriticalPoint { .. })
        ));
        let h = Hamiltonian::from_jet(jet(1, vec![(vec![2], vec![0], 1.0)]));
        assert!(matches!(
            fundamental_matrix(&h, &PhasePoint::origin(1), &LinearOptions::default()),
            Err(SymplecticError::DegenerateHessian { .. })
        ));
    }

    #[test]
    fn loxodromic_block() {
        // c = d = 1 written directly in model form
        let p = jet(
            2,
            vec![
                (vec![1, 0], vec![1, 0], 1.0),
                (vec![0, 1], vec![0, 1], 1.0),
                (vec![1, 0], vec![0, 1], 1.0),
                (vec![0, 1], vec![1, 0], -1.0),
            ],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_symplectic(2, &mut rng, 0.5);
        let rows: Vec<Vec<f64>> = (0..4).map(|i| t.row(i).iter().copied().collect()).collect();
        let disguised = p.linear_substitute(&rows);
        let (_, spec, frame) = williamson_from_jet(&disguised, &LinearOptions::default()).unwrap();
        assert_eq!(spec.complex_count(), 1);
        assert_eq!((frame.ell(), frame.complex_blocks()), (0, 1));
        assert_abs_diff_eq!(frame.c[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(frame.d[0], 1.0, epsilon = 1e-10);
        assert!(frame.symplectic_defect < 1e-10);
        assert!(normal_form_error(&frame, &disguised) < 1e-10);
    }

    #[test]
    fn complexify_block() {
        let frame = WilliamsonFrame {
            s: DMatrix::identity(4, 4),
            m: DMatrix::identity(4, 4),
            a: vec![],
            c: vec![1.0],
            d: vec![1.0],
            symplectic_defect: 0.0,
        };
        let map = complexify(&frame).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let w = map.apply(&[one, zero, zero, zero]);
        assert!((w[0] - Complex64::new(0.0, -r)).norm() < 1e-15);
        assert!((w[1] - Complex64::new(0.0, r)).norm() < 1e-15);
        assert!(w[2].norm() == 0.0 && w[3].norm() == 0.0);
        assert!(map.symplectic_defect() < 1e-12);
        let back = map.apply_inverse(&w);
        assert!((back[0] - one).norm() < 1e-14);

        // p₂ becomes (1+i) z1ζ1 + (1−i) z2ζ2
        let p = frame.normal_form(2);
        let pc = map.to_complex(&p);
        assert!((pc.coeff_of(&[1, 0], &[1, 0]) - Complex64::new(1.0, 1.0)).norm() < 1e-14);
        assert!((pc.coeff_of(&[0, 1], &[0, 1]) - Complex64::new(1.0, -1.0)).norm() < 1e-14);
        assert_eq!(pc.len(), 2);
        let real = map.to_real(&pc, 1e-12).unwrap();
        assert!(real.sub(&p).terms().all(|(_, c)| c.abs() < 1e-14));
        assert!(complexify(&WilliamsonFrame::identity(1, vec![1.0])).is_err());
    }

    #[test]
    fn lyapunov_closed_forms() {
        let b = lyapunov_b0(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 4.0])))
            .unwrap();
        assert_eq!(b.b0, DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25, 0.125])));
        let rot = DMatrix::from_row_slice(2, 2, &[1.0, -3.0, 3.0, 1.0]);
        assert_eq!(lyapunov_b0(&rot).unwrap().b0, DMatrix::identity(2, 2) * 0.5);
        let general = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 2.0]);
        let b = lyapunov_b0(&general).unwrap().b0;
        let resid = general.transpose() * &b + &b * &general - DMatrix::identity(2, 2);
        assert!(resid.amax() < 1e-12);
        assert!(matches!(
            lyapunov_b0(&DMatrix::from_row_slice(1, 1, &[-1.0])),
            Err(SymplecticError::UnstableA0 { .. })
        ));
    }

    #[test]
    fn anorm_values() {
        let b = AnisotropicNorm::scalar(2, 0.5);
        assert_abs_diff_eq!(anorm(&b, &[2.0, 0.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-15);
        let b = AnisotropicNorm {
            b0: DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.25])),
        };
        assert_abs_diff_eq!(anorm(&b, &[1.0, 2.0]).unwrap(), 1.5f64.sqrt(), epsilon = 1e-15);
        assert!(anorm(&b, &[1.0]).is_err());
    }

    #[test]
    fn random_symplectic_is_symplectic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..4 {
            let m = random_symplectic(n, &mut rng, 1.0);
            assert!(symplectic_defect(&m) < 1e-12);
        }
    }
}
