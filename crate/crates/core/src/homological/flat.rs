use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::jet::Jet;
use crate::smooth::{Bumped, CompiledPoly, PhaseFunction, RadialBump};

/// `|g(ρ)| ≤ c_flat·|ρ|^{n_flat}` on the chart (Euclidean `|ρ|`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatCertificate {
    pub n_flat: u32,
    pub c_flat: f64,
}

/// A right-hand side vanishing to finite order `n_flat` at the origin.
#[derive(Clone)]
pub struct FlatFunction {
    func: Arc<dyn PhaseFunction>,
    cert: FlatCertificate,
}

impl std::fmt::Debug for FlatFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FlatFunction")
            .field("dof", &self.func.dof())
            .field("cert", &self.cert)
            .finish()
    }
}

/// Outcome of the log-log slope test along rays into the origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeReport {
    pub min_slope: f64,
    pub rays: usize,
    /// Every sample obeyed `|g| ≤ C‖ρ‖^N`.
    pub bound_holds: bool,
    pub passed: bool,
}

struct Zero(usize);

impl PhaseFunction for Zero {
    fn dof(&self) -> usize {
        self.0
    }
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        vec![0.0; y.len()]
    }
    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(y.len(), y.len())
    }
}

struct Combination {
    terms: Vec<(f64, Arc<dyn PhaseFunction>)>,
}

impl PhaseFunction for Combination {
    fn dof(&self) -> usize {
        self.terms[0].1.dof()
    }
    fn value(&self, y: &[f64]) -> f64 {
        self.terms.iter().map(|(a, f)| a * f.value(y)).sum()
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        for (a, f) in &self.terms {
            for (gi, fi) in g.iter_mut().zip(f.gradient(y)) {
                *gi += a * fi;
            }
        }
        g
    }
    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(y.len(), y.len());
        for (a, f) in &self.terms {
            h += f.hessian(y) * *a;
        }
        h
    }
}

impl FlatFunction {
    pub fn new(func: Arc<dyn PhaseFunction>, cert: FlatCertificate) -> Self {
        FlatFunction { func, cert }
    }

    pub fn zero(n: usize, n_flat: u32) -> Self {
        FlatFunction {
            func: Arc::new(Zero(n)),
            cert: FlatCertificate {
                n_flat,
                c_flat: 0.0,
            },
        }
    }

    /// `coeff·x^α ξ^β·Φ(|y|²/R²)`, flat of order `|α| + |β|` with `C = |coeff|`.
    pub fn monomial_bump(
        alpha: &[u16],
        beta: &[u16],
        coeff: f64,
        radius: f64,
        bump_order: usize,
    ) -> Self {
        let n = alpha.len();
        let deg: u32 = alpha.iter().chain(beta).map(|&k| k as u32).sum();
        let jet = Jet::monomial(n, deg.max(2) as usize, alpha, beta, coeff);
        let func = Bumped {
            inner: CompiledPoly::new(&jet),
            bump: RadialBump::new(radius, bump_order),
        };
        FlatFunction {
            func: Arc::new(func),
            cert: FlatCertificate {
                n_flat: deg,
                c_flat: coeff.abs(),
            },
        }
    }

    /// `a·f + b·g`; the certificate is the weaker one, valid on `|ρ| ≤ 1`.
    pub fn combine(a: f64, f: &FlatFunction, b: f64, g: &FlatFunction) -> Self {
        FlatFunction {
            func: Arc::new(Combination {
                terms: vec![(a, f.func.clone()), (b, g.func.clone())],
            }),
            cert: FlatCertificate {
                n_flat: f.cert.n_flat.min(g.cert.n_flat),
                c_flat: a.abs() * f.cert.c_flat + b.abs() * g.cert.c_flat,
            },
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        FlatFunction::combine(s, self, 0.0, &FlatFunction::zero(self.dof(), self.cert.n_flat))
    }

    pub fn certificate(&self) -> FlatCertificate {
        self.cert
    }

    pub fn function(&self) -> &Arc<dyn PhaseFunction> {
        &self.func
    }

    /// Fits `log|g|` against `log|ρ|` along `rays` random directions at radii
    /// `r_max·2^{-k}`, `k = 0..8`. Directions where `g` vanishes identically
    /// are skipped.
    pub fn validate_certificate(&self, rays: usize, r_max: f64, seed: u64) -> SlopeReport {
        let d = 2 * self.dof();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut min_slope = f64::INFINITY;
        let mut used = 0;
        let mut bound_holds = true;
        for _ in 0..rays {
            let mut dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.iter_mut().for_each(|v| *v /= norm);
            let mut pts = Vec::new();
            for k in 0..8 {
                let r = r_max * 0.5f64.powi(k);
                let y: Vec<f64> = dir.iter().map(|v| v * r).collect();
                let g = self.func.value(&y).abs();
                if g > self.cert.c_flat * r.powi(self.cert.n_flat as i32) * (1.0 + 1e-12) {
                    bound_holds = false;
                }
                if g > 0.0 {
                    pts.push((r.ln(), g.ln()));
                }
            }
            if pts.len() < 2 {
                continue;
            }
            used += 1;
            let m = pts.len() as f64;
            let (sx, sy) = pts
                .iter()
                .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
            let (mx, my) = (sx / m, sy / m);
            let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
                (a + (x - mx) * (y - my), b + (x - mx) * (x - mx))
            });
            min_slope = min_slope.min(num / den);
        }
        let passed = bound_holds && (used == 0 || min_slope >= self.cert.n_flat as f64 - 0.1);
        SlopeReport {
            min_slope,
            rays: used,
            bound_holds,
            passed,
        }
    }
}

impl PhaseFunction for FlatFunction {
    fn dof(&self) -> usize {
        self.func.dof()
    }
    fn value(&self, y: &[f64]) -> f64 {
        self.func.value(y)
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        self.func.gradient(y)
    }
    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        self.func.hessian(y)
    }
}
