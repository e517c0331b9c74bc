//! Homotopy `q_s = q₀ + s·r` and the conjugation `κ_s` with `q_s∘κ_s = q₀`.
//!
//! Differentiating `q_s∘κ_s = q₀` in `s` with `∂_sκ_s = H_{f_s}∘κ_s` gives
//! `r + ⟨∇q_s, H_{f_s}⟩ = 0`, i.e. `H_{q_s} f_s = r` with the bracket
//! convention used throughout this crate.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::flow::{estimate_gronwall, FlowError, GronwallOptions, RegionSpec};
use crate::homological::{
    make_partition, FlatFunction, HomologicalError, HomologicalOptions, HomologicalSolver,
};
use crate::jet::{action_form, resonance_scan, Jet};
use crate::smooth::{CompiledPoly, PhaseFunction};
use crate::symplectic::{lyapunov_b0, standard_j, symplectic_defect};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeformationError {
    #[error("q0 is not an admissible integrable part: {detail}")]
    InvalidQ0 { detail: String },
    #[error("homological solve failed at s = {s}: {source}")]
    HomologicalFailure {
        s: f64,
        #[source]
        source: HomologicalError,
    },
    #[error("conjugacy residual grew over the last s-nodes: {residuals:?}")]
    ResidualDiverging { residuals: Vec<f64> },
    #[error("symplecticity defect {defect:e} exceeds {tol:e} at s = {s}")]
    SymplecticityLost { s: f64, defect: f64, tol: f64 },
    #[error("s-step collapsed to {ds:e} at s = {s}")]
    StepCollapse { s: f64, ds: f64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeformationOptions {
    /// Absolute tolerance of each homological solve.
    pub quad_tol: f64,
    /// Local error of an `s`-step relative to the size of that step's displacement.
    pub ode_tol: f64,
    /// Initial uniform nodes; also the largest allowed `Δs` is `1/s_steps`.
    pub s_steps: usize,
    pub cutoff_order: usize,
    pub symp_tol: f64,
    pub gronwall_samples: usize,
    pub seed: u64,
}

impl Default for DeformationOptions {
    fn default() -> Self {
        DeformationOptions {
            quad_tol: 1e-14,
            ode_tol: 1e-3,
            s_steps: 8,
            cutoff_order: 3,
            symp_tol: 1e-6,
            gronwall_samples: 16,
            seed: 0,
        }
    }
}

/// `q₀` in action form, a flat remainder `r`, and the chart they live on.
#[derive(Clone, Debug)]
pub struct DeformationProblem {
    pub q0: Jet<f64>,
    pub r: FlatFunction,
    pub region: RegionSpec,
    pub lambda: Vec<f64>,
    pub opts: DeformationOptions,
}

impl DeformationProblem {
    /// Validates `q₀` and builds the region with `B₀` from the Lyapunov
    /// equation of `A₀ = diag(λ)`.
    pub fn new(
        q0: Jet<f64>,
        r: FlatFunction,
        delta: f64,
        opts: DeformationOptions,
    ) -> Result<Self, DeformationError> {
        let n = q0.n();
        if r.dof() != n {
            return Err(DeformationError::DimensionMismatch {
                expected: n,
                got: r.dof(),
            });
        }
        let invalid = |detail: String| DeformationError::InvalidQ0 { detail };
        action_form(&q0).map_err(|e| invalid(e.to_string()))?;
        let mut lambda = Vec::with_capacity(n);
        for j in 0..n {
            let mut e = vec![0u16; n];
            e[j] = 1;
            let l = q0.coeff_of(&e, &e);
            if l <= 0.0 {
                return Err(invalid(format!(
                    "frequency lambda_{} = {l} is not positive",
                    j + 1
                )));
            }
            lambda.push(l);
        }
        let lc: Vec<Complex64> = lambda.iter().map(|&l| Complex64::new(l, 0.0)).collect();
        let res = resonance_scan(&lc, q0.order().max(2), 1e-10);
        if !res.is_empty() {
            return Err(invalid(format!("resonant frequencies: {:?}", res.resonances)));
        }
        let a0 = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambda.clone()));
        let b0 = lyapunov_b0(&a0).map_err(|e| invalid(e.to_string()))?;
        Ok(DeformationProblem {
            q0,
            r,
            region: RegionSpec::new(delta, b0),
            lambda,
            opts,
        })
    }

    pub fn n(&self) -> usize {
        self.q0.n()
    }

    pub fn lambda_1(&self) -> f64 {
        self.lambda.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn lambda_n(&self) -> f64 {
        self.lambda.iter().copied().fold(0.0, f64::max)
    }

    pub fn q0_function(&self) -> CompiledPoly {
        CompiledPoly::new(&self.q0)
    }

    /// `q_s = q₀ + s·r`.
    pub fn q_s(&self, s: f64) -> Interpolated {
        Interpolated {
            q0: CompiledPoly::new(&self.q0),
            r: self.r.function().clone(),
            s,
        }
    }
}

/// `q₀ + s·r` as a phase function.
#[derive(Clone)]
pub struct Interpolated {
    q0: CompiledPoly,
    r: Arc<dyn PhaseFunction>,
    s: f64,
}

impl PhaseFunction for Interpolated {
    fn dof(&self) -> usize {
        self.q0.dof()
    }
    fn value(&self, y: &[f64]) -> f64 {
        let q = self.q0.value(y);
        if self.s == 0.0 {
            q
        } else {
            q + self.s * self.r.value(y)
        }
    }
    fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = self.q0.gradient(y);
        if self.s != 0.0 {
            for (a, b) in g.iter_mut().zip(self.r.gradient(y)) {
                *a += self.s * b;
            }
        }
        g
    }
    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let h = self.q0.hessian(y);
        if self.s == 0.0 {
            h
        } else {
            h + self.r.hessian(y) * self.s
        }
    }
}

/// Generator field `H_{f_s}` by centered differences of quadrature values.
struct Generator<'a> {
    prob: &'a DeformationProblem,
    slack: f64,
    fd_step: f64,
}

struct FieldValue {
    v: Vec<f64>,
    /// Bound on `|v_computed − v|` from quadrature noise and truncation.
    err: f64,
}

impl Generator<'_> {
    fn field(&self, s: f64, y: &[f64]) -> Result<FieldValue, DeformationError> {
        let prob = self.prob;
        let n = prob.n();
        let q = prob.q_s(s);
        let cut = make_partition(prob.opts.cutoff_order, prob.region.b0.clone())
            .map_err(|e| DeformationError::HomologicalFailure { s, source: e })?;
        let solver = HomologicalSolver::new(
            &q,
            prob.region.clone(),
            cut,
            prob.lambda_1(),
            self.slack,
            HomologicalOptions::with_tol(prob.opts.quad_tol),
        );
        let fail = |source| DeformationError::HomologicalFailure { s, source };
        let nf = prob.r.certificate().n_flat as f64;
        let ymag = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        let mut grad = vec![0.0; 2 * n];
        let mut err: f64 = 0.0;
        for i in 0..2 * n {
            let h = self.fd_step * y[i].abs().max(1.0);
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[i] += h;
            ym[i] -= h;
            let fp = solver.solve(&prob.r, &yp).map_err(fail)?;
            let fm = solver.solve(&prob.r, &ym).map_err(fail)?;
            grad[i] = (fp.value - fm.value) / (2.0 * h);
            // noise of the two values, plus h²f'''/6 for a degree-N homogeneous profile
            let noise = (fp.error_estimate() + fm.error_estimate()) / (2.0 * h);
            let fmag = fp.value.abs().max(fm.value.abs());
            let trunc = h * h * nf.powi(3) * fmag / (6.0 * ymag.max(h).powi(3));
            err = err.max(noise + trunc);
        }
        let mut v = Vec::with_capacity(2 * n);
        v.extend_from_slice(&grad[n..]);
        v.extend(grad[..n].iter().map(|g| -g));
        Ok(FieldValue {
            v,
            err: err * (2.0 * n as f64).sqrt(),
        })
    }

    fn fields(&self, s: f64, ys: &[Vec<f64>]) -> Result<Vec<FieldValue>, DeformationError> {
        ys.par_iter().map(|y| self.field(s, y)).collect()
    }
}

/// Per-node diagnostics of the `s`-march.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub s: f64,
    pub ds: f64,
    /// `max |q_s∘κ_s − q₀|` on the grid.
    pub residual: f64,
    /// `residual / (s·max|r|)`; below 1 means the map helps.
    pub relative_residual: f64,
    pub generator_norm: f64,
    pub generator_error: f64,
    pub step_error: f64,
    pub symplectic_defect: f64,
}

/// Quantile summary of a nonnegative field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Stats {
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub p99: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        if values.is_empty() {
            return Stats {
                max: 0.0,
                mean: 0.0,
                median: 0.0,
                p90: 0.0,
                p99: 0.0,
            };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        Stats {
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: q(0.5),
            p90: q(0.9),
            p99: q(0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugacyReport {
    pub residual: Stats,
    pub baseline: Stats,
    /// `baseline.max / residual.max` (∞ when the residual vanishes).
    pub reduction: f64,
    pub points: usize,
}

/// Any point map on the chart.
pub trait PointMap: Sync {
    fn map(&self, rho: &[f64]) -> Result<Vec<f64>, DeformationError>;
}

pub struct Identity;

impl PointMap for Identity {
    fn map(&self, rho: &[f64]) -> Result<Vec<f64>, DeformationError> {
        Ok(rho.to_vec())
    }
}

/// `|p∘κ − q₀|` on `grid` against the uncorrected `|p − q₀|`.
pub fn verify_conjugacy(
    p: &dyn PhaseFunction,
    kappa: &dyn PointMap,
    q0: &dyn PhaseFunction,
    grid: &[Vec<f64>],
) -> Result<ConjugacyReport, DeformationError> {
    let images: Result<Vec<Vec<f64>>, DeformationError> =
        grid.par_iter().map(|y| kappa.map(y)).collect();
    Ok(conjugacy_from_images(p, q0, grid, &images?))
}

fn conjugacy_from_images(
    p: &dyn PhaseFunction,
    q0: &dyn PhaseFunction,
    grid: &[Vec<f64>],
    images: &[Vec<f64>],
) -> ConjugacyReport {
    let (res, base): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .zip(images)
        .map(|(y, k)| {
            let q = q0.value(y);
            ((p.value(k) - q).abs(), (p.value(y) - q).abs())
        })
        .unzip();
    let residual = Stats::of(&res);
    let baseline = Stats::of(&base);
    let reduction = if residual.max == 0.0 {
        f64::INFINITY
    } else {
        baseline.max / residual.max
    };
    ConjugacyReport {
        residual,
        baseline,
        reduction,
        points: grid.len(),
    }
}

/// `κ₁` as the composition of the accepted Bogacki–Shampine steps in `s`;
/// applying it to a point replays exactly those steps.
#[derive(Clone)]
pub struct Kappa1 {
    prob: DeformationProblem,
    slack: f64,
    fd_step: f64,
    nodes: Vec<f64>,
}

impl Kappa1 {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    fn generator(&self) -> Generator<'_> {
        Generator {
            prob: &self.prob,
            slack: self.slack,
            fd_step: self.fd_step,
        }
    }

    /// `(κ₁(ρ), error estimate)`.
    pub fn apply_with_error(&self, rho: &[f64]) -> Result<(Vec<f64>, f64), DeformationError> {
        if self.nodes.len() < 2 {
            return Ok((rho.to_vec(), 0.0));
        }
        let gen = self.generator();
        let ys = vec![rho.to_vec()];
        let mut k1 = gen.fields(self.nodes[0], &ys)?;
        let mut state = ys;
        let mut err = 0.0;
        for w in self.nodes.windows(2) {
            let step = bs3_step(&gen, w[0], w[1] - w[0], &state, &k1)?;
            state = step.y;
            err += step.err[0] + step.gen_err[0];
            k1 = step.k4;
        }
        Ok((state.pop().expect("one point"), err))
    }
}

impl PointMap for Kappa1 {
    fn map(&self, rho: &[f64]) -> Result<Vec<f64>, DeformationError> {
        self.apply_with_error(rho).map(|(y, _)| y)
    }
}

/// Everything `deform` produces.
pub struct ConjugacyResult {
    pub kappa1: Kappa1,
    pub grid: Vec<Vec<f64>>,
    pub images: Vec<Vec<f64>>,
    /// Per grid point: accumulated step error plus generator error.
    pub error_estimates: Vec<f64>,
    pub nodes: Vec<NodeReport>,
    pub report: ConjugacyReport,
    /// Gronwall slack of `q_s` at `s = 0` and `s = 1`.
    pub slack: [f64; 2],
    pub decay_margin: f64,
}

impl ConjugacyResult {
    pub fn kappa_error_estimate(&self) -> f64 {
        self.error_estimates.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_symplectic_defect(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| n.symplectic_defect)
            .fold(0.0, f64::max)
    }

    /// CSV: point, image, residual and baseline per grid point.
    pub fn residual_csv(&self) -> String {
        let n = self.kappa1.prob.n();
        let mut head: Vec<String> = Vec::new();
        for pre in ["", "k"] {
            head.extend((1..=n).map(|i| format!("{pre}x{i}")));
            head.extend((1..=n).map(|i| format!("{pre}xi{i}")));
        }
        head.push("residual".into());
        head.push("baseline".into());
        let mut out = head.join(",");
        out.push('\n');
        let p = self.kappa1.prob.q_s(1.0);
        let q0 = self.kappa1.prob.q0_function();
        for (y, k) in self.grid.iter().zip(&self.images) {
            let q = q0.value(y);
            let row: Vec<String> = y
                .iter()
                .chain(k)
                .map(|v| format!("{v:e}"))
                .chain([
                    format!("{:e}", (p.value(k) - q).abs()),
                    format!("{:e}", (p.value(y) - q).abs()),
                ])
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

struct Bs3 {
    y: Vec<Vec<f64>>,
    k4: Vec<FieldValue>,
    err: Vec<f64>,
    gen_err: Vec<f64>,
}

fn bs3_step(
    gen: &Generator<'_>,
    s: f64,
    ds: f64,
    y: &[Vec<f64>],
    k1: &[FieldValue],
) -> Result<Bs3, DeformationError> {
    let shift = |base: &[Vec<f64>], k: &[FieldValue], c: f64| -> Vec<Vec<f64>> {
        base.iter()
            .zip(k)
            .map(|(b, f)| b.iter().zip(&f.v).map(|(a, v)| a + c * v).collect())
            .collect()
    };
    let k2 = gen.fields(s + 0.5 * ds, &shift(y, k1, 0.5 * ds))?;
    let k3 = gen.fields(s + 0.75 * ds, &shift(y, &k2, 0.75 * ds))?;
    let y1: Vec<Vec<f64>> = (0..y.len())
        .map(|p| {
            (0..y[p].len())
                .map(|i| {
                    y[p][i]
                        + ds * (2.0 / 9.0 * k1[p].v[i]
                            + 1.0 / 3.0 * k2[p].v[i]
                            + 4.0 / 9.0 * k3[p].v[i])
                })
                .collect()
        })
        .collect();
    let k4 = gen.fields(s + ds, &y1)?;
    let mut err = Vec::with_capacity(y.len());
    let mut gen_err = Vec::with_capacity(y.len());
    for p in 0..y.len() {
        let e = (0..y[p].len())
            .map(|i| {
                (ds * (-5.0 / 72.0 * k1[p].v[i] + 1.0 / 12.0 * k2[p].v[i] + 1.0 / 9.0 * k3[p].v[i]
                    - 1.0 / 8.0 * k4[p].v[i]))
                    .abs()
            })
            .fold(0.0, f64::max);
        err.push(e);
        let ge = 2.0 / 9.0 * k1[p].err + 1.0 / 3.0 * k2[p].err + 4.0 / 9.0 * k3[p].err;
        gen_err.push(ds.abs() * ge);
    }
    Ok(Bs3 {
        y: y1,
        k4,
        err,
        gen_err,
    })
}

const PROBE_EPS: f64 = 1e-4;

/// Finite-difference Jacobian from the `2·2n` shifted copies of a probe.
fn probe_defect(images: &[Vec<f64>], n: usize) -> f64 {
    let d = 2 * n;
    let mut k = DMatrix::zeros(d, d);
    for j in 0..d {
        let (p, m) = (&images[2 * j], &images[2 * j + 1]);
        for i in 0..d {
            k[(i, j)] = (p[i] - m[i]) / (2.0 * PROBE_EPS);
        }
    }
    symplectic_defect(&k)
}

/// Marches `κ_s` from `κ₀ = id` to `κ₁` on `grid`, with `probes` carried
/// along for the symplecticity monitor.
pub fn deform(
    prob: &DeformationProblem,
    grid: &[Vec<f64>],
    probes: &[Vec<f64>],
) -> Result<ConjugacyResult, DeformationError> {
    let n = prob.n();
    for y in grid.iter().chain(probes) {
        if y.len() != 2 * n {
            return Err(DeformationError::DimensionMismatch {
                expected: 2 * n,
                got: y.len(),
            });
        }
    }
    let opts = prob.opts;
    // validity margin: exponents of q_s at both ends of the homotopy
    let gopts = GronwallOptions {
        samples: opts.gronwall_samples,
        seed: opts.seed,
        ..Default::default()
    };
    let lambdas = (prob.lambda_1(), prob.lambda_n());
    let mut slack = [0.0; 2];
    for (i, s) in [0.0, 1.0].into_iter().enumerate() {
        slack[i] = estimate_gronwall(&prob.q_s(s), &prob.region, lambdas, &gopts)?.slack;
    }
    let worst = slack[0].max(slack[1]);
    let decay_margin = prob.r.certificate().n_flat as f64 * (prob.lambda_1() - worst);
    let fd_step = opts.quad_tol.cbrt();
    let mut kappa = Kappa1 {
        prob: prob.clone(),
        slack: worst,
        fd_step,
        nodes: vec![0.0],
    };

    // all carried points: grid, then for each probe 2·2n shifted copies
    let mut state: Vec<Vec<f64>> = grid.to_vec();
    for p in probes {
        for j in 0..2 * n {
            for sign in [1.0, -1.0] {
                let mut q = p.clone();
                q[j] += sign * PROBE_EPS;
                state.push(q);
            }
        }
    }
    let m = grid.len();
    let r_max = grid
        .iter()
        .map(|y| prob.r.value(y).abs())
        .fold(0.0, f64::max);
    let q0f = prob.q0_function();
    let q0_vals: Vec<f64> = grid.iter().map(|y| q0f.value(y)).collect();

    if prob.r.certificate().c_flat == 0.0 {
        kappa.nodes.push(1.0);
        let report = conjugacy_from_images(&prob.q_s(1.0), &q0f, grid, grid);
        return Ok(ConjugacyResult {
            kappa1: kappa,
            grid: grid.to_vec(),
            images: grid.to_vec(),
            error_estimates: vec![0.0; m],
            nodes: Vec::new(),
            report,
            slack,
            decay_margin,
        });
    }

    let gen = Generator {
        prob,
        slack: worst,
        fd_step,
    };
    let ds_max = 1.0 / opts.s_steps.max(1) as f64;
    let mut ds = ds_max;
    let mut s = 0.0;
    let mut k1 = gen.fields(0.0, &state)?;
    let mut errs = vec![0.0; state.len()];
    let mut nodes: Vec<NodeReport> = Vec::new();
    while s < 1.0 - 1e-12 {
        ds = ds.min(1.0 - s);
        if ds < 1e-6 {
            return Err(DeformationError::StepCollapse { s, ds });
        }
        let step = bs3_step(&gen, s, ds, &state, &k1)?;
        // tolerance relative to the largest displacement this step produces;
        // points where r nearly vanishes would otherwise demand pure noise
        let disp = (0..state.len())
            .map(|p| {
                step.y[p]
                    .iter()
                    .zip(&state[p])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        let scale = opts.ode_tol * disp.max(1e-300);
        let ratio = step.err.iter().copied().fold(0.0, f64::max) / scale;
        if ratio > 1.0 && ds > 1e-6 {
            ds *= (0.9 * ratio.powf(-1.0 / 3.0)).clamp(0.2, 0.9);
            continue;
        }
        s += ds;
        for (e, (a, b)) in errs.iter_mut().zip(step.err.iter().zip(&step.gen_err)) {
            *e += a + b;
        }
        state = step.y;
        k1 = step.k4;
        kappa.nodes.push(if (1.0 - s).abs() < 1e-12 { 1.0 } else { s });

        let qs = prob.q_s(s);
        let residual = (0..m)
            .map(|p| (qs.value(&state[p]) - q0_vals[p]).abs())
            .fold(0.0, f64::max);
        let relative_residual = if r_max > 0.0 {
            residual / (s * r_max)
        } else {
            0.0
        };
        let mut defect: f64 = 0.0;
        for (pi, _) in probes.iter().enumerate() {
            let base = m + pi * 4 * n;
            defect = defect.max(probe_defect(&state[base..base + 4 * n], n));
        }
        if defect > opts.symp_tol {
            return Err(DeformationError::SymplecticityLost {
                s,
                defect,
                tol: opts.symp_tol,
            });
        }
        let generator_norm = k1
            .iter()
            .map(|f| f.v.iter().map(|a| a * a).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let generator_error = k1.iter().map(|f| f.err).fold(0.0, f64::max);
        nodes.push(NodeReport {
            s,
            ds,
            residual,
            relative_residual,
            generator_norm,
            generator_error,
            step_error: step.err.iter().copied().fold(0.0, f64::max),
            symplectic_defect: defect,
        });
        if nodes.len() >= 3 {
            let last: Vec<f64> = nodes[nodes.len() - 3..]
                .iter()
                .map(|n| n.relative_residual)
                .collect();
            if last[0] < last[1] && last[1] < last[2] && last[2] > 1.0 {
                return Err(DeformationError::ResidualDiverging { residuals: last });
            }
        }
        if ratio < 0.5 {
            ds = (ds * (0.9 * ratio.max(1e-12).powf(-1.0 / 3.0)).min(2.0)).min(ds_max);
        }
    }
    let images: Vec<Vec<f64>> = state[..m].to_vec();
    let report = conjugacy_from_images(&prob.q_s(1.0), &q0f, grid, &images);
    Ok(ConjugacyResult {
        kappa1: kappa,
        grid: grid.to_vec(),
        images,
        error_estimates: errs[..m].to_vec(),
        nodes,
        report,
        slack,
        decay_margin,
    })
}

/// Uniform `k×k` grid of cell centres in the `(x₁, ξ₁)` plane, other
/// coordinates zero; it never contains the origin.
pub fn plane_grid(n: usize, k: usize, half_width: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(k * k);
    let step = 2.0 * half_width / k as f64;
    for i in 0..k {
        for j in 0..k {
            let mut y = vec![0.0; 2 * n];
            y[0] = -half_width + (i as f64 + 0.5) * step;
            y[n] = -half_width + (j as f64 + 0.5) * step;
            out.push(y);
        }
    }
    out
}

/// Log-log slope of `|κ(ρ) − ρ|` against `|ρ|` at `ρ = 2^{-k}·ray`.
pub fn near_identity_slope(
    kappa: &dyn PointMap,
    ray: &[f64],
    halvings: usize,
) -> Result<f64, DeformationError> {
    let mut pts = Vec::new();
    for k in 0..halvings {
        let y: Vec<f64> = ray.iter().map(|v| v * 0.5f64.powi(k as i32)).collect();
        let im = kappa.map(&y)?;
        let d = im
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let r = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        if d > 0.0 {
            pts.push((r.ln(), d.ln()));
        }
    }
    if pts.len() < 2 {
        return Ok(f64::INFINITY);
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    Ok(num / den)
}

/// `‖KᵀJK − J‖∞` of a finite-difference Jacobian of `kappa` at `rho`.
pub fn map_symplectic_defect(
    kappa: &dyn PointMap,
    rho: &[f64],
    eps: f64,
) -> Result<f64, DeformationError> {
    let d = rho.len();
    let mut k = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut p = rho.to_vec();
        let mut m = rho.to_vec();
        p[j] += eps;
        m[j] -= eps;
        let (a, b) = (kappa.map(&p)?, kappa.map(&m)?);
        for i in 0..d {
            k[(i, j)] = (a[i] - b[i]) / (2.0 * eps);
        }
    }
    let j = standard_j(d / 2);
    Ok((k.transpose() * &j * &k - j).abs().max())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(eps: f64) -> DeformationProblem {
        let q0 = Jet::monomial(1, 2, &[1], &[1], 1.0);
        let r = FlatFunction::monomial_bump(&[3], &[5], eps, 0.9, 3);
        DeformationProblem::new(q0, r, 0.3, DeformationOptions::default()).unwrap()
    }

    #[test]
    fn zero_remainder_is_identity() {
        let q0 = Jet::monomial(1, 2, &[1], &[1], 1.0);
        let prob =
            DeformationProblem::new(q0, FlatFunction::zero(1, 8), 0.3, DeformationOptions::default())
                .unwrap();
        let grid = plane_grid(1, 4, 0.2);
        let res = deform(&prob, &grid, &[]).unwrap();
        assert_eq!(res.images, grid);
        assert_eq!(res.report.residual.max, 0.0);
        assert_eq!(res.kappa1.map(&[0.1, 0.05]).unwrap(), vec![0.1, 0.05]);
    }

    #[test]
    fn rejects_bad_q0() {
        let q0 = Jet::monomial(1, 2, &[2], &[0], 1.0);
        let r = FlatFunction::zero(1, 8);
        assert!(matches!(
            DeformationProblem::new(q0, r.clone(), 0.3, DeformationOptions::default()),
            Err(DeformationError::InvalidQ0 { .. })
        ));
        let q0 = Jet::monomial(1, 2, &[1], &[1], -1.0);
        assert!(DeformationProblem::new(q0, r, 0.3, DeformationOptions::default()).is_err());
    }

    #[test]
    fn identity_verification_is_baseline() {
        let prob = problem(1e-3);
        let grid = plane_grid(1, 5, 0.2);
        let p = prob.q_s(1.0);
        let q0 = prob.q0_function();
        let rep = verify_conjugacy(&p, &Identity, &q0, &grid).unwrap();
        assert_eq!(rep.residual, rep.baseline);
        let rep = verify_conjugacy(&q0, &Identity, &q0, &grid).unwrap();
        assert_eq!(rep.residual.max, 0.0);
    }

    #[test]
    fn small_run_improves_and_replays() {
        let prob = problem(1e-3);
        let grid = plane_grid(1, 4, 0.2);
        let res = deform(&prob, &grid, &[vec![0.12, 0.1]]).unwrap();
        assert!(res.report.reduction > 100.0, "{:?}", res.report);
        assert!(res.max_symplectic_defect() < 1e-6);
        let replay = res.kappa1.map(&grid[5]).unwrap();
        assert_eq!(replay, res.images[5]);
    }

    #[test]
    fn stats_quantiles() {
        let s = Stats::of(&[3.0, 1.0, 2.0, 4.0, 5.0]);
        assert_eq!((s.max, s.median, s.mean), (5.0, 3.0, 3.0));
    }
}
