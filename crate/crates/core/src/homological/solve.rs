use rayon::prelude::*;
use serde::Serialize;

use super::{AdaptiveQuad, CutoffPair, FlatFunction, HomologicalError};
use crate::flow::{integrate, run_flow, FlowError, FlowOptions, RegionSpec, Watch};
use crate::smooth::PhaseFunction;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomologicalOptions {
    /// Absolute target for `|f_computed − f|`.
    pub tol: f64,
    /// Truncation also waits until the tail is this small relative to the
    /// partial integral, so tiny values near the origin keep their digits.
    pub rel_tol: f64,
    pub flow: FlowOptions,
    pub max_depth: usize,
    /// Integration gives up at `horizon_scale/λ₁`.
    pub horizon_scale: f64,
}

impl HomologicalOptions {
    pub fn with_tol(tol: f64) -> Self {
        HomologicalOptions {
            tol,
            rel_tol: 1e-8,
            flow: FlowOptions::with_tol((tol * 1e-3).clamp(1e-13, 1e-10)),
            max_depth: 30,
            horizon_scale: 200.0,
        }
    }
}

impl Default for HomologicalOptions {
    fn default() -> Self {
        HomologicalOptions::with_tol(1e-7)
    }
}

/// `f(ρ)` with the pieces of its error budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomologicalValue {
    pub value: f64,
    /// Bound on the discarded improper tails.
    pub tail_bound: f64,
    /// Summed `|Kronrod − Gauss|` over all panels.
    pub panel_error: f64,
    /// First-order propagation of the integrator's accumulated local error.
    pub ode_error: f64,
    pub evaluations: usize,
    pub steps: usize,
}

impl HomologicalValue {
    pub fn error_estimate(&self) -> f64 {
        self.tail_bound + self.panel_error + self.ode_error
    }
}

#[derive(Default)]
struct Piece {
    value: f64,
    tail: f64,
    panel: f64,
    ode: f64,
    evals: usize,
    steps: usize,
}

/// Quadrature solver for `H_p f = g` on the chart of `spec`:
///
/// `f(ρ) = ∫_{−∞}^0 (χ^out g)(e^{tH_p}ρ) dt − ∫_0^∞ (χ^in g)(e^{tH_p}ρ) dt`.
///
/// The backward integral stops once the path leaves the outgoing cone, the
/// forward one once it leaves the incoming cone; along the invariant
/// manifolds the integrals are cut where the flatness certificate bounds
/// the rest.
pub struct HomologicalSolver<'a> {
    h: &'a dyn PhaseFunction,
    spec: RegionSpec,
    cut: CutoffPair,
    lambda_1: f64,
    slack: f64,
    opts: HomologicalOptions,
}

impl<'a> HomologicalSolver<'a> {
    /// `lambda_1` is the smallest `Re λ`; `slack` the Gronwall slack of the
    /// flow on the region (0 for quadratic `p`).
    pub fn new(
        h: &'a dyn PhaseFunction,
        spec: RegionSpec,
        cut: CutoffPair,
        lambda_1: f64,
        slack: f64,
        opts: HomologicalOptions,
    ) -> Self {
        HomologicalSolver {
            h,
            spec,
            cut,
            lambda_1,
            slack,
            opts,
        }
    }

    pub fn options(&self) -> &HomologicalOptions {
        &self.opts
    }

    pub fn spec(&self) -> &RegionSpec {
        &self.spec
    }

    fn decay_rate(&self, g: &FlatFunction) -> Result<f64, HomologicalError> {
        let n_flat = g.certificate().n_flat;
        let rate = n_flat as f64 * (self.lambda_1 - self.slack);
        if rate <= 0.0 || !rate.is_finite() {
            return Err(HomologicalError::DecayMarginTooSmall {
                n_flat,
                lambda_1: self.lambda_1,
                slack: self.slack,
            });
        }
        Ok(rate)
    }

    pub fn solve(&self, g: &FlatFunction, rho: &[f64]) -> Result<HomologicalValue, HomologicalError> {
        let n = self.spec.n();
        if rho.len() != 2 * n || g.dof() != n || self.h.dof() != n {
            return Err(HomologicalError::DimensionMismatch {
                expected: 2 * n,
                got: rho.len(),
            });
        }
        if rho.iter().all(|&v| v == 0.0) {
            return Err(HomologicalError::OriginUndefined);
        }
        let ball = self.spec.ball2(rho).sqrt();
        if ball >= self.spec.delta {
            return Err(HomologicalError::OutsideRegion {
                norm: ball,
                delta: self.spec.delta,
            });
        }
        let rate = self.decay_rate(g)?;
        let back = self.half_line(g, rho, true, rate)?;
        let fwd = self.half_line(g, rho, false, rate)?;
        Ok(HomologicalValue {
            value: back.value - fwd.value,
            tail_bound: back.tail + fwd.tail,
            panel_error: back.panel + fwd.panel,
            ode_error: back.ode + fwd.ode,
            evaluations: back.evals + fwd.evals,
            steps: back.steps + fwd.steps,
        })
    }

    /// Independent evaluations at many points, in parallel.
    pub fn solve_many(
        &self,
        g: &FlatFunction,
        points: &[Vec<f64>],
    ) -> Vec<Result<HomologicalValue, HomologicalError>> {
        points.par_iter().map(|p| self.solve(g, p)).collect()
    }

    /// Bound on `∫_T^∞ |g|` along the shrinking side from state `y`, or ∞
    /// when `y` is outside the region where the decay estimate holds.
    fn tail_from(&self, g: &FlatFunction, y: &[f64], backward: bool, rate: f64) -> f64 {
        let inside = if backward {
            self.spec.in_out(y)
        } else {
            self.spec.in_in(y)
        };
        if !inside {
            return f64::INFINITY;
        }
        let cert = g.certificate();
        if cert.c_flat == 0.0 {
            return 0.0;
        }
        let (nx, nxi) = self.spec.norms(y);
        let shrinking = if backward { nx } else { nxi };
        // |ρ| ≤ √(1 + k²)·‖shrinking‖₀ / √μ_min inside the cone
        let k = self.spec.cone_factor;
        let mu_min = self.spec.b0.min_eigenvalue();
        let scale = (1.0 + k * k).sqrt() / mu_min.sqrt();
        cert.c_flat * (scale * shrinking).powi(cert.n_flat as i32) / rate
    }

    fn past_cone(&self, y: &[f64], backward: bool) -> bool {
        let (nx, nxi) = self.spec.norms(y);
        let k = self.spec.cone_factor;
        if backward {
            nxi >= k * nx
        } else {
            nx >= k * nxi
        }
    }

    fn half_line(
        &self,
        g: &FlatFunction,
        rho: &[f64],
        backward: bool,
        rate: f64,
    ) -> Result<Piece, HomologicalError> {
        // the cutoff is identically zero beyond the cone, and the path
        // moves further away from it
        if self.past_cone(rho, backward) {
            return Ok(Piece::default());
        }
        let tol_piece = 0.25 * self.opts.tol;
        let horizon = self.opts.horizon_scale / self.lambda_1;
        let t_end = if backward { -horizon } else { horizon };
        let weight = |y: &[f64]| {
            if backward {
                self.cut.chi_out(y)
            } else {
                self.cut.chi_in(y)
            }
        };
        let integrand = |y: &[f64]| {
            let w = weight(y);
            if w == 0.0 {
                0.0
            } else {
                w * g.value(y)
            }
        };
        let quad = AdaptiveQuad {
            rate: 0.05 * self.opts.tol * self.lambda_1,
            max_depth: self.opts.max_depth,
        };
        let sensitivity = g.certificate().n_flat as f64 + 8.0;
        let mut piece = Piece::default();
        let mut cum_local = 0.0;
        let mut done = false;
        let res = run_flow(self.h, rho, t_end, &self.opts.flow, |seg| {
            let (v, e, k) = quad.integrate(
                &mut |t| integrand(&seg.eval(t)),
                seg.t0,
                seg.t1(),
            );
            // integration in negative time: ∫_{t1}^{t0} = −∫_{t0}^{t1}
            piece.value += if backward { -v } else { v };
            piece.panel += e;
            piece.evals += k;
            piece.steps += 1;
            cum_local += seg.local_error;
            let ymag = seg.y1.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-300);
            let gmax = integrand(&seg.y0).abs().max(integrand(&seg.y1).abs());
            piece.ode += seg.h.abs() * gmax * sensitivity * cum_local / ymag;
            if self.past_cone(&seg.y1, backward) {
                piece.tail = 0.0;
                done = true;
                return Watch::Stop;
            }
            let tail = self.tail_from(g, &seg.y1, backward, rate);
            piece.tail = tail;
            let floor = tol_piece * 1e-12;
            if tail <= tol_piece && tail <= (self.opts.rel_tol * piece.value.abs()).max(floor) {
                done = true;
                return Watch::Stop;
            }
            Watch::Continue
        });
        res?;
        if !done && !piece.tail.is_finite() {
            return Err(HomologicalError::NoTermination {
                direction: if backward { "backward" } else { "forward" },
                horizon,
            });
        }
        Ok(piece)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub point: Vec<f64>,
    /// `(d/dt) f(e^{tH_p}ρ)` at `t = 0`.
    pub derivative: f64,
    pub g: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub step: f64,
    pub rows: Vec<ResidualRow>,
}

/// Compares a centered difference of `f` along the flow of `h` with `g`.
pub fn residual_check(
    h: &dyn PhaseFunction,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    points: &[Vec<f64>],
    step: f64,
    flow: &FlowOptions,
) -> Result<ResidualReport, FlowError> {
    let rows: Result<Vec<ResidualRow>, FlowError> = points
        .par_iter()
        .map(|p| {
            let plus = integrate(h, p, step, flow)?;
            let minus = integrate(h, p, -step, flow)?;
            let derivative = (f(plus.final_state()) - f(minus.final_state())) / (2.0 * step);
            let gv = g(p);
            Ok(ResidualRow {
                point: p.clone(),
                derivative,
                g: gv,
                residual: (derivative - gv).abs(),
            })
        })
        .collect();
    let rows = rows?;
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(ResidualReport {
        max_residual,
        step,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homological::make_partition;
    use crate::jet::Jet;
    use crate::smooth::Hamiltonian;
    use crate::symplectic::AnisotropicNorm;

    fn saddle() -> Hamiltonian {
        Hamiltonian::from_jet(Jet::monomial(1, 2, &[1], &[1], 1.0))
    }

    fn solver(h: &Hamiltonian, tol: f64) -> HomologicalSolver<'_> {
        let b0 = AnisotropicNorm::scalar(1, 0.5);
        HomologicalSolver::new(
            h,
            RegionSpec::new(0.5, b0.clone()),
            make_partition(3, b0).unwrap(),
            1.0,
            0.0,
            HomologicalOptions::with_tol(tol),
        )
    }

    // K = ∫_0^∞ χ^out(r) dr for the scalar norm, where the out-cutoff depends on r = |ξ|/|x|
    fn kernel_constant(order: usize) -> f64 {
        let c = make_partition(order, AnisotropicNorm::scalar(1, 0.5)).unwrap();
        let q = AdaptiveQuad {
            rate: 1e-15,
            max_depth: 50,
        };
        let (v, _, _) = q.integrate(&mut |r| c.chi_out(&[1.0, r]), 0.0, 2.0);
        v
    }

    #[test]
    fn zero_rhs() {
        let h = saddle();
        let s = solver(&h, 1e-7);
        let v = s.solve(&FlatFunction::zero(1, 6), &[0.1, 0.05]).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.error_estimate(), 0.0);
    }

    #[test]
    fn eigen_monomial_up_to_kernel() {
        // H_p(x²ξ⁴) = −2 x²ξ⁴, so −x²ξ⁴/2 solves the equation; the quadrature
        // picks the representative −x²ξ⁴/2 + (K/2)|xξ|³ that differs by a
        // function of xξ.
        let h = saddle();
        let tol = 1e-7;
        let s = solver(&h, tol);
        let g = FlatFunction::monomial_bump(&[2], &[4], 1.0, 4.0, 3);
        let k = kernel_constant(3);
        for rho in [[0.1, 0.05], [0.2, -0.1], [-0.05, 0.3], [0.15, 0.0], [0.0, 0.2]] {
            let v = s.solve(&g, &rho).unwrap();
            let (x, xi) = (rho[0], rho[1]);
            let exact = -x * x * xi.powi(4) / 2.0 + 0.5 * k * (x * xi).abs().powi(3);
            assert!((v.value - exact).abs() < 10.0 * tol, "{rho:?}: {} vs {exact}", v.value);
            assert!((v.value - exact).abs() <= v.error_estimate() + 1e-15);
        }
    }

    #[test]
    fn residual_detects_planted_error() {
        let h = saddle();
        let g = |y: &[f64]| y[0] * y[0] * y[1].powi(4);
        let exact = |y: &[f64]| -y[0] * y[0] * y[1].powi(4) / 2.0;
        let pts = vec![vec![0.2, 0.1], vec![0.1, -0.3]];
        let opts = FlowOptions::with_tol(1e-12);
        let rep = residual_check(&h, &exact, &g, &pts, 1e-3, &opts).unwrap();
        assert!(rep.max_residual < 1e-9, "{}", rep.max_residual);
        let bad = |y: &[f64]| exact(y) + 1e-3 * y[0];
        let rep = residual_check(&h, &bad, &g, &pts, 1e-3, &opts).unwrap();
        // ∂_t(εx) = εx along xξ
        assert!((rep.rows[0].residual - 1e-3 * 0.2).abs() < 1e-9);
        let zero = |_: &[f64]| 0.0;
        let one = |_: &[f64]| 1.0;
        assert_eq!(residual_check(&h, &one, &zero, &pts, 1e-3, &opts).unwrap().max_residual, 0.0);
    }

    #[test]
    fn errors() {
        let h = saddle();
        let s = solver(&h, 1e-7);
        let g = FlatFunction::monomial_bump(&[2], &[4], 1.0, 4.0, 3);
        assert_eq!(s.solve(&g, &[0.0, 0.0]), Err(HomologicalError::OriginUndefined));
        assert!(matches!(
            s.solve(&g, &[0.9, 0.0]),
            Err(HomologicalError::OutsideRegion { .. })
        ));
        let b0 = AnisotropicNorm::scalar(1, 0.5);
        let bad = HomologicalSolver::new(
            &h,
            RegionSpec::new(0.5, b0.clone()),
            make_partition(3, b0).unwrap(),
            1.0,
            1.5,
            HomologicalOptions::default(),
        );
        assert!(matches!(
            bad.solve(&g, &[0.1, 0.1]),
            Err(HomologicalError::DecayMarginTooSmall { .. })
        ));
    }
}
