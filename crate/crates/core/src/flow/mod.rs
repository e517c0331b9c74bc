//! Hamiltonian flow near a saddle in Williamson coordinates, where the
//! unstable and stable linear subspaces are `{ξ = 0}` and `{x = 0}`.

mod gronwall;
mod hitting;

pub use gronwall::{certify_delta, estimate_gronwall, GronwallOptions, GronwallReport};
pub use hitting::{hitting_times, HitTime, HittingTimes};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::ode::{self, OdeError, OdeOptions, OdeStats, Segment};
use crate::smooth::PhaseFunction;
use crate::symplectic::{symplectic_defect, AnisotropicNorm};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error("trajectory left the chart |y| < {radius} at t = {t}")]
    LeftDomain { t: f64, radius: f64 },
    #[error("energy drift {drift:e} exceeds {tol:e} at t = {t}")]
    EnergyDrift { t: f64, drift: f64, tol: f64 },
    #[error("T_minus_out undefined at origin: hitting times need rho != 0")]
    OriginUndefined,
    #[error("{which}: no crossing within horizon {horizon}")]
    NoCrossingWithinHorizon { which: &'static str, horizon: f64 },
    #[error("only {got} usable samples, need {need}")]
    InsufficientSamples { got: usize, need: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Cones and ball measured in `‖·‖₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSpec {
    pub delta: f64,
    pub cone_factor: f64,
    pub b0: AnisotropicNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Out,
    In,
    Both,
    Neither,
}

impl RegionSpec {
    pub fn new(delta: f64, b0: AnisotropicNorm) -> Self {
        assert!(delta > 0.0, "delta must be positive");
        RegionSpec {
            delta,
            cone_factor: 2.0,
            b0,
        }
    }

    pub fn n(&self) -> usize {
        self.b0.dim()
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        RegionSpec {
            delta,
            ..self.clone()
        }
    }

    /// `(‖x‖₀, ‖ξ‖₀)`.
    pub fn norms(&self, y: &[f64]) -> (f64, f64) {
        let n = self.n();
        (
            self.b0.quad(&y[..n]).max(0.0).sqrt(),
            self.b0.quad(&y[n..]).max(0.0).sqrt(),
        )
    }

    pub fn ball2(&self, y: &[f64]) -> f64 {
        let (a, b) = self.norms(y);
        a * a + b * b
    }

    pub fn in_out(&self, y: &[f64]) -> bool {
        let (a, b) = self.norms(y);
        b < self.cone_factor * a && a * a + b * b < self.delta * self.delta
    }

    pub fn in_in(&self, y: &[f64]) -> bool {
        let (a, b) = self.norms(y);
        a < self.cone_factor * b && a * a + b * b < self.delta * self.delta
    }
}

/// Which of the outgoing and incoming regions contain `rho`.
pub fn region_membership(rho: &[f64], spec: &RegionSpec) -> Result<Region, FlowError> {
    if rho.len() != 2 * spec.n() {
        return Err(FlowError::DimensionMismatch {
            expected: 2 * spec.n(),
            got: rho.len(),
        });
    }
    Ok(match (spec.in_out(rho), spec.in_in(rho)) {
        (true, true) => Region::Both,
        (true, false) => Region::Out,
        (false, true) => Region::In,
        (false, false) => Region::Neither,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    pub ode: OdeOptions,
    /// Allowed `|p(ρ(t)) − p(ρ₀)|` is `energy_tol·(1 + |p(ρ₀)|)`.
    pub energy_tol: f64,
    /// Euclidean radius of the chart; leaving it is an error.
    pub domain_radius: f64,
    pub root_tol: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            ode: OdeOptions::default(),
            energy_tol: 1e-9,
            domain_radius: f64::INFINITY,
            root_tol: 1e-12,
        }
    }
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        FlowOptions {
            ode: OdeOptions::with_tol(tol),
            energy_tol: (tol * 100.0).max(1e-9),
            ..Default::default()
        }
    }
}

/// Samples of a flow line together with its dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `dκ_t` at each sample when the variational flow was integrated.
    pub dkappa: Option<Vec<DMatrix<f64>>>,
    pub stats: OdeStats,
    pub tol: f64,
    pub max_energy_drift: f64,
    segments: Vec<Segment>,
}

impl Trajectory {
    pub fn t_final(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// Phase point at time `t` from the dense output.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        let idx = self.segments.partition_point(|s| {
            if s.h >= 0.0 {
                s.t1() < t
            } else {
                s.t1() > t
            }
        });
        let seg = self.segments.get(idx).filter(|s| s.contains(t))?;
        let mut v = seg.eval(t);
        v.truncate(2 * self.n);
        Some(v)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Bound on the error of the final state: local errors summed and
    /// amplified by `e^{growth·|t|}`, `growth` being a Lipschitz bound of the
    /// field (for a saddle, the largest `|Re λ|` plus slack).
    pub fn error_bound(&self, growth: f64) -> f64 {
        self.stats.local_error_sum * (growth * self.t_final().abs()).exp()
    }

    /// Largest `‖dκᵀJdκ − J‖∞` over the stored samples.
    pub fn symplectic_defect(&self) -> Option<f64> {
        self.dkappa
            .as_ref()
            .map(|ms| ms.iter().map(symplectic_defect).fold(0.0, f64::max))
    }

    /// `t, x1..xn, xi1..xin[, dk_r_c...]`.
    pub fn to_csv(&self) -> String {
        let n = self.n;
        let mut head: Vec<String> = vec!["t".into()];
        head.extend((1..=n).map(|i| format!("x{i}")));
        head.extend((1..=n).map(|i| format!("xi{i}")));
        if self.dkappa.is_some() {
            for r in 0..2 * n {
                for c in 0..2 * n {
                    head.push(format!("dk_{}_{}", r + 1, c + 1));
                }
            }
        }
        let mut out = head.join(",");
        out.push('\n');
        for (k, (t, y)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row: Vec<String> = vec![format!("{t:.17e}")];
            row.extend(y.iter().map(|v| format!("{v:.17e}")));
            if let Some(ms) = &self.dkappa {
                let m = &ms[k];
                for r in 0..2 * n {
                    for c in 0..2 * n {
                        row.push(format!("{:.17e}", m[(r, c)]));
                    }
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// What the step observer decided.
pub(crate) enum Watch {
    Continue,
    Stop,
}

/// Shared driver: integrates `H_p` from `rho0` to `t_end` with domain and
/// energy monitoring; `watch` may end the run early.
pub(crate) fn run_flow(
    h: &dyn PhaseFunction,
    rho0: &[f64],
    t_end: f64,
    opts: &FlowOptions,
    mut watch: impl FnMut(&Segment) -> Watch,
) -> Result<Trajectory, FlowError> {
    let n = h.dof();
    if rho0.len() != 2 * n {
        return Err(FlowError::DimensionMismatch {
            expected: 2 * n,
            got: rho0.len(),
        });
    }
    let p0 = h.value(rho0);
    let e_tol = opts.energy_tol * (1.0 + p0.abs());
    let mut failure: Option<FlowError> = None;
    let mut max_drift: f64 = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![rho0.to_vec()];
    let sol = ode::solve(
        |_, y, d| {
            let f = h.hamiltonian_field(y);
            d.copy_from_slice(&f);
        },
        0.0,
        rho0,
        t_end,
        &opts.ode,
        true,
        |seg| {
            let y = &seg.y1;
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > opts.domain_radius {
                failure = Some(FlowError::LeftDomain {
                    t: seg.t1(),
                    radius: opts.domain_radius,
                });
                return true;
            }
            let drift = (h.value(y) - p0).abs();
            max_drift = max_drift.max(drift);
            if drift > e_tol {
                failure = Some(FlowError::EnergyDrift {
                    t: seg.t1(),
                    drift,
                    tol: e_tol,
                });
                return true;
            }
            times.push(seg.t1());
            states.push(y.clone());
            matches!(watch(seg), Watch::Stop)
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Trajectory {
        n,
        times,
        states,
        dkappa: None,
        stats: sol.stats,
        tol: opts.ode.rtol,
        max_energy_drift: max_drift,
        segments: sol.segments,
    })
}

/// `exp(tH_p)(ρ₀)` for `t` between 0 and `t_end` (negative runs backward).
pub fn integrate(
    h: &dyn PhaseFunction,
    rho0: &[f64],
    t_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory, FlowError> {
    run_flow(h, rho0, t_end, opts, |_| Watch::Continue)
}

/// Flow together with `dκ_t`, solving `∂_t dκ_t = (J·Hess p)(κ_t) dκ_t`.
pub fn variational_flow(
    h: &dyn PhaseFunction,
    rho0: &[f64],
    t_end: f64,
    opts: &FlowOptions,
) -> Result<Trajectory, FlowError> {
    let n = h.dof();
    let d = 2 * n;
    if rho0.len() != d {
        return Err(FlowError::DimensionMismatch {
            expected: d,
            got: rho0.len(),
        });
    }
    let mut y0 = rho0.to_vec();
    for i in 0..d {
        for k in 0..d {
            y0.push(if i == k { 1.0 } else { 0.0 });
        }
    }
    let p0 = h.value(rho0);
    let e_tol = opts.energy_tol * (1.0 + p0.abs());
    let mut failure = None;
    let mut max_drift: f64 = 0.0;
    let mut times = vec![0.0];
    let mut states = vec![rho0.to_vec()];
    let mut mats = vec![DMatrix::identity(d, d)];
    let sol = ode::solve(
        |_, y, dy| {
            let (s, phi) = y.split_at(d);
            let f = h.hamiltonian_field(s);
            dy[..d].copy_from_slice(&f);
            let hess = h.hessian(s);
            // row-major Φ; (J·Hess)Φ with J·Hess = [[H_ξx, H_ξξ], [−H_xx, −H_xξ]]
            for r in 0..d {
                for c in 0..d {
                    let mut acc = 0.0;
                    for k in 0..d {
                        let l = if r < n { hess[(r + n, k)] } else { -hess[(r - n, k)] };
                        acc += l * phi[k * d + c];
                    }
                    dy[d + r * d + c] = acc;
                }
            }
        },
        0.0,
        &y0,
        t_end,
        &opts.ode,
        true,
        |seg| {
            let s = &seg.y1[..d];
            let r = s.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > opts.domain_radius {
                failure = Some(FlowError::LeftDomain {
                    t: seg.t1(),
                    radius: opts.domain_radius,
                });
                return true;
            }
            let drift = (h.value(s) - p0).abs();
            max_drift = max_drift.max(drift);
            if drift > e_tol {
                failure = Some(FlowError::EnergyDrift {
                    t: seg.t1(),
                    drift,
                    tol: e_tol,
                });
                return true;
            }
            times.push(seg.t1());
            states.push(s.to_vec());
            mats.push(DMatrix::from_row_slice(d, d, &seg.y1[d..]));
            false
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(Trajectory {
        n,
        times,
        states,
        dkappa: Some(mats),
        stats: sol.stats,
        tol: opts.ode.rtol,
        max_energy_drift: max_drift,
        segments: sol.segments,
    })
}

/// `dκ_t` at an arbitrary time from a variational trajectory's dense output.
pub fn dkappa_at(traj: &Trajectory, t: f64) -> Option<DMatrix<f64>> {
    let d = 2 * traj.n;
    traj.dkappa.as_ref()?;
    let idx = traj.segments.partition_point(|s| {
        if s.h >= 0.0 {
            s.t1() < t
        } else {
            s.t1() > t
        }
    });
    let seg = traj.segments.get(idx).filter(|s| s.contains(t))?;
    let v = seg.eval(t);
    Some(DMatrix::from_row_slice(d, d, &v[d..]))
}
