use serde::{Serialize, Serializer};

use super::{run_flow, FlowError, FlowOptions, RegionSpec, Watch};
use crate::ode::{brent, Segment};
use crate::smooth::PhaseFunction;

/// Points this close to an invariant axis (relative) count as lying on it.
const FLAT_TOL: f64 = 1e-12;

/// Horizon is `HORIZON_SCALE / λ₁`.
const HORIZON_SCALE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HitTime {
    Finite(f64),
    /// The path never reaches the boundary (it lies on an invariant manifold).
    Infinite,
    /// The starting point is outside the region where the time is defined.
    Undefined,
}

impl HitTime {
    pub fn finite(self) -> Option<f64> {
        match self {
            HitTime::Finite(t) => Some(t),
            _ => None,
        }
    }
}

impl Serialize for HitTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            HitTime::Finite(t) => s.serialize_f64(*t),
            HitTime::Infinite => s.serialize_str("+inf"),
            HitTime::Undefined => s.serialize_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingTimes {
    pub t_minus_out: HitTime,
    pub t_plus_out: HitTime,
    pub t_minus_in: HitTime,
    pub t_plus_in: HitTime,
    pub horizon: f64,
    /// The forward path came back into the outgoing region after leaving the ball.
    pub reentry: bool,
}

struct Search {
    backward: bool,
    horizon: f64,
    which: &'static str,
}

/// Keeps integrating past the crossing until the predicate fires or the
/// extra time runs out.
type Watcher<'a> = (&'a mut dyn FnMut(&[f64]) -> bool, f64);

/// First `t > 0` with `g(exp(±tH_p)ρ) ≥ 0`, located on the dense output.
fn first_crossing(
    h: &dyn PhaseFunction,
    rho: &[f64],
    search: Search,
    g: &dyn Fn(&[f64]) -> f64,
    opts: &FlowOptions,
    mut after: Option<Watcher<'_>>,
) -> Result<f64, FlowError> {
    let Search { backward, horizon, which } = search;
    let g0 = g(rho);
    if g0 >= 0.0 {
        return Ok(0.0);
    }
    let t_end = if backward { -horizon } else { horizon };
    let mut root: Option<f64> = None;
    let locate = |seg: &Segment| -> Option<f64> {
        // a few interior probes guard against a double crossing inside a step
        const PROBES: usize = 4;
        let mut ta = seg.t0;
        let mut ga = g(&seg.y0);
        for k in 1..=PROBES {
            let tb = seg.t0 + seg.h * k as f64 / PROBES as f64;
            let gb = if k == PROBES {
                g(&seg.y1)
            } else {
                g(&seg.eval(tb))
            };
            if gb >= 0.0 {
                let t = brent(|t| g(&seg.eval(t)), ta, tb, ga, gb, opts.root_tol);
                return Some(t);
            }
            ta = tb;
            ga = gb;
        }
        None
    };
    let res = run_flow(h, rho, t_end, opts, |seg| {
        match root {
            None => {
                if let Some(t) = locate(seg) {
                    root = Some(t);
                    if after.is_none() {
                        return Watch::Stop;
                    }
                }
                Watch::Continue
            }
            Some(t) => match after.as_mut() {
                Some((check, extra)) => {
                    if check(&seg.y1) || seg.t1().abs() > t.abs() + *extra {
                        Watch::Stop
                    } else {
                        Watch::Continue
                    }
                }
                None => Watch::Stop,
            },
        }
    });
    // errors past the crossing do not invalidate it
    if let Err(e) = res {
        if root.is_none() {
            return Err(e);
        }
    }
    root.map(f64::abs)
        .ok_or(FlowError::NoCrossingWithinHorizon { which, horizon })
}

/// The four hitting times of `rho` for the regions of `spec`.
///
/// `lambda_1` is the smallest `Re λ`; it sets the search horizon `50/λ₁`.
pub fn hitting_times(
    h: &dyn PhaseFunction,
    rho: &[f64],
    spec: &RegionSpec,
    lambda_1: f64,
    opts: &FlowOptions,
) -> Result<HittingTimes, FlowError> {
    let n = spec.n();
    if rho.len() != 2 * n || h.dof() != n {
        return Err(FlowError::DimensionMismatch {
            expected: 2 * n,
            got: rho.len(),
        });
    }
    if rho.iter().all(|&v| v == 0.0) {
        return Err(FlowError::OriginUndefined);
    }
    let horizon = HORIZON_SCALE / lambda_1;
    let k = spec.cone_factor;
    let d2 = spec.delta * spec.delta;
    let (nx, nxi) = spec.norms(rho);
    let cone_out = |y: &[f64]| {
        let (a, b) = spec.norms(y);
        b - k * a
    };
    let cone_in = |y: &[f64]| {
        let (a, b) = spec.norms(y);
        a - k * b
    };
    let ball = |y: &[f64]| spec.ball2(y) - d2;

    let mut out = HittingTimes {
        t_minus_out: HitTime::Undefined,
        t_plus_out: HitTime::Undefined,
        t_minus_in: HitTime::Undefined,
        t_plus_in: HitTime::Undefined,
        horizon,
        reentry: false,
    };
    if spec.in_out(rho) {
        out.t_minus_out = if nxi < FLAT_TOL * nx {
            HitTime::Infinite
        } else {
            HitTime::Finite(first_crossing(
                h,
                rho,
                Search { backward: true, horizon, which: "T_minus_out" },
                &cone_out,
                opts,
                None,
            )?)
        };
        let mut reentry = false;
        let mut check = |y: &[f64]| {
            if spec.in_out(y) {
                reentry = true;
            }
            reentry
        };
        let t = first_crossing(
            h,
            rho,
            Search { backward: false, horizon, which: "T_plus_out" },
            &ball,
            opts,
            Some((&mut check, 2.0 / lambda_1)),
        )?;
        out.t_plus_out = HitTime::Finite(t);
        out.reentry = reentry;
    }
    if spec.in_in(rho) {
        out.t_minus_in = HitTime::Finite(first_crossing(
            h,
            rho,
            Search { backward: true, horizon, which: "T_minus_in" },
            &ball,
            opts,
            None,
        )?);
        out.t_plus_in = if nx < FLAT_TOL * nxi {
            HitTime::Infinite
        } else {
            HitTime::Finite(first_crossing(
                h,
                rho,
                Search { backward: false, horizon, which: "T_plus_in" },
                &cone_in,
                opts,
                None,
            )?)
        };
    }
    Ok(out)
}
