use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{run_flow, FlowError, FlowOptions, RegionSpec, Watch};
use crate::smooth::PhaseFunction;

#[derive(Debug, Clone, Copy)]
pub struct GronwallOptions {
    pub samples: usize,
    pub seed: u64,
    pub flow: FlowOptions,
    /// Interior points probed per accepted step, besides its endpoint.
    pub probes_per_step: usize,
}

impl Default for GronwallOptions {
    fn default() -> Self {
        GronwallOptions {
            samples: 64,
            seed: 0,
            flow: FlowOptions::default(),
            probes_per_step: 3,
        }
    }
}

/// Empirical growth exponents in the outgoing region.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallReport {
    /// Smallest observed rate of `log‖x‖₀` growth or `log‖ξ‖₀` decay.
    pub lambda_minus: f64,
    /// Largest observed rate.
    pub lambda_plus: f64,
    /// How far the rates stray outside `[λ₁, λ_n]`; the `Cδ` of the estimates.
    pub slack: f64,
    pub delta: f64,
    pub samples: usize,
    pub seed: u64,
    pub lambda_1: f64,
    pub lambda_n: f64,
    /// `‖x‖₀` increased and `‖ξ‖₀` decreased at every probe.
    pub monotone: bool,
    pub rate_evaluations: usize,
}

/// Draws `count` points of the outgoing region at unit scale; multiplying by
/// `δ/2` lands them in `Ω^out_{δ/2}`.
fn unit_samples(spec: &RegionSpec, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = spec.n();
    let unit = spec.with_delta(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // scale the box so it covers the unit ‖·‖₀ ball
    let box_half = 1.0 / unit.b0.min_eigenvalue().sqrt();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let y: Vec<f64> = (0..2 * n)
            .map(|_| rng.random_range(-box_half..box_half))
            .collect();
        let (a, b) = unit.norms(&y);
        if unit.in_out(&y) && b > 1e-3 * a {
            out.push(y);
        }
    }
    out
}

struct Rates {
    min: f64,
    max: f64,
    monotone: bool,
    count: usize,
}

fn sample_rates(
    h: &dyn PhaseFunction,
    spec: &RegionSpec,
    rho: &[f64],
    horizon: f64,
    opts: &GronwallOptions,
) -> Result<Rates, FlowError> {
    let n = spec.n();
    let mut acc = Rates {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        monotone: true,
        count: 0,
    };
    let probe = |y: &[f64], acc: &mut Rates| {
        if !spec.in_out(y) {
            return;
        }
        let v = h.hamiltonian_field(y);
        let (x, xi) = y.split_at(n);
        let (dx, dxi) = v.split_at(n);
        let bx = spec.b0.apply(x);
        let bxi = spec.b0.apply(xi);
        let nx2: f64 = bx.iter().zip(x).map(|(a, b)| a * b).sum();
        let nxi2: f64 = bxi.iter().zip(xi).map(|(a, b)| a * b).sum();
        // d/dt ‖x‖₀² = 2⟨B₀x, ẋ⟩, rate of log‖x‖₀ is ⟨B₀x, ẋ⟩/‖x‖₀²
        let gx: f64 = bx.iter().zip(dx).map(|(a, b)| a * b).sum();
        let gxi: f64 = bxi.iter().zip(dxi).map(|(a, b)| a * b).sum();
        if nx2 > 0.0 {
            let r = gx / nx2;
            acc.min = acc.min.min(r);
            acc.max = acc.max.max(r);
            acc.monotone &= gx > 0.0;
            acc.count += 1;
        }
        if nxi2 > 1e-24 * nx2 {
            let r = -gxi / nxi2;
            acc.min = acc.min.min(r);
            acc.max = acc.max.max(r);
            acc.monotone &= gxi < 0.0;
            acc.count += 1;
        }
    };
    probe(rho, &mut acc);
    for t_end in [horizon, -horizon] {
        let mut local = Rates {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            monotone: true,
            count: 0,
        };
        let res = run_flow(h, rho, t_end, &opts.flow, |seg| {
            let k = opts.probes_per_step;
            for i in 1..=k {
                let t = seg.t0 + seg.h * i as f64 / (k + 1) as f64;
                probe(&seg.eval(t), &mut local);
            }
            probe(&seg.y1, &mut local);
            if spec.in_out(&seg.y1) {
                Watch::Continue
            } else {
                Watch::Stop
            }
        });
        match res {
            Ok(_) | Err(FlowError::LeftDomain { .. }) => {}
            Err(e) => return Err(e),
        }
        acc.min = acc.min.min(local.min);
        acc.max = acc.max.max(local.max);
        acc.monotone &= local.monotone;
        acc.count += local.count;
    }
    Ok(acc)
}

/// Brackets the growth of `‖x(t)‖₀` and decay of `‖ξ(t)‖₀` along sampled flow
/// lines that start in `Ω^out_{δ/2}`, probing until they leave `Ω^out_δ`.
///
/// `lambdas = (λ₁, λ_n)` are the smallest and largest `Re λ` of the linear part.
pub fn estimate_gronwall(
    h: &dyn PhaseFunction,
    spec: &RegionSpec,
    lambdas: (f64, f64),
    opts: &GronwallOptions,
) -> Result<GronwallReport, FlowError> {
    const MIN_SAMPLES: usize = 2;
    if opts.samples < MIN_SAMPLES {
        return Err(FlowError::InsufficientSamples {
            got: opts.samples,
            need: MIN_SAMPLES,
        });
    }
    let (l1, ln) = lambdas;
    let horizon = 50.0 / l1;
    let starts: Vec<Vec<f64>> = unit_samples(spec, opts.samples, opts.seed)
        .into_iter()
        .map(|y| y.into_iter().map(|v| v * spec.delta / 2.0).collect())
        .collect();
    let results: Vec<Result<Rates, FlowError>> = starts
        .par_iter()
        .map(|rho| sample_rates(h, spec, rho, horizon, opts))
        .collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut count = 0;
    for r in results {
        let r = r?;
        lo = lo.min(r.min);
        hi = hi.max(r.max);
        monotone &= r.monotone;
        count += r.count;
    }
    if count == 0 {
        return Err(FlowError::InsufficientSamples {
            got: 0,
            need: MIN_SAMPLES,
        });
    }
    Ok(GronwallReport {
        lambda_minus: lo,
        lambda_plus: hi,
        slack: (l1 - lo).max(hi - ln).max(0.0),
        delta: spec.delta,
        samples: opts.samples,
        seed: opts.seed,
        lambda_1: l1,
        lambda_n: ln,
        monotone,
        rate_evaluations: count,
    })
}

/// Halves `δ` until the monotonicity claim holds on every probe.
pub fn certify_delta(
    h: &dyn PhaseFunction,
    spec: &RegionSpec,
    lambdas: (f64, f64),
    opts: &GronwallOptions,
    max_halvings: usize,
) -> Result<(RegionSpec, GronwallReport), FlowError> {
    let mut current = spec.clone();
    let mut report = estimate_gronwall(h, &current, lambdas, opts)?;
    for _ in 0..max_halvings {
        if report.monotone {
            break;
        }
        current = current.with_delta(current.delta / 2.0);
        report = estimate_gronwall(h, &current, lambdas, opts)?;
    }
    Ok((current, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;
    use crate::smooth::Hamiltonian;
    use crate::symplectic::AnisotropicNorm;

    #[test]
    fn linear_saddle_is_exact() {
        let h = Hamiltonian::from_jet(Jet::monomial(1, 2, &[1], &[1], 1.0));
        let spec = RegionSpec::new(0.5, AnisotropicNorm::scalar(1, 0.5));
        let opts = GronwallOptions {
            samples: 8,
            ..Default::default()
        };
        let r = estimate_gronwall(&h, &spec, (1.0, 1.0), &opts).unwrap();
        assert!((r.lambda_minus - 1.0).abs() < 1e-9);
        assert!((r.lambda_plus - 1.0).abs() < 1e-9);
        assert!(r.slack < 1e-9);
        assert!(r.monotone);
    }

    #[test]
    fn samples_start_in_half_ball() {
        let spec = RegionSpec::new(0.3, AnisotropicNorm::scalar(2, 0.5));
        for y in unit_samples(&spec, 50, 7) {
            let y: Vec<f64> = y.iter().map(|v| v * 0.15).collect();
            assert!(spec.with_delta(0.15 + 1e-12).in_out(&y));
        }
    }

    #[test]
    fn too_few_samples() {
        let h = Hamiltonian::from_jet(Jet::monomial(1, 2, &[1], &[1], 1.0));
        let spec = RegionSpec::new(0.5, AnisotropicNorm::scalar(1, 0.5));
        let opts = GronwallOptions {
            samples: 1,
            ..Default::default()
        };
        assert!(matches!(
            estimate_gronwall(&h, &spec, (1.0, 1.0), &opts),
            Err(FlowError::InsufficientSamples { .. })
        ));
    }
}
