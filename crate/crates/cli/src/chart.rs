//! The input Hamiltonian expressed in its Williamson coordinates, together
//! with the cones and ball that the flow commands work in.

use std::sync::Arc;

use hypnf::flow::RegionSpec;
use hypnf::homological::{FlatCertificate, FlatFunction};
use hypnf::io::HamiltonianSpec;
use hypnf::jet::Jet;
use hypnf::smooth::{Hamiltonian, LinearPullback, PhaseFunction};
use hypnf::symplectic::{
    lyapunov_b0, williamson_from_jet, LinearOptions, SpectrumQuadruples, WilliamsonFrame,
};
use nalgebra::DVector;

use crate::CliError;

/// Frames closer than this to the identity are treated as the identity, so
/// inputs already in normal form are used verbatim.
const IDENTITY_TOL: f64 = 1e-14;

pub struct Chart {
    pub frame: WilliamsonFrame,
    pub spectrum: SpectrumQuadruples,
    /// The polynomial part in the new coordinates.
    pub jet: Jet<f64>,
    /// The flat remainder in the new coordinates.
    pub remainder: Option<FlatFunction>,
    pub region: RegionSpec,
    pub lambda_1: f64,
    pub lambda_n: f64,
    pub identity: bool,
}

impl Chart {
    pub fn new(spec: &HamiltonianSpec, default_delta: f64) -> Result<Self, CliError> {
        let jet: Jet<f64> = spec.jet()?;
        let (_, spectrum, frame) = williamson_from_jet(&jet, &LinearOptions::default())?;
        let n = jet.n();
        let identity = (&frame.s - nalgebra::DMatrix::<f64>::identity(2 * n, 2 * n)).amax() <= IDENTITY_TOL;
        let (jet_new, remainder) = if identity {
            (jet, spec.remainder()?)
        } else {
            let r = spec.remainder()?.map(|r| {
                // |r(My)| ≤ C|My|^N ≤ C‖M‖^N |y|^N
                let cert = r.certificate();
                let norm = frame.m.clone().singular_values().max();
                FlatFunction::new(
                    Arc::new(LinearPullback {
                        inner: r.function().clone(),
                        m: frame.m.clone(),
                    }),
                    FlatCertificate {
                        n_flat: cert.n_flat,
                        c_flat: cert.c_flat * norm.powi(cert.n_flat as i32),
                    },
                )
            });
            (frame.pullback(&jet), r)
        };
        let b0 = match spec.explicit_norm()? {
            Some(b) => b,
            None => lyapunov_b0(&frame.a0())?,
        };
        let delta = spec.chart.as_ref().map(|c| c.delta).unwrap_or(default_delta);
        let reals = frame.a.iter().chain(&frame.c).copied();
        let lambda_1 = reals.clone().fold(f64::INFINITY, f64::min);
        let lambda_n = reals.fold(0.0, f64::max);
        Ok(Chart {
            frame,
            spectrum,
            jet: jet_new,
            remainder,
            region: RegionSpec::new(delta, b0),
            lambda_1,
            lambda_n,
            identity,
        })
    }

    pub fn n(&self) -> usize {
        self.jet.n()
    }

    /// Polynomial part plus remainder, in the new coordinates.
    pub fn hamiltonian(&self) -> Hamiltonian {
        let h = Hamiltonian::from_jet(self.jet.clone());
        match &self.remainder {
            Some(r) => h.with_remainder(r.function().clone() as Arc<dyn PhaseFunction>),
            None => h,
        }
    }

    /// Original coordinates to chart coordinates.
    pub fn to_chart(&self, rho: &[f64]) -> Vec<f64> {
        if self.identity {
            return rho.to_vec();
        }
        (&self.frame.s * DVector::from_column_slice(rho)).iter().copied().collect()
    }
}
