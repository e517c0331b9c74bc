//! JSON documents: jets, Hamiltonian inputs and normal-form results.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::homological::FlatFunction;
use crate::jet::{Coeff, Jet, JetError, NormalFormResult};
use crate::smooth::{Hamiltonian, PhaseFunction};
use crate::symplectic::AnisotropicNorm;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid document: {0}")]
    Invalid(String),
    #[error(transparent)]
    Jet(#[from] JetError),
}

/// One monomial `coeff·x^alpha ξ^beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermDoc {
    pub alpha: Vec<u16>,
    pub beta: Vec<u16>,
    pub coeff: f64,
    /// Exact value `p/q` when the jet was computed over the rationals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<String>,
}

/// `{n, N, terms: [{alpha, beta, coeff}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JetDoc {
    pub n: usize,
    #[serde(rename = "N")]
    pub order: usize,
    pub terms: Vec<TermDoc>,
}

/// Coefficient types that can be written to and read from [`TermDoc`].
pub trait DocCoeff: Coeff {
    fn to_doc(&self) -> (f64, Option<String>);
    fn from_doc(t: &TermDoc) -> Result<Self, IoError>;
}

impl DocCoeff for f64 {
    fn to_doc(&self) -> (f64, Option<String>) {
        (*self, None)
    }
    fn from_doc(t: &TermDoc) -> Result<Self, IoError> {
        Ok(t.coeff)
    }
}

impl DocCoeff for BigRational {
    fn to_doc(&self) -> (f64, Option<String>) {
        (self.to_f64().unwrap_or(f64::NAN), Some(self.to_string()))
    }
    fn from_doc(t: &TermDoc) -> Result<Self, IoError> {
        match &t.exact {
            Some(s) => s
                .parse::<BigRational>()
                .map_err(|e| IoError::Invalid(format!("bad rational {s:?}: {e}"))),
            None => {
                if !t.coeff.is_finite() {
                    return Err(IoError::Invalid(format!("non-finite coefficient {}", t.coeff)));
                }
                Ok(BigRational::from_f64(t.coeff))
            }
        }
    }
}

impl JetDoc {
    pub fn from_jet<C: DocCoeff>(j: &Jet<C>) -> Self {
        let n = j.n();
        JetDoc {
            n,
            order: j.order(),
            terms: j
                .terms()
                .map(|(m, c)| {
                    let (coeff, exact) = c.to_doc();
                    TermDoc {
                        alpha: m.alpha().to_vec(),
                        beta: m.beta().to_vec(),
                        coeff,
                        exact,
                    }
                })
                .collect(),
        }
    }

    pub fn to_jet<C: DocCoeff>(&self) -> Result<Jet<C>, IoError> {
        if self.n == 0 {
            return Err(IoError::Invalid("n must be at least 1".into()));
        }
        if self.order < 2 {
            return Err(IoError::Invalid("N must be at least 2".into()));
        }
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            if !t.coeff.is_finite() {
                return Err(IoError::Invalid(format!("non-finite coefficient {}", t.coeff)));
            }
            terms.push((t.alpha.clone(), t.beta.clone(), C::from_doc(t)?));
        }
        Ok(Jet::from_terms(self.n, self.order, terms)?)
    }
}

pub fn jet_to_json<C: DocCoeff>(j: &Jet<C>) -> String {
    serde_json::to_string_pretty(&JetDoc::from_jet(j)).expect("jet documents serialize")
}

pub fn jet_from_json<C: DocCoeff>(s: &str) -> Result<Jet<C>, IoError> {
    serde_json::from_str::<JetDoc>(s)?.to_jet()
}

/// Flat remainder added to the polynomial part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RemainderSpec {
    /// `coeff·x^alpha ξ^beta·Φ(|y|²/radius²)`.
    MonomialBump {
        alpha: Vec<u16>,
        beta: Vec<u16>,
        coeff: f64,
        radius: f64,
        #[serde(default = "default_bump_order")]
        bump_order: usize,
    },
    /// Reserved; no plugin loader ships with this crate.
    CallablePlugin {
        #[serde(default)]
        params: serde_json::Value,
    },
}

fn default_bump_order() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum B0Source {
    Auto,
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub delta: f64,
    #[serde(default = "auto")]
    pub b0: B0Source,
}

fn auto() -> B0Source {
    B0Source::Auto
}

/// Input document of the command-line tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub n: usize,
    #[serde(rename = "N")]
    pub order: usize,
    pub terms: Vec<TermDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat_remainder: Option<RemainderSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
}

impl HamiltonianSpec {
    pub fn parse(s: &str) -> Result<Self, IoError> {
        let spec: HamiltonianSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        self.jet_doc().to_jet::<f64>()?;
        if let Some(r) = &self.flat_remainder {
            self.remainder_from(r)?;
        }
        if let Some(c) = &self.chart {
            if !(c.delta > 0.0) {
                return Err(IoError::Invalid(format!("chart delta {} must be positive", c.delta)));
            }
            if let B0Source::Explicit(rows) = &c.b0 {
                self.explicit_b0(rows)?;
            }
        }
        Ok(())
    }

    pub fn jet_doc(&self) -> JetDoc {
        JetDoc {
            n: self.n,
            order: self.order,
            terms: self.terms.clone(),
        }
    }

    pub fn jet<C: DocCoeff>(&self) -> Result<Jet<C>, IoError> {
        self.jet_doc().to_jet()
    }

    fn remainder_from(&self, r: &RemainderSpec) -> Result<FlatFunction, IoError> {
        match r {
            RemainderSpec::MonomialBump {
                alpha,
                beta,
                coeff,
                radius,
                bump_order,
            } => {
                if alpha.len() != self.n || beta.len() != self.n {
                    return Err(IoError::Invalid(format!(
                        "remainder exponents must have length {}",
                        self.n
                    )));
                }
                if !(*radius > 0.0) || !coeff.is_finite() || *bump_order == 0 {
                    return Err(IoError::Invalid(
                        "remainder needs radius > 0, finite coeff, bump_order >= 1".into(),
                    ));
                }
                Ok(FlatFunction::monomial_bump(alpha, beta, *coeff, *radius, *bump_order))
            }
            RemainderSpec::CallablePlugin { .. } => Err(IoError::Invalid(
                "callable-plugin remainders are not supported by this build".into(),
            )),
        }
    }

    pub fn remainder(&self) -> Result<Option<FlatFunction>, IoError> {
        self.flat_remainder
            .as_ref()
            .map(|r| self.remainder_from(r))
            .transpose()
    }

    fn explicit_b0(&self, rows: &[Vec<f64>]) -> Result<AnisotropicNorm, IoError> {
        if rows.len() != self.n || rows.iter().any(|r| r.len() != self.n) {
            return Err(IoError::Invalid(format!("explicit B0 must be {0}x{0}", self.n)));
        }
        let m = DMatrix::from_fn(self.n, self.n, |i, j| rows[i][j]);
        if (&m - m.transpose()).abs().max() > 1e-12 {
            return Err(IoError::Invalid("explicit B0 must be symmetric".into()));
        }
        let b = AnisotropicNorm { b0: m };
        if b.min_eigenvalue() <= 0.0 {
            return Err(IoError::Invalid("explicit B0 must be positive definite".into()));
        }
        Ok(b)
    }

    /// Explicit `B₀` when the chart supplies one.
    pub fn explicit_norm(&self) -> Result<Option<AnisotropicNorm>, IoError> {
        match &self.chart {
            Some(ChartSpec {
                b0: B0Source::Explicit(rows),
                ..
            }) => self.explicit_b0(rows).map(Some),
            _ => Ok(None),
        }
    }

    pub fn hamiltonian(&self) -> Result<Hamiltonian, IoError> {
        let h = Hamiltonian::from_jet(self.jet()?);
        Ok(match self.remainder()? {
            Some(r) => h.with_remainder(r.function().clone() as Arc<dyn PhaseFunction>),
            None => h,
        })
    }
}

/// Serialized [`NormalFormResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormDoc {
    pub order: usize,
    pub lambda: Vec<f64>,
    pub generators: Vec<JetDoc>,
    pub q0: JetDoc,
    pub transformed: JetDoc,
    pub verification: Verification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    /// Largest non-action coefficient of `p∘κ` through degree `N`.
    pub max_non_action: f64,
    pub residual_degree: usize,
}

impl NormalFormDoc {
    pub fn from_result<C: DocCoeff>(r: &NormalFormResult<C>) -> Self {
        NormalFormDoc {
            order: r.order,
            lambda: r.lambda.iter().map(|l| l.to_doc().0).collect(),
            generators: r.generators.iter().map(JetDoc::from_jet).collect(),
            q0: JetDoc::from_jet(&r.q0.to_jet(r.order)),
            transformed: JetDoc::from_jet(&r.transformed),
            verification: Verification {
                max_non_action: r.max_non_action,
                residual_degree: r.residual_degree,
            },
        }
    }
}
