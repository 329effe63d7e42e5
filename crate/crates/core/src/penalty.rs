//! SCAD, MCP and L1 penalties on the non-negative half line.
//!
//! All three families are normalized so that the right derivative at the
//! origin equals the tuning parameter, which makes them interchangeable as
//! weight generators for the local linear approximation.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, HippoError, Result};

/// Default concavity for SCAD.
pub const DEFAULT_SCAD_A: f64 = 3.7;
/// Default concavity for MCP.
pub const DEFAULT_MCP_A: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Scad,
    Mcp,
    L1,
}

/// A penalty family together with its concavity parameter `a`.
///
/// The tuning parameter is not part of the value: the stages evaluate the
/// same penalty at a different `lambda` per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PenaltySpec", into = "PenaltySpec")]
pub struct Penalty {
    family: PenaltyFamily,
    a: f64,
}

/// Serialized form `{family: "scad"|"mcp"|"l1", a: float}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    #[serde(default)]
    pub a: Option<f64>,
}

impl TryFrom<PenaltySpec> for Penalty {
    type Error = HippoError;

    fn try_from(spec: PenaltySpec) -> Result<Self> {
        match (spec.family, spec.a) {
            (PenaltyFamily::Scad, a) => Penalty::scad(a.unwrap_or(DEFAULT_SCAD_A)),
            (PenaltyFamily::Mcp, a) => Penalty::mcp(a.unwrap_or(DEFAULT_MCP_A)),
            (PenaltyFamily::L1, _) => Ok(Penalty::l1()),
        }
    }
}

impl From<Penalty> for PenaltySpec {
    fn from(p: Penalty) -> Self {
        PenaltySpec {
            family: p.family,
            a: match p.family {
                PenaltyFamily::L1 => None,
                _ => Some(p.a),
            },
        }
    }
}

impl Default for Penalty {
    fn default() -> Self {
        Penalty {
            family: PenaltyFamily::Scad,
            a: DEFAULT_SCAD_A,
        }
    }
}

fn check_nonneg(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HippoError::Domain(format!("{name} must be finite and >= 0, got {v}")))
    }
}

impl Penalty {
    pub fn scad(a: f64) -> Result<Self> {
        if !(a > 2.0 && a.is_finite()) {
            return Err(HippoError::Domain(format!("SCAD requires a > 2, got {a}")));
        }
        Ok(Penalty {
            family: PenaltyFamily::Scad,
            a,
        })
    }

    pub fn mcp(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(HippoError::Domain(format!("MCP requires a > 0, got {a}")));
        }
        Ok(Penalty {
            family: PenaltyFamily::Mcp,
            a,
        })
    }

    pub fn l1() -> Self {
        Penalty {
            family: PenaltyFamily::L1,
            a: f64::INFINITY,
        }
    }

    pub fn family(&self) -> PenaltyFamily {
        self.family
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    /// Right derivative `rho'_lambda(beta)` for `beta >= 0`.
    pub fn deriv(&self, beta: f64, lambda: f64) -> Result<f64> {
        check_nonneg("beta", beta)?;
        check_nonneg("lambda", lambda)?;
        Ok(self.deriv_unchecked(beta, lambda))
    }

    /// `rho_lambda(beta)` for `beta >= 0`, in closed form.
    pub fn value(&self, beta: f64, lambda: f64) -> Result<f64> {
        check_nonneg("beta", beta)?;
        check_nonneg("lambda", lambda)?;
        Ok(self.value_unchecked(beta, lambda))
    }

    #[inline]
    pub(crate) fn deriv_unchecked(&self, beta: f64, lambda: f64) -> f64 {
        if beta == 0.0 {
            return lambda;
        }
        if lambda == 0.0 {
            return 0.0;
        }
        let a = self.a;
        match self.family {
            PenaltyFamily::L1 => lambda,
            PenaltyFamily::Scad => {
                if beta <= lambda {
                    lambda
                } else {
                    (a * lambda - beta).max(0.0) / (a - 1.0)
                }
            }
            PenaltyFamily::Mcp => (a * lambda - beta).max(0.0) / a,
        }
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, beta: f64, lambda: f64) -> f64 {
        if beta == 0.0 || lambda == 0.0 {
            return 0.0;
        }
        let a = self.a;
        match self.family {
            PenaltyFamily::L1 => lambda * beta,
            PenaltyFamily::Scad => {
                if beta <= lambda {
                    lambda * beta
                } else if beta <= a * lambda {
                    (2.0 * a * lambda * beta - beta * beta - lambda * lambda) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * lambda * lambda / 2.0
                }
            }
            PenaltyFamily::Mcp => {
                if beta <= a * lambda {
                    lambda * beta - beta * beta / (2.0 * a)
                } else {
                    a * lambda * lambda / 2.0
                }
            }
        }
    }

    /// Sum of `rho_{lambda_j}(|coeff_j|)`.
    pub(crate) fn total(&self, coeffs: &[f64], lambdas: &[f64]) -> f64 {
        coeffs
            .iter()
            .zip(lambdas)
            .map(|(&c, &l)| self.value_unchecked(c.abs(), l))
            .sum()
    }

    /// Local linear approximation weights `w_j = rho'_{lambda_j}(|coeff_j|)`.
    pub fn lla_weights(&self, coeffs: &[f64], lambdas: &[f64]) -> Result<Vec<f64>> {
        check_len("lla_weights lambdas", coeffs.len(), lambdas.len())?;
        lambdas
            .iter()
            .zip(coeffs)
            .map(|(&l, &c)| {
                if !c.is_finite() {
                    return Err(HippoError::Domain(format!("non-finite coefficient {c}")));
                }
                self.deriv(c.abs(), l)
            })
            .collect()
    }
}
