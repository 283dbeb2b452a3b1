//! Utility random fields: HARA family with time discount, plus closure-backed
//! custom fields, and the checks every field must pass before use.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Interface shared by the finite-market solver and the simulator.
pub trait UtilityRandomField: Send + Sync {
    fn u(&self, t: f64, x: f64) -> Result<f64>;
    fn u_prime(&self, t: f64, x: f64) -> Result<f64>;
    /// Solves `u_prime(t, I) = y`.
    fn inverse_marginal(&self, t: f64, y: f64) -> Result<f64>;
    /// `V(t, y) = sup_x [U(t, x) - x y]`.
    fn conjugate(&self, t: f64, y: f64) -> Result<f64>;
    /// `dI/dy`; defaults to a central difference.
    /// `lim_{x -> 0+} U(t, x)`, possibly `-inf`.
    fn u_at_zero(&self, _t: f64) -> f64 {
        f64::NEG_INFINITY
    }
    fn inverse_marginal_dy(&self, t: f64, y: f64) -> Result<f64> {
        let h = 1e-6 * y;
        Ok((self.inverse_marginal(t, y + h)? - self.inverse_marginal(t, y - h)?) / (2.0 * h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum Family {
    Log,
    Power { gamma: f64 },
}

/// Decreasing envelope `K1(x) <= U_x(t, x) <= K2(x)`.
#[derive(Clone)]
pub struct Envelope {
    pub k1: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub k2: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Envelope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Envelope { .. }")
    }
}

/// Constants with `G <= U(t, 1) <= D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitBounds {
    pub g: f64,
    pub d: f64,
}

/// `exp(-beta t) U_gamma(x)` with `U_gamma(x) = (x^gamma - 1)/gamma` or `log x`.
#[derive(Debug, Clone)]
pub struct UtilityField {
    pub family: Family,
    pub beta: f64,
    pub envelope: Option<Envelope>,
    pub bounds: Option<UnitBounds>,
}

/// Serialized form used in tree files: `{"family": "power", "gamma": 0.5, "beta": 0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Log,
    Power,
}

impl UtilitySpec {
    pub fn build(&self) -> Result<UtilityField> {
        match (self.family, self.gamma) {
            (FamilyName::Log, None) => UtilityField::log(self.beta),
            (FamilyName::Log, Some(_)) => Err(Error::Config("log utility takes no gamma".into())),
            (FamilyName::Power, Some(g)) => UtilityField::power(g, self.beta),
            (FamilyName::Power, None) => Err(Error::Config("power utility requires gamma".into())),
        }
    }
}

impl UtilityField {
    pub fn log(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self {
            family: Family::Log,
            beta,
            envelope: None,
            bounds: None,
        })
    }

    pub fn power(gamma: f64, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        if !(gamma < 1.0 && gamma != 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!(
                "power utility needs gamma < 1 and gamma != 0, got {gamma}"
            )));
        }
        Ok(Self {
            family: Family::Power { gamma },
            beta,
            envelope: None,
            bounds: None,
        })
    }

    pub fn with_envelope(mut self, envelope: Envelope) -> Self {
        self.envelope = Some(envelope);
        self
    }

    pub fn with_bounds(mut self, bounds: UnitBounds) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn spec(&self) -> UtilitySpec {
        match self.family {
            Family::Log => UtilitySpec {
                family: FamilyName::Log,
                gamma: None,
                beta: self.beta,
            },
            Family::Power { gamma } => UtilitySpec {
                family: FamilyName::Power,
                gamma: Some(gamma),
                beta: self.beta,
            },
        }
    }

    fn discount(&self, t: f64) -> f64 {
        (-self.beta * t).exp()
    }

    /// Constants `(A, B)` with `U(t, delta x) >= A + B U(t, x)` for `delta` in (0,1).
    pub fn scaling_constants(&self, delta: f64) -> Result<(f64, f64)> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(
                "scaling_constants",
                format!("delta must lie in (0,1), got {delta}"),
            ));
        }
        Ok(match self.family {
            Family::Log => (delta.ln(), 1.0),
            Family::Power { gamma } => {
                let b = delta.powf(gamma);
                ((b - 1.0) / gamma, b)
            }
        })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
    }
    Ok(())
}

fn positive(op: &'static str, name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(domain(op, format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl UtilityRandomField for UtilityField {
    fn u(&self, t: f64, x: f64) -> Result<f64> {
        positive("u_eval", "x", x)?;
        let base = match self.family {
            Family::Log => x.ln(),
            Family::Power { gamma } => (x.powf(gamma) - 1.0) / gamma,
        };
        Ok(self.discount(t) * base)
    }

    fn u_prime(&self, t: f64, x: f64) -> Result<f64> {
        positive("u_prime", "x", x)?;
        let base = match self.family {
            Family::Log => 1.0 / x,
            Family::Power { gamma } => x.powf(gamma - 1.0),
        };
        Ok(self.discount(t) * base)
    }

    fn inverse_marginal(&self, t: f64, y: f64) -> Result<f64> {
        positive("inverse_marginal", "y", y)?;
        Ok(match self.family {
            Family::Log => self.discount(t) / y,
            Family::Power { gamma } => (y / self.discount(t)).powf(1.0 / (gamma - 1.0)),
        })
    }

    fn conjugate(&self, t: f64, y: f64) -> Result<f64> {
        positive("conjugate", "y", y)?;
        let d = self.discount(t);
        Ok(match self.family {
            Family::Log => d * (-self.beta * t - y.ln() - 1.0),
            Family::Power { gamma } => {
                let i = (y / d).powf(1.0 / (gamma - 1.0));
                d * i.powf(gamma) * (1.0 / gamma - 1.0) - d / gamma
            }
        })
    }

    fn u_at_zero(&self, t: f64) -> f64 {
        match self.family {
            Family::Power { gamma } if gamma > 0.0 => -self.discount(t) / gamma,
            _ => f64::NEG_INFINITY,
        }
    }

    fn inverse_marginal_dy(&self, t: f64, y: f64) -> Result<f64> {
        let i = self.inverse_marginal(t, y)?;
        Ok(match self.family {
            Family::Log => -i / y,
            Family::Power { gamma } => i / ((gamma - 1.0) * y),
        })
    }
}

type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A user-supplied field given by closures `(t, x) -> value`. The conjugate
/// is derived as `U(t, I(t,y)) - y I(t,y)` when not supplied.
#[derive(Clone)]
pub struct CallbackField {
    pub u: ScalarFn,
    pub u_prime: ScalarFn,
    pub inverse_marginal: ScalarFn,
    pub conjugate: Option<ScalarFn>,
}

impl fmt::Debug for CallbackField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CallbackField { .. }")
    }
}

fn finite(op: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(domain(op, format!("callback returned {v}")))
    }
}

impl UtilityRandomField for CallbackField {
    fn u(&self, t: f64, x: f64) -> Result<f64> {
        positive("u_eval", "x", x)?;
        finite("u_eval", (self.u)(t, x))
    }

    fn u_prime(&self, t: f64, x: f64) -> Result<f64> {
        positive("u_prime", "x", x)?;
        finite("u_prime", (self.u_prime)(t, x))
    }

    fn inverse_marginal(&self, t: f64, y: f64) -> Result<f64> {
        positive("inverse_marginal", "y", y)?;
        finite("inverse_marginal", (self.inverse_marginal)(t, y))
    }

    fn conjugate(&self, t: f64, y: f64) -> Result<f64> {
        positive("conjugate", "y", y)?;
        match &self.conjugate {
            Some(v) => finite("conjugate", v(t, y)),
            None => {
                let i = self.inverse_marginal(t, y)?;
                Ok(self.u(t, i)? - y * i)
            }
        }
    }
}

/// One named check of [`validate_field`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldCheck {
    pub name: &'static str,
    pub pass: bool,
    pub worst: f64,
}

/// Runs the field contract on grids: monotonicity, midpoint concavity,
/// Inada behaviour at the grid ends, the marginal round trip and the
/// conjugate identity.
pub fn validate_field(field: &dyn UtilityRandomField, t_grid: &[f64], tol: f64) -> Result<Vec<FieldCheck>> {
    let xs: Vec<f64> = (-40..=40).map(|k| 10f64.powf(k as f64 / 5.0)).collect();
    let mut increasing = f64::INFINITY;
    let mut concave = f64::INFINITY;
    let mut inada_low = f64::INFINITY;
    let mut inada_high: f64 = 0.0;
    let mut round_trip: f64 = 0.0;
    let mut identity: f64 = 0.0;
    for &t in t_grid {
        let u1 = field.u_prime(t, 1.0)?;
        inada_low = inada_low.min(field.u_prime(t, xs[0])? / u1);
        inada_high = inada_high.max(field.u_prime(t, *xs.last().unwrap())? / u1);
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (ua, ub) = (field.u(t, a)?, field.u(t, b)?);
            increasing = increasing.min(field.u_prime(t, a)?);
            if ub < ua {
                increasing = increasing.min(ub - ua);
            }
            let mid = field.u(t, 0.5 * (a + b))?;
            let slack = mid - 0.5 * (ua + ub);
            concave = concave.min(slack / (1.0 + mid.abs()));
        }
        for &y in &xs {
            let i = field.inverse_marginal(t, y)?;
            round_trip = round_trip.max((field.u_prime(t, i)? - y).abs() / y);
            let lhs = field.u(t, i)?;
            let rhs = field.conjugate(t, y)? + y * i;
            identity = identity.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
    }
    Ok(vec![
        FieldCheck {
            name: "strictly_increasing",
            pass: increasing > 0.0,
            worst: increasing,
        },
        FieldCheck {
            name: "midpoint_concave",
            pass: concave > -tol,
            worst: concave,
        },
        FieldCheck {
            name: "inada_at_zero",
            pass: inada_low > 1e2,
            worst: inada_low,
        },
        FieldCheck {
            name: "inada_at_infinity",
            pass: inada_high < 1e-2,
            worst: inada_high,
        },
        FieldCheck {
            name: "marginal_round_trip",
            pass: round_trip <= tol,
            worst: round_trip,
        },
        FieldCheck {
            name: "conjugate_identity",
            pass: identity <= tol,
            worst: identity,
        },
    ])
}

/// Samples of `x U_x / U` on the part of an increasing grid where `U > 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElasticityProfile {
    pub samples: Vec<(f64, f64)>,
    pub sup: f64,
    /// Value at the largest grid point, the stand-in for the limsup.
    pub tail: f64,
    /// Raised when the tail estimate is not below 1.
    pub flagged: bool,
}

pub fn elasticity_profile(field: &dyn UtilityRandomField, t: f64, x_grid: &[f64]) -> Result<ElasticityProfile> {
    if x_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("elasticity_profile", "x_grid must be increasing"));
    }
    let mut samples = Vec::new();
    for &x in x_grid {
        let u = field.u(t, x)?;
        if u > 0.0 {
            samples.push((x, x * field.u_prime(t, x)? / u));
        }
    }
    let Some(&(_, tail)) = samples.last() else {
        return Err(domain("elasticity_profile", "U is not positive anywhere on the grid"));
    };
    let sup = samples.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.1));
    Ok(ElasticityProfile {
        samples,
        sup,
        tail,
        flagged: tail >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        let log = UtilityField::log(0.0).unwrap();
        let pow = UtilityField::power(0.5, 0.0).unwrap();
        assert_eq!(log.u(3.0, 1.0).unwrap(), 0.0);
        assert!((pow.u(0.0, 4.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((log.inverse_marginal(0.0, 2.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((pow.inverse_marginal(0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((log.conjugate(0.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        let log = UtilityField::log(0.1).unwrap();
        assert!(log.u(0.0, 0.0).is_err());
        assert!(log.u_prime(0.0, -1.0).is_err());
        assert!(log.inverse_marginal(0.0, 0.0).is_err());
        assert!(log.conjugate(0.0, -2.0).is_err());
        assert!(UtilityField::power(1.0, 0.0).is_err());
        assert!(UtilityField::power(0.0, 0.0).is_err());
        assert!(UtilityField::log(-1.0).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let s: UtilitySpec = serde_json::from_str(r#"{"family":"power","gamma":0.5,"beta":0.1}"#).unwrap();
        let f = s.build().unwrap();
        assert_eq!(f.spec(), s);
        assert!(serde_json::from_str::<UtilitySpec>(r#"{"family":"log","beta":0,"extra":1}"#).is_err());
        assert!(serde_json::from_str::<UtilitySpec>(r#"{"family":"power"}"#)
            .unwrap()
            .build()
            .is_err());
    }
}
