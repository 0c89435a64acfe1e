//! Transfer-function families and the matching function derived from them.
//!
//! A transfer function `psi(t, r)` encodes the feasible payoff frontier of a
//! matched pair: the pair can realize payoffs `(t, r)` iff `psi(t, r) <= 0`.
//! Four named families are built in:
//!
//! * `TU`  — perfectly transferable utility, `t + r - phi`
//! * `NTU` — non-transferable utility, `max(t - alpha, r - gamma)`
//! * `LTU` — linear transfers, `lambda (t - alpha) + zeta (r - gamma)`
//! * `ETU` — exponential transfers, `tau log((e^{(t-alpha)/tau} + e^{(r-gamma)/tau}) / 2)`,
//!   whose `tau` interpolates between NTU (`tau -> 0`) and TU (`tau -> inf`).
//!
//! Each family induces a matching function: `matching_mass(T, u, v)` is the
//! unique `m > 0` with `psi(T log m + u, T log m + v) = 0`. Built-in families
//! use closed forms evaluated in log space; custom transfers fall back to a
//! bracketed scalar solve.

use std::fmt;
use std::sync::Arc;

use crate::numeric::{exp_clamped, log_add_exp};
use crate::rootfind::{self, Bracket};

/// Relative tolerance for the custom-family scalar solve.
pub const DEFAULT_ROOT_TOL: f64 = 1e-13;

/// Bound on `log m` explored when bracketing a custom-family root.
const LOG_MASS_BOUND: f64 = 350.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TransferError {
    #[error("non-finite input to transfer evaluation (t={t}, r={r})")]
    NonFinite { t: f64, r: f64 },
    #[error("{family} parameter `{name}` must be strictly positive, got {value}")]
    InvalidParameter {
        family: &'static str,
        name: &'static str,
        value: f64,
    },
    #[error("temperature must be strictly positive and finite, got {0}")]
    InvalidTemperature(f64),
    #[error(
        "matching mass for {family} transfer has no root in [exp(-350), exp(350)] at u={u}, v={v}"
    )]
    UnboundedTransfer { family: String, u: f64, v: f64 },
    #[error("{operation} is not available for the {family} family")]
    UnsupportedFamily {
        family: String,
        operation: &'static str,
    },
    #[error("mass arguments must be strictly positive, got mu_x0={mu_x0}, mu_0y={mu_0y}")]
    NonPositiveMass { mu_x0: f64, mu_0y: f64 },
}

/// A user-supplied transfer function.
///
/// The constructor name records the monotonicity certificate: callers assert
/// that `psi` is continuous and isotone in both arguments (strictly in at
/// least one). The optional gradient returns `(d psi/dt, d psi/dr)` and
/// enables Newton polishing and the Jacobian diagnostic.
type PsiFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type PsiGradientFn = Box<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

pub struct CustomTransfer {
    label: String,
    psi: PsiFn,
    gradient: Option<PsiGradientFn>,
}

impl CustomTransfer {
    /// Wraps an isotone transfer function. The caller certifies monotonicity.
    pub fn new_isotone(
        label: impl Into<String>,
        psi: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        CustomTransfer {
            label: label.into(),
            psi: Box::new(psi),
            gradient: None,
        }
    }

    /// Attaches an analytic gradient `(d/dt, d/dr)`.
    pub fn with_gradient(
        mut self,
        gradient: impl Fn(f64, f64) -> (f64, f64) + Send + Sync + 'static,
    ) -> Self {
        self.gradient = Some(Box::new(gradient));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn has_gradient(&self) -> bool {
        self.gradient.is_some()
    }
}

impl fmt::Debug for CustomTransfer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTransfer")
            .field("label", &self.label)
            .field("gradient", &self.gradient.is_some())
            .finish()
    }
}

/// A pair-level transfer technology.
#[derive(Debug, Clone)]
pub enum TransferSpec {
    /// Perfectly transferable utility with joint surplus `phi`.
    Tu { phi: f64 },
    /// Non-transferable utility with reservation payoffs `alpha`, `gamma`.
    Ntu { alpha: f64, gamma: f64 },
    /// Linearly transferable utility; `lambda`, `zeta` weight the two sides.
    Ltu {
        lambda: f64,
        zeta: f64,
        alpha: f64,
        gamma: f64,
    },
    /// Exponentially transferable utility; `tau` is the degree of
    /// transferability.
    Etu { tau: f64, alpha: f64, gamma: f64 },
    /// Library-only custom transfer; not loadable from market files.
    Custom(Arc<CustomTransfer>),
}

impl PartialEq for TransferSpec {
    fn eq(&self, other: &Self) -> bool {
        use TransferSpec::*;
        match (self, other) {
            (Tu { phi: a }, Tu { phi: b }) => a == b,
            (
                Ntu {
                    alpha: a1,
                    gamma: g1,
                },
                Ntu {
                    alpha: a2,
                    gamma: g2,
                },
            ) => a1 == a2 && g1 == g2,
            (
                Ltu {
                    lambda: l1,
                    zeta: z1,
                    alpha: a1,
                    gamma: g1,
                },
                Ltu {
                    lambda: l2,
                    zeta: z2,
                    alpha: a2,
                    gamma: g2,
                },
            ) => l1 == l2 && z1 == z2 && a1 == a2 && g1 == g2,
            (
                Etu {
                    tau: t1,
                    alpha: a1,
                    gamma: g1,
                },
                Etu {
                    tau: t2,
                    alpha: a2,
                    gamma: g2,
                },
            ) => t1 == t2 && a1 == a2 && g1 == g2,
            (Custom(a), Custom(b)) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

fn check_positive(
    family: &'static str,
    name: &'static str,
    value: f64,
) -> Result<(), TransferError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(TransferError::InvalidParameter {
            family,
            name,
            value,
        })
    }
}

fn check_finite_inputs(t: f64, r: f64) -> Result<(), TransferError> {
    if t.is_finite() && r.is_finite() {
        Ok(())
    } else {
        Err(TransferError::NonFinite { t, r })
    }
}

fn check_temperature(t: f64) -> Result<(), TransferError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(TransferError::InvalidTemperature(t))
    }
}

impl TransferSpec {
    pub fn family_name(&self) -> &str {
        match self {
            TransferSpec::Tu { .. } => "TU",
            TransferSpec::Ntu { .. } => "NTU",
            TransferSpec::Ltu { .. } => "LTU",
            TransferSpec::Etu { .. } => "ETU",
            TransferSpec::Custom(c) => c.label(),
        }
    }

    /// Checks the family parameter constraints.
    pub fn validate(&self) -> Result<(), TransferError> {
        match self {
            TransferSpec::Tu { phi } => {
                if !phi.is_finite() {
                    return Err(TransferError::InvalidParameter {
                        family: "TU",
                        name: "phi",
                        value: *phi,
                    });
                }
            }
            TransferSpec::Ntu { alpha, gamma } => {
                for (name, value) in [("alpha", *alpha), ("gamma", *gamma)] {
                    if !value.is_finite() {
                        return Err(TransferError::InvalidParameter {
                            family: "NTU",
                            name,
                            value,
                        });
                    }
                }
            }
            TransferSpec::Ltu {
                lambda,
                zeta,
                alpha,
                gamma,
            } => {
                check_positive("LTU", "lambda", *lambda)?;
                check_positive("LTU", "zeta", *zeta)?;
                for (name, value) in [("alpha", *alpha), ("gamma", *gamma)] {
                    if !value.is_finite() {
                        return Err(TransferError::InvalidParameter {
                            family: "LTU",
                            name,
                            value,
                        });
                    }
                }
            }
            TransferSpec::Etu { tau, alpha, gamma } => {
                check_positive("ETU", "tau", *tau)?;
                for (name, value) in [("alpha", *alpha), ("gamma", *gamma)] {
                    if !value.is_finite() {
                        return Err(TransferError::InvalidParameter {
                            family: "ETU",
                            name,
                            value,
                        });
                    }
                }
            }
            TransferSpec::Custom(_) => {}
        }
        Ok(())
    }

    /// Whether the induced matching function is continuously differentiable.
    /// NTU is ruled out by its kink; custom transfers qualify only when they
    /// declare a gradient.
    pub fn is_smooth(&self) -> bool {
        match self {
            TransferSpec::Tu { .. } | TransferSpec::Ltu { .. } | TransferSpec::Etu { .. } => true,
            TransferSpec::Ntu { .. } => false,
            TransferSpec::Custom(c) => c.has_gradient(),
        }
    }

    /// Evaluates the transfer function at payoffs `(t, r)`.
    pub fn psi(&self, t: f64, r: f64) -> Result<f64, TransferError> {
        check_finite_inputs(t, r)?;
        Ok(match self {
            TransferSpec::Tu { phi } => t + r - phi,
            TransferSpec::Ntu { alpha, gamma } => (t - alpha).max(r - gamma),
            TransferSpec::Ltu {
                lambda,
                zeta,
                alpha,
                gamma,
            } => lambda * (t - alpha) + zeta * (r - gamma),
            TransferSpec::Etu { tau, alpha, gamma } => {
                // tau * log((e^a + e^b) / 2) via log-sum-exp; stays finite
                // for |(t - alpha)/tau|, |(r - gamma)/tau| well beyond 700.
                let a = (t - alpha) / tau;
                let b = (r - gamma) / tau;
                tau * (log_add_exp(a, b) - std::f64::consts::LN_2)
            }
            TransferSpec::Custom(c) => (c.psi)(t, r),
        })
    }

    /// Upper bound on `|d psi/dt| + |d psi/dr|` over the whole domain.
    /// Custom transfers without further information are assumed to be at
    /// most TU-steep.
    pub fn gradient_bound(&self) -> f64 {
        match self {
            TransferSpec::Tu { .. } => 2.0,
            TransferSpec::Ntu { .. } | TransferSpec::Etu { .. } => 1.0,
            TransferSpec::Ltu { lambda, zeta, .. } => lambda + zeta,
            TransferSpec::Custom(_) => 2.0,
        }
    }

    /// Gradient `(d psi/dt, d psi/dr)` when available. NTU returns its
    /// active-branch one-sided derivative.
    pub fn psi_gradient(&self, t: f64, r: f64) -> Option<(f64, f64)> {
        match self {
            TransferSpec::Tu { .. } => Some((1.0, 1.0)),
            TransferSpec::Ntu { alpha, gamma } => {
                if t - alpha >= r - gamma {
                    Some((1.0, 0.0))
                } else {
                    Some((0.0, 1.0))
                }
            }
            TransferSpec::Ltu { lambda, zeta, .. } => Some((*lambda, *zeta)),
            TransferSpec::Etu { tau, alpha, gamma } => {
                // Weights are the softmax of the two shifted arguments.
                let d = ((t - alpha) - (r - gamma)) / tau;
                let w_t = 1.0 / (1.0 + (-d).exp());
                Some((w_t, 1.0 - w_t))
            }
            TransferSpec::Custom(c) => c.gradient.as_ref().map(|g| g(t, r)),
        }
    }

    /// `log` of the matching mass: the unique `s = log m` with
    /// `psi(T s + u, T s + v) = 0`.
    pub fn log_matching_mass(
        &self,
        temperature: f64,
        u: f64,
        v: f64,
    ) -> Result<f64, TransferError> {
        self.log_matching_mass_with_tol(temperature, u, v, DEFAULT_ROOT_TOL)
    }

    /// Same as [`log_matching_mass`](Self::log_matching_mass) with an
    /// explicit relative tolerance for the custom-family solve.
    pub fn log_matching_mass_with_tol(
        &self,
        temperature: f64,
        u: f64,
        v: f64,
        root_tol: f64,
    ) -> Result<f64, TransferError> {
        check_temperature(temperature)?;
        check_finite_inputs(u, v)?;
        let t_inv = 1.0 / temperature;
        Ok(match self {
            TransferSpec::Tu { phi } => 0.5 * (phi - u - v) * t_inv,
            TransferSpec::Ntu { alpha, gamma } => (alpha - u).min(gamma - v) * t_inv,
            TransferSpec::Ltu {
                lambda,
                zeta,
                alpha,
                gamma,
            } => (lambda * (alpha - u) + zeta * (gamma - v)) / (temperature * (lambda + zeta)),
            TransferSpec::Etu { tau, alpha, gamma } => {
                let a = (u - alpha) / tau;
                let b = (v - gamma) / tau;
                -(tau * t_inv) * (log_add_exp(a, b) - std::f64::consts::LN_2)
            }
            TransferSpec::Custom(_) => self.custom_log_mass(temperature, u, v, root_tol)?,
        })
    }

    /// The matching mass `m` itself, clamped to a finite range.
    pub fn matching_mass(&self, temperature: f64, u: f64, v: f64) -> Result<f64, TransferError> {
        Ok(exp_clamped(self.log_matching_mass(temperature, u, v)?))
    }

    /// Custom-family solve in `s = log m`: bracket by doubling away from
    /// `m = 1`, bisect, then Newton-polish when a gradient is declared.
    fn custom_log_mass(
        &self,
        temperature: f64,
        u: f64,
        v: f64,
        root_tol: f64,
    ) -> Result<f64, TransferError> {
        // psi is isotone, so the gap below is increasing in s; negate it to
        // reuse the decreasing-function solver.
        let gap = |s: f64| -> Result<f64, TransferError> {
            Ok(-self.psi(temperature * s + u, temperature * s + v)?)
        };
        let bracket = match rootfind::expand_bracket(gap, 0.0, -LOG_MASS_BOUND, LOG_MASS_BOUND)? {
            Bracket::Found { lo, hi, f_lo, f_hi } => (lo, hi, f_lo, f_hi),
            Bracket::NotFound => {
                return Err(TransferError::UnboundedTransfer {
                    family: self.family_name().to_owned(),
                    u,
                    v,
                })
            }
        };
        let derivative = |s: f64| -> Option<f64> {
            let (dt, dr) = self.psi_gradient(temperature * s + u, temperature * s + v)?;
            Some(-temperature * (dt + dr))
        };
        rootfind::solve_decreasing(gap, Some(derivative), bracket, root_tol)
    }

    /// Gradient `(dm/du, dm/dv)` of the matching mass, when the family is
    /// smooth at the point. Derived from the implicit definition:
    /// `dm/du = -m d1 / (T (d1 + d2))` with `d_i` the psi partials on the
    /// frontier. Returns zeros where the mass itself saturated the
    /// exponential clamp.
    pub fn matching_mass_gradient(
        &self,
        temperature: f64,
        u: f64,
        v: f64,
    ) -> Result<Option<(f64, f64)>, TransferError> {
        let log_m = self.log_matching_mass(temperature, u, v)?;
        if crate::numeric::saturates(log_m) {
            return Ok(Some((0.0, 0.0)));
        }
        let m = log_m.exp();
        let t = temperature * log_m + u;
        let r = temperature * log_m + v;
        Ok(self.psi_gradient(t, r).map(|(d1, d2)| {
            let denom = temperature * (d1 + d2);
            (-m * d1 / denom, -m * d2 / denom)
        }))
    }

    /// Closed-form matching mass from unmatched masses at unit temperature.
    pub fn closed_form_mass(&self, mu_x0: f64, mu_0y: f64) -> Result<f64, TransferError> {
        if !(mu_x0 > 0.0 && mu_0y > 0.0 && mu_x0.is_finite() && mu_0y.is_finite()) {
            return Err(TransferError::NonPositiveMass { mu_x0, mu_0y });
        }
        let log_x0 = mu_x0.ln();
        let log_0y = mu_0y.ln();
        let log_mass = match self {
            TransferSpec::Tu { phi } => 0.5 * (log_x0 + log_0y + phi),
            TransferSpec::Ntu { alpha, gamma } => (log_x0 + alpha).min(log_0y + gamma),
            TransferSpec::Ltu {
                lambda,
                zeta,
                alpha,
                gamma,
            } => (lambda * (alpha + log_x0) + zeta * (gamma + log_0y)) / (lambda + zeta),
            TransferSpec::Etu { tau, alpha, gamma } => {
                let a = (-alpha - log_x0) / tau;
                let b = (-gamma - log_0y) / tau;
                -tau * (log_add_exp(a, b) - std::f64::consts::LN_2)
            }
            TransferSpec::Custom(_) => {
                return Err(TransferError::UnsupportedFamily {
                    family: self.family_name().to_owned(),
                    operation: "closed-form matching mass",
                })
            }
        };
        Ok(exp_clamped(log_mass))
    }
}

/// Mass of agents taking the unmatched option at payoff `w`:
/// `exp(-w / temperature)`, with the exponent clamped.
///
/// The caller guarantees `temperature > 0`.
pub fn unmatched_mass(temperature: f64, w: f64) -> f64 {
    debug_assert!(temperature > 0.0);
    exp_clamped(-w / temperature)
}

/// `log` of [`unmatched_mass`], unclamped.
pub fn log_unmatched_mass(temperature: f64, w: f64) -> f64 {
    debug_assert!(temperature > 0.0);
    -w / temperature
}
