//! Exponential utilities applied to temporal-difference errors.
//!
//! `u(y) = -exp(β y)` for `β < 0` (risk-averse) and `u(y) = exp(β y)` for
//! `β > 0` (risk-seeking), evaluated at `y = clamp(x, -M, M)`. Clamping the
//! argument makes the difference quotient of `u` bounded above and below on
//! the truncation interval, which the convergence argument for the Q-updates
//! relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default truncation half-width is `DEFAULT_TRUNCATION_SCALE / |β|`.
pub const DEFAULT_TRUNCATION_SCALE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UtilitySpec")]
pub struct UtilityParams {
    beta: f64,
    truncation: f64,
    shift: f64,
}

impl UtilityParams {
    /// `β` with the default truncation and the sign-consistent shift
    /// (`x₀ = -1` for `β < 0`, `x₁ = +1` for `β > 0`).
    pub fn new(beta: f64) -> Result<Self> {
        if !beta.is_finite() || beta == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "utility beta must be finite and nonzero, got {beta}"
            )));
        }
        Self::with_truncation(beta, DEFAULT_TRUNCATION_SCALE / beta.abs())
    }

    pub fn with_truncation(beta: f64, truncation: f64) -> Result<Self> {
        Self::custom(beta, truncation, beta.signum())
    }

    /// Fully explicit parameters; `shift` overrides the sign-consistent default.
    pub fn custom(beta: f64, truncation: f64, shift: f64) -> Result<Self> {
        if !beta.is_finite() || beta == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "utility beta must be finite and nonzero, got {beta}"
            )));
        }
        if !truncation.is_finite() || truncation < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "truncation must be finite and nonnegative, got {truncation}"
            )));
        }
        if !shift.is_finite() {
            return Err(Error::InvalidParameter(format!("shift must be finite, got {shift}")));
        }
        Ok(Self { beta, truncation, shift })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn is_risk_averse(&self) -> bool {
        self.beta < 0.0
    }

    #[inline]
    pub fn utility(&self, x: f64) -> f64 {
        let y = x.clamp(-self.truncation, self.truncation);
        let e = (self.beta * y).exp();
        if self.beta < 0.0 {
            -e
        } else {
            e
        }
    }

    /// `ũ(x) = u(x) - x₀`; zero at `x = 0` for the standard pairings.
    #[inline]
    pub fn shifted(&self, x: f64) -> f64 {
        self.utility(x) - self.shift
    }

    /// Infimum and supremum `(ε, L)` of the difference quotient of `u` on
    /// `[-M, M]`.
    pub fn lipschitz_bounds(&self) -> (f64, f64) {
        let b = self.beta.abs();
        let m = self.truncation;
        (b * (-b * m).exp(), b * (b * m).exp())
    }
}

/// Config form of [`UtilityParams`]; omitted fields take their defaults.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub beta: f64,
    #[serde(default)]
    pub truncation: Option<f64>,
    #[serde(default)]
    pub shift: Option<f64>,
}

impl TryFrom<UtilitySpec> for UtilityParams {
    type Error = Error;

    fn try_from(spec: UtilitySpec) -> Result<Self> {
        let base = UtilityParams::new(spec.beta)?;
        UtilityParams::custom(
            spec.beta,
            spec.truncation.unwrap_or(base.truncation),
            spec.shift.unwrap_or(base.shift),
        )
    }
}

/// Free-function form of [`UtilityParams::utility`].
pub fn utility(x: f64, p: &UtilityParams) -> f64 {
    p.utility(x)
}

pub fn shifted_utility(x: f64, p: &UtilityParams) -> f64 {
    p.shifted(x)
}

pub fn lipschitz_bounds(p: &UtilityParams) -> (f64, f64) {
    p.lipschitz_bounds()
}
