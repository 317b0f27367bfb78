//! Confidence-radius multipliers.
//!
//! The width formulas carry worst-case constants (`8 sqrt(...)`, `1 + 14 ln T`,
//! the `8 / (1 - lambda)` prefactor) that keep every confidence statement
//! valid with probability `1 - T^-3`. At horizons of a few thousand rounds
//! those constants dominate every threshold the policies compare against, so
//! the policies never leave exploration. [`Calibration`] scales the three
//! places they enter; the default is the unscaled formulas.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    /// Multiplier on the CDF width `u` before its cap at 1.
    pub cdf_radius: f64,
    /// Multiplier on the noise term `1 + 14 ln T` of the value radius.
    pub value_radius: f64,
    /// Multiplier on reward widths wherever they meet a threshold or a bonus.
    pub width: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self::theory()
    }
}

impl Calibration {
    pub const fn theory() -> Self {
        Self {
            cdf_radius: 1.0,
            value_radius: 1.0,
            width: 1.0,
        }
    }

    /// CDF and value radii of the size of finite-sample bands at horizons of
    /// 10^4 to 10^5 rounds, with the given threshold multiplier. The
    /// multiplier that makes exploration end depends on `d`, the HOB and the
    /// policy; the experiment configs shipped with the crate carry theirs.
    pub const fn desk(width: f64) -> Self {
        Self {
            cdf_radius: 0.005,
            value_radius: 0.01,
            width,
        }
    }

    pub fn is_theory(&self) -> bool {
        *self == Self::theory()
    }

    pub fn validate(&self) -> crate::error::Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.cdf_radius) && ok(self.value_radius) && ok(self.width) {
            Ok(())
        } else {
            Err(crate::error::BidError::Config(format!(
                "calibration multipliers must be positive and finite: {self:?}"
            )))
        }
    }
}
