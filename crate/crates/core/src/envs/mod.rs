//! Environments and exact payoff computations.
//!
//! With a known HOB CDF `G` and marginal value `v`, the expected payoff of a
//! bid, measured relative to always losing, is
//! `r(b) = G(b)(v - b) + int_0^b G(m) dm`. Regret compares it against the
//! best bid, which by truthfulness of the second-price rule is `v` itself
//! (clamped to the bid range).

pub mod hob;
pub mod market;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::auction::SimRng;
use crate::error::{BidError, Result};

pub use hob::{
    atom_mix_cdf, beta_cdf, quad_integral_cdf, scan_local_bound, AtomMixHob, BetaHob, HobModel,
    PiecewiseHob, UniformHob,
};
pub use market::{Draw, Environment, LowerBoundEnv, PeriodicEnv, SimpleEnv};

/// Expected payoff of bidding `b` with marginal value `v`, relative to losing.
pub fn expected_reward<H: HobModel + ?Sized>(hob: &H, v: f64, b: f64) -> f64 {
    let b = b.clamp(0.0, 1.0);
    hob.cdf(b) * (v - b) + hob.integral_cdf(b)
}

/// Best bid and its reward, found by search: a `1e-4` sweep of `[0, 1]`
/// together with the atoms of `G`, then a `1e-6` sweep around the winner.
pub fn oracle_best<H: HobModel + ?Sized>(hob: &H, v: f64) -> (f64, f64) {
    let reward = |b: f64| expected_reward(hob, v, b);
    let mut best = (0.0, reward(0.0));
    let mut consider = |b: f64| {
        let r = reward(b);
        if r > best.1 {
            best = (b, r);
        }
    };
    for i in 0..=10_000 {
        consider(i as f64 * 1e-4);
    }
    for a in hob.atoms() {
        consider(a);
    }
    let centre = best.0;
    for i in -100..=100 {
        let b = centre + i as f64 * 1e-6;
        if (0.0..=1.0).contains(&b) {
            let r = reward(b);
            if r > best.1 {
                best = (b, r);
            }
        }
    }
    best
}

/// Reward of the truthful bid `clamp(v, 0, 1)`, which attains the optimum.
pub fn oracle_reward<H: HobModel + ?Sized>(hob: &H, v: f64) -> f64 {
    expected_reward(hob, v, v.clamp(0.0, 1.0))
}

/// Regret of bidding `b` instead of the truthful bid.
pub fn instant_regret<H: HobModel + ?Sized>(hob: &H, v: f64, b: f64) -> f64 {
    oracle_reward(hob, v) - expected_reward(hob, v, b)
}

/// Sum of the two suboptimality gaps of bid `b` in the two-point instance
/// with values `1/4` and `1/4 + 2 delta` and the atom-mix HOB.
pub fn two_point_gap(delta: f64, b: f64) -> f64 {
    let hob = AtomMixHob {
        delta,
        omega: 0.5,
    };
    let (mu1, mu2) = (0.25, 0.25 + 2.0 * delta);
    (expected_reward(&hob, mu1, mu1) - expected_reward(&hob, mu1, b))
        + (expected_reward(&hob, mu2, mu2) - expected_reward(&hob, mu2, b))
}

/// Smallest two-point gap over the bids of the horizon-`T` grid that lie in
/// `[1/4, 1/4 + 2 delta]`, with both endpoints always included, where
/// `delta = 1 / (4 sqrt T)`.
pub fn separation_check(horizon: usize) -> Result<f64> {
    if horizon < 16 {
        return Err(BidError::InvalidParameter(format!(
            "separation check needs T >= 16, got {horizon}"
        )));
    }
    let delta = 0.25 / (horizon as f64).sqrt();
    let (mu1, mu2) = (0.25, 0.25 + 2.0 * delta);
    let grid = crate::auction::BidGrid::new(horizon)?;
    let mut bids = vec![mu1, mu2];
    bids.extend(
        grid.points()
            .iter()
            .copied()
            .filter(|&b| b >= mu1 - 1e-12 && b <= mu2 + 1e-12),
    );
    Ok(bids
        .into_iter()
        .map(|b| two_point_gap(delta, b))
        .fold(f64::INFINITY, f64::min))
}

/// Configurable HOB family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HobSpec {
    Uniform {
        #[serde(default = "half")]
        omega: f64,
    },
    Beta {
        a: f64,
        b: f64,
        #[serde(default)]
        omega: Option<f64>,
    },
    AtomMix {
        delta: f64,
        #[serde(default = "half")]
        omega: f64,
    },
}

fn half() -> f64 {
    0.5
}

impl HobSpec {
    pub fn build(&self) -> Result<Arc<dyn HobModel>> {
        Ok(match *self {
            HobSpec::Uniform { omega } => {
                if !(omega > 0.0 && omega < 1.0) {
                    return Err(BidError::Config(format!("uniform omega {omega} outside (0, 1)")));
                }
                Arc::new(UniformHob { omega })
            }
            HobSpec::Beta { a, b, omega } => Arc::new(BetaHob::new(a, b, omega)?),
            HobSpec::AtomMix { delta, omega } => Arc::new(AtomMixHob::new(delta, omega)?),
        })
    }
}

/// Configurable environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvSpec {
    /// Gaussian contexts with a periodic baseline; Beta(5, 7) HOB by default.
    Periodic {
        #[serde(default)]
        hob: Option<HobSpec>,
        #[serde(default)]
        zero_baseline: bool,
    },
    /// Three-dimensional contexts with a two-level baseline; uniform HOB by
    /// default.
    Simple {
        #[serde(default)]
        hob: Option<HobSpec>,
    },
    /// Hard two-point instances split across sub-horizons.
    LowerBound,
}

impl EnvSpec {
    /// Builds the environment of one run; random parameters come from `rng`.
    pub fn build(&self, dim: usize, horizon: usize, rng: &mut SimRng) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSpec::Periodic { hob, zero_baseline } => {
                let hob = hob
                    .clone()
                    .unwrap_or(HobSpec::Beta {
                        a: 5.0,
                        b: 7.0,
                        omega: None,
                    })
                    .build()?;
                let env = PeriodicEnv::new(dim, hob, rng)?;
                Box::new(if *zero_baseline { env.with_zero_baseline() } else { env })
            }
            EnvSpec::Simple { hob } => {
                if dim != 3 {
                    return Err(BidError::Config(format!(
                        "the simple environment has d = 3, config says {dim}"
                    )));
                }
                let hob = hob.clone().unwrap_or(HobSpec::Uniform { omega: 0.5 }).build()?;
                Box::new(SimpleEnv::new(hob))
            }
            EnvSpec::LowerBound => Box::new(LowerBoundEnv::new(dim, horizon, rng)?),
        })
    }
}
