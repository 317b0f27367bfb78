//! Second-price auction mechanics and the domain types shared by every
//! other module: the discretized bid grid, contexts, one-sided feedback and
//! the policy interface.
//!
//! Grid indices are 0-based throughout the crate: index `0` is the bid `0`
//! and index `len() - 1` is the bid `1`.

use serde::{Deserialize, Serialize};

use crate::error::{BidError, Result};

/// Seeded generator used for every simulation run (ChaCha with 8 rounds,
/// a counter-based stream cipher generator).
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Smallest `k` with `k * k >= n`.
pub fn ceil_sqrt(n: usize) -> usize {
    let mut k = (n as f64).sqrt() as usize;
    while k * k < n {
        k += 1;
    }
    while k > 0 && (k - 1) * (k - 1) >= n {
        k -= 1;
    }
    k
}

/// Uniform bid grid over `[0, 1]` with `J = ceil(sqrt(T)) + 1` points, so the
/// spacing `1 / ceil(sqrt(T))` never exceeds `1 / sqrt(T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidGrid {
    horizon: usize,
    points: Vec<f64>,
}

impl BidGrid {
    pub fn new(horizon: usize) -> Result<Self> {
        if horizon < 4 {
            return Err(BidError::HorizonTooShort(horizon));
        }
        let steps = ceil_sqrt(horizon);
        let points = (0..=steps).map(|j| j as f64 / steps as f64).collect();
        Ok(Self { horizon, points })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, index: usize) -> f64 {
        self.points[index]
    }

    pub fn last_index(&self) -> usize {
        self.points.len() - 1
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.points.len() - 1) as f64
    }

    pub fn check_index(&self, index: usize) -> Result<()> {
        if index < self.points.len() {
            Ok(())
        } else {
            Err(BidError::GridIndex {
                index,
                len: self.points.len(),
            })
        }
    }

    /// Grid index of `bid` if it sits on the grid (up to rounding).
    pub fn index_of(&self, bid: f64) -> Option<usize> {
        let steps = (self.points.len() - 1) as f64;
        let j = (bid * steps).round();
        if j < 0.0 || j > steps {
            return None;
        }
        let j = j as usize;
        ((self.points[j] - bid).abs() <= 1e-9).then_some(j)
    }

    /// Index of the largest grid point `<= bid` (bids below 0 map to 0).
    pub fn floor_index(&self, bid: f64) -> usize {
        let steps = (self.points.len() - 1) as f64;
        (bid * steps + 1e-9).floor().clamp(0.0, steps) as usize
    }
}

/// Feature vector with Euclidean norm at most one. Longer inputs are
/// normalized on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(mut x: Vec<f64>) -> Self {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            x.iter_mut().for_each(|v| *v /= norm);
        }
        Self(x)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// What the bidder sees after one auction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionFeedback {
    pub won: bool,
    /// The highest other bid, revealed only through the payment of a win.
    pub payment: Option<f64>,
    /// `v1` when won, `v0` when lost.
    pub observed_outcome: f64,
}

impl AuctionFeedback {
    pub fn won(payment: f64, outcome: f64) -> Self {
        Self {
            won: true,
            payment: Some(payment),
            observed_outcome: outcome,
        }
    }

    pub fn lost(outcome: f64) -> Self {
        Self {
            won: false,
            payment: None,
            observed_outcome: outcome,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.won, self.payment) {
            (true, None) => Err(BidError::WinWithoutPayment),
            (false, Some(_)) => Err(BidError::InvalidParameter(
                "lost auction carries a payment".into(),
            )),
            _ if !(0.0..=1.0).contains(&self.observed_outcome) => Err(BidError::InvalidParameter(
                format!("observed outcome {} outside [0, 1]", self.observed_outcome),
            )),
            _ => Ok(()),
        }
    }

    /// Recovers `1[bid >= m]` for a lower bid from this feedback, which
    /// must come from a bid at least as high. `None` only if `lower_bid`
    /// exceeds the bid that produced the feedback and the auction was lost.
    pub fn infer_win(&self, source_bid: f64, lower_bid: f64) -> Option<bool> {
        match self.payment {
            Some(m) => Some(lower_bid >= m),
            None if lower_bid <= source_bid => Some(false),
            None => None,
        }
    }
}

/// Local-boundedness parameters of the HOB CDF: any two bids within
/// `omega` have CDF values within `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HobParams {
    pub omega: f64,
    pub lambda: f64,
}

impl HobParams {
    pub fn new(omega: f64, lambda: f64) -> Result<Self> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(omega) || !open(lambda) {
            return Err(BidError::InvalidParameter(format!(
                "(omega, lambda) = ({omega}, {lambda}) must lie in (0, 1)"
            )));
        }
        Ok(Self { omega, lambda })
    }

    /// Perturbation `c = omega / 4` used by the interval selection.
    pub fn perturbation(&self) -> f64 {
        self.omega / 4.0
    }

    /// Margin `eps = (1 - lambda) / 8` used to pick the UCB formulation.
    pub fn margin(&self) -> f64 {
        (1.0 - self.lambda) / 8.0
    }
}

/// Second-price rule: the bidder wins iff `bid >= m` (ties win), pays `m`
/// and sees `v1`; otherwise pays nothing and sees `v0`.
pub fn run_auction(hob: f64, v1: f64, v0: f64, bid: f64) -> AuctionFeedback {
    if bid >= hob {
        AuctionFeedback::won(hob, v1)
    } else {
        AuctionFeedback::lost(v0)
    }
}

pub fn realized_payoff(feedback: &AuctionFeedback) -> f64 {
    feedback.observed_outcome - feedback.payment.unwrap_or(0.0)
}

/// Which branch of a policy produced a bid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Init,
    Explore,
    Assign,
    Exploit,
    Ucb,
    Plain,
}

impl Branch {
    /// Tag written to trajectory CSVs.
    pub fn tag(self) -> &'static str {
        match self {
            Branch::Explore => "explore",
            Branch::Assign => "assign",
            Branch::Exploit => "exploit",
            _ => "-",
        }
    }
}

/// A bid together with the bookkeeping its policy needs at update time.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub round: usize,
    pub bid: f64,
    pub grid_index: Option<usize>,
    pub branch: Branch,
    /// Level whose books absorb the round (leveled policies only).
    pub level: Option<usize>,
    /// CDF estimate at the chosen bid, before clipping, at decision time.
    pub g_hat: f64,
    /// CDF width at the chosen bid at decision time.
    pub width: f64,
    pub audit: Option<crate::master::Audit>,
}

impl Decision {
    pub fn plain(round: usize, bid: f64, branch: Branch) -> Self {
        Self {
            round,
            bid,
            grid_index: None,
            branch,
            level: None,
            g_hat: 0.0,
            width: 0.0,
            audit: None,
        }
    }
}

/// A bidding policy. `choose` never mutates the policy's books; `update`
/// is called exactly once per round with the matching decision.
pub trait Policy: Send {
    fn name(&self) -> &str;

    fn choose(&self, round: usize, x: &Context, rng: &mut SimRng) -> Decision;

    fn update(
        &mut self,
        round: usize,
        x: &Context,
        decision: &Decision,
        feedback: &AuctionFeedback,
    ) -> Result<()>;
}
