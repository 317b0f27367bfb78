//! Single-book bidders: the practical causal policy and the LinUCB baseline.
//!
//! [`TesPolicy`] keeps one HOB history and one value regression over every
//! round, explores with bids 0 and 1 while its widths are large, and
//! otherwise bids the optimistic maximizer of the selected reward
//! formulation. [`LinUcbPolicy`] regresses the winning outcome on the context
//! and bids its upper confidence bound, ignoring the outcome it would have
//! received anyway after losing.

use rand::Rng;

use crate::auction::{
    AuctionFeedback, BidGrid, Branch, Context, Decision, HobParams, Policy, SimRng,
};
use crate::calibration::Calibration;
use crate::error::{BidError, Result};
use crate::hob_cdf::{init_estimate, HobStats};
use crate::master::init_block_len;
use crate::ucb::{argmax_by, compute_table, select_interval, ucb_constant, WidthForm};
use crate::value_est::{clip_propensity, ipw, variance_proxy, RidgeState};

#[derive(Debug, Clone)]
pub struct TesPolicy {
    grid: BidGrid,
    horizon: usize,
    params: HobParams,
    calibration: Calibration,
    learning_rate: f64,
    init_len: usize,
    stats: HobStats,
    ridge: RidgeState,
    init_samples: Vec<f64>,
    explore_rounds: usize,
}

impl TesPolicy {
    pub fn new(
        horizon: usize,
        dim: usize,
        params: HobParams,
        learning_rate: f64,
        calibration: Calibration,
    ) -> Result<Self> {
        if !(learning_rate > 0.0) {
            return Err(BidError::InvalidParameter(format!(
                "learning rate {learning_rate} must be positive"
            )));
        }
        calibration.validate()?;
        let grid = BidGrid::new(horizon)?;
        Ok(Self {
            stats: HobStats::new(grid.clone()),
            ridge: RidgeState::new(dim),
            init_len: init_block_len(horizon),
            grid,
            horizon,
            params,
            calibration,
            learning_rate,
            init_samples: Vec::new(),
            explore_rounds: 0,
        })
    }

    pub fn init_len(&self) -> usize {
        self.init_len
    }

    pub fn stats(&self) -> &HobStats {
        &self.stats
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }

    pub fn explore_rounds(&self) -> usize {
        self.explore_rounds
    }

    fn learning_decision(
        &self,
        round: usize,
        x: &Context,
        rng: &mut SimRng,
        learning_rate: f64,
    ) -> Result<Decision> {
        let cal = self.calibration;
        let snap = self.stats.snapshot_scaled(self.horizon, cal.cdf_radius)?;
        let factor = self.ridge.factor()?;
        let theta_x = factor.predict(x);
        let gamma_norm = self.ridge.gamma_scaled(self.horizon, cal.value_radius) * factor.inv_norm(x);
        let iv = select_interval(&snap.g_hat, &snap.integral, theta_x, &self.params, &self.grid);
        let last = self.grid.last_index();
        let decide = |index: usize, branch: Branch| Decision {
            round,
            bid: self.grid.point(index),
            grid_index: Some(index),
            branch,
            level: None,
            g_hat: snap.g_hat[index],
            width: snap.width[index],
            audit: None,
        };

        if cal.width * (gamma_norm + 4.0 * snap.width[last]) > ucb_constant(&self.params) {
            let index = if rng.random_bool(0.5) { last } else { 0 };
            return Ok(decide(index, Branch::Explore));
        }
        let subset: Vec<usize> = (iv.left..=iv.right).collect();
        let rows = compute_table(
            &self.grid,
            &snap,
            theta_x,
            gamma_norm,
            &subset,
            &self.params,
            self.horizon,
            WidthForm::Practical,
        );
        let q = iv.q;
        let bonus = learning_rate * cal.width;
        let row = argmax_by(&rows, |r| r.r[q] + bonus * r.w[q]).expect("interval is non-empty");
        Ok(decide(row.index, Branch::Ucb))
    }

    /// The bid chosen with learning rate `eta` in place of the configured one.
    pub fn choose_with_rate(&self, round: usize, x: &Context, rng: &mut SimRng, eta: f64) -> Decision {
        if round <= self.init_len {
            let mut d = Decision::plain(round, 1.0, Branch::Init);
            d.grid_index = Some(self.grid.last_index());
            return d;
        }
        self.learning_decision(round, x, rng, eta)
            .expect("books are seeded during initialization")
    }
}

impl Policy for TesPolicy {
    fn name(&self) -> &str {
        "linucb_tes"
    }

    fn choose(&self, round: usize, x: &Context, rng: &mut SimRng) -> Decision {
        self.choose_with_rate(round, x, rng, self.learning_rate)
    }

    fn update(
        &mut self,
        round: usize,
        x: &Context,
        decision: &Decision,
        feedback: &AuctionFeedback,
    ) -> Result<()> {
        feedback.validate()?;
        let index = decision
            .grid_index
            .ok_or_else(|| BidError::DecisionMismatch("missing grid index".into()))?;
        if decision.round != round {
            return Err(BidError::DecisionMismatch(format!(
                "decision for round {} applied at round {round}",
                decision.round
            )));
        }
        self.stats.ingest(index, feedback)?;
        match decision.branch {
            Branch::Init => {
                let m = feedback.payment.ok_or(BidError::WinWithoutPayment)?;
                self.init_samples.push(m);
                if round == self.init_len {
                    let p0 = init_estimate(&self.init_samples, &self.grid)?;
                    self.stats.set_initial_probabilities(p0)?;
                }
            }
            Branch::Explore | Branch::Ucb => {
                let explore = decision.branch == Branch::Explore;
                let g = clip_propensity(decision.g_hat, self.horizon);
                let e_tilde = ipw(feedback, g, explore)?;
                let sigma = variance_proxy(g, explore)?;
                self.ridge.absorb(x, e_tilde, sigma, decision.width)?;
                self.explore_rounds += usize::from(explore);
            }
            other => {
                return Err(BidError::DecisionMismatch(format!(
                    "branch {other:?} is not produced by this policy"
                )))
            }
        }
        Ok(())
    }
}

/// Optimistic regression of the winning outcome on the context.
#[derive(Debug, Clone)]
pub struct LinUcbPolicy {
    ridge: RidgeState,
    alpha: f64,
}

impl LinUcbPolicy {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(BidError::InvalidParameter(format!(
                "bonus multiplier {alpha} must be positive"
            )));
        }
        Ok(Self {
            ridge: RidgeState::new(dim),
            alpha,
        })
    }

    pub fn ridge(&self) -> &RidgeState {
        &self.ridge
    }

    pub fn bid(&self, x: &Context) -> Result<f64> {
        let f = self.ridge.factor()?;
        Ok((f.predict(x) + self.alpha * f.inv_norm(x)).clamp(0.0, 1.0))
    }
}

impl Policy for LinUcbPolicy {
    fn name(&self) -> &str {
        "linucb"
    }

    fn choose(&self, round: usize, x: &Context, _rng: &mut SimRng) -> Decision {
        let bid = self.bid(x).expect("ridge design is positive definite");
        Decision::plain(round, bid, Branch::Plain)
    }

    fn update(
        &mut self,
        _round: usize,
        x: &Context,
        _decision: &Decision,
        feedback: &AuctionFeedback,
    ) -> Result<()> {
        feedback.validate()?;
        if feedback.won {
            self.ridge.absorb_weighted(x, feedback.observed_outcome, 1.0)?;
        }
        Ok(())
    }
}
