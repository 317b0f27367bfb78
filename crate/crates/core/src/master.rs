//! The leveled bidder.
//!
//! After an initialization phase that always bids 1 (so every HOB is seen),
//! history is split into independent levels. Level `l` targets accuracy
//! `2^-l`: a round descends through the levels, eliminating bids whose upper
//! confidence falls too far below the best, until some level either needs
//! more data (exploration or assignment, and the round is filed at that
//! level only) or is accurate enough to exploit. Estimates used at level `l`
//! come only from rounds filed at level `l`, which keeps the samples of a
//! level conditionally independent of the decisions that selected them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auction::{
    AuctionFeedback, BidGrid, Branch, Context, Decision, HobParams, Policy, SimRng,
};
use crate::calibration::Calibration;
use crate::error::{BidError, Result};
use crate::hob_cdf::{init_estimate, HobStats};
use crate::ucb::{argmax_by, compute_table, select_interval, ucb_constant, WidthForm};
use crate::value_est::{clip_propensity, ipw, variance_proxy, RidgeState};

/// Which books a decision read: for each visited level, the number of
/// rounds its books held at the time.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Audit {
    pub reads: Vec<(usize, usize)>,
}

/// Smallest `L >= 1` with `4^L >= T`, i.e. `ceil(log2 sqrt T)`.
pub fn level_count(horizon: usize) -> usize {
    let mut levels = 1;
    while 4usize.saturating_pow(levels as u32) < horizon {
        levels += 1;
    }
    levels
}

/// Length `ceil(sqrt(T) ln T)` of one initialization block.
pub fn init_block_len(horizon: usize) -> usize {
    let t = horizon as f64;
    (t.sqrt() * t.ln()).ceil() as usize
}

#[derive(Debug, Clone)]
struct Level {
    stats: HobStats,
    ridge: RidgeState,
}

#[derive(Debug, Clone)]
pub struct MasterPolicy {
    grid: BidGrid,
    horizon: usize,
    params: HobParams,
    calibration: Calibration,
    levels: Vec<Level>,
    block_len: usize,
    init_samples: Vec<f64>,
    explore_log: Vec<(usize, usize)>,
    exploit_rounds: usize,
    rounds_seen: usize,
}

impl MasterPolicy {
    pub fn new(
        horizon: usize,
        dim: usize,
        params: HobParams,
        calibration: Calibration,
    ) -> Result<Self> {
        calibration.validate()?;
        let grid = BidGrid::new(horizon)?;
        let level = Level {
            stats: HobStats::new(grid.clone()),
            ridge: RidgeState::new(dim),
        };
        Ok(Self {
            levels: vec![level; level_count(horizon)],
            block_len: init_block_len(horizon),
            grid,
            horizon,
            params,
            calibration,
            init_samples: Vec::new(),
            explore_log: Vec::new(),
            exploit_rounds: 0,
            rounds_seen: 0,
        })
    }

    pub fn grid(&self) -> &BidGrid {
        &self.grid
    }

    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Rounds spent bidding 1 before learning starts.
    pub fn init_len(&self) -> usize {
        (self.levels.len() + 1) * self.block_len
    }

    pub fn is_initializing(&self, round: usize) -> bool {
        round <= self.init_len()
    }

    pub fn level_stats(&self, level: usize) -> &HobStats {
        &self.levels[level - 1].stats
    }

    pub fn level_ridge(&self, level: usize) -> &RidgeState {
        &self.levels[level - 1].ridge
    }

    /// Rounds filed at `level` during learning.
    pub fn level_size(&self, level: usize) -> usize {
        self.levels[level - 1].ridge.count()
    }

    /// `(round, level)` of every exploration round so far.
    pub fn explore_log(&self) -> &[(usize, usize)] {
        &self.explore_log
    }

    pub fn exploit_rounds(&self) -> usize {
        self.exploit_rounds
    }

    pub fn rounds_seen(&self) -> usize {
        self.rounds_seen
    }

    /// Like [`Policy::choose`], also returning the active grid indices at the
    /// start of each visited level (empty during initialization).
    pub fn choose_traced(
        &self,
        round: usize,
        x: &Context,
        rng: &mut SimRng,
    ) -> (Decision, Vec<Vec<usize>>) {
        let mut trace = Vec::new();
        if self.is_initializing(round) {
            let mut d = Decision::plain(round, 1.0, Branch::Init);
            d.grid_index = Some(self.grid.last_index());
            return (d, trace);
        }
        let d = self
            .learning_decision(round, x, rng, &mut trace)
            .expect("level books are seeded during initialization");
        (d, trace)
    }

    fn learning_decision(
        &self,
        round: usize,
        x: &Context,
        rng: &mut SimRng,
        trace: &mut Vec<Vec<usize>>,
    ) -> Result<Decision> {
        let cal = self.calibration;
        let threshold = ucb_constant(&self.params);
        let n_levels = self.levels.len();
        let sqrt_t = (self.horizon as f64).sqrt();
        let mut active: Vec<usize> = (0..self.grid.len()).collect();
        let mut audit = Audit::default();

        for (depth, level) in self.levels.iter().enumerate() {
            let ell = depth + 1;
            let accuracy = 0.5f64.powi(ell as i32);
            audit.reads.push((ell, level.ridge.count()));
            trace.push(active.clone());

            let snap = level.stats.snapshot_scaled(self.horizon, cal.cdf_radius)?;
            let factor = level.ridge.factor()?;
            let theta_x = factor.predict(x);
            let gamma_norm =
                level.ridge.gamma_scaled(self.horizon, cal.value_radius) * factor.inv_norm(x);
            let rows = compute_table(
                &self.grid,
                &snap,
                theta_x,
                gamma_norm,
                &active,
                &self.params,
                self.horizon,
                WidthForm::Theory,
            );
            let iv = select_interval(&snap.g_hat, &snap.integral, theta_x, &self.params, &self.grid);
            let q = iv.q;
            let decide = |index: usize, branch: Branch, audit: Audit| Decision {
                round,
                bid: self.grid.point(index),
                grid_index: Some(index),
                branch,
                level: Some(ell),
                g_hat: snap.g_hat[index],
                width: snap.width[index],
                audit: Some(audit),
            };

            let widest = rows
                .iter()
                .map(|r| r.w[0].max(r.w[1]))
                .fold(0.0, f64::max);
            if cal.width * widest > threshold {
                let index = if rng.random_bool(0.5) {
                    self.grid.last_index()
                } else {
                    0
                };
                return Ok(decide(index, Branch::Explore, audit));
            }

            let max_wq = rows.iter().map(|r| r.w[q]).fold(0.0, f64::max);
            if cal.width * max_wq > accuracy {
                let row = argmax_by(&rows, |r| r.w[q]).expect("active set is non-empty");
                return Ok(decide(row.index, Branch::Assign, audit));
            }

            let best = argmax_by(&rows, |r| r.r[q]).expect("active set is non-empty");
            if ell == n_levels || cal.width * max_wq <= 1.0 / sqrt_t {
                return Ok(decide(best.index, Branch::Exploit, audit));
            }

            let cutoff = best.r[q] - 2.0 * accuracy;
            let survivors: Vec<usize> = rows
                .iter()
                .filter(|r| r.r[q] >= cutoff && iv.contains(r.index))
                .map(|r| r.index)
                .collect();
            active = if survivors.is_empty() {
                vec![best.index]
            } else {
                survivors
            };
        }
        unreachable!("the deepest level always exploits")
    }

    fn absorb_init(&mut self, round: usize, feedback: &AuctionFeedback) -> Result<()> {
        let m = feedback
            .payment
            .ok_or_else(|| BidError::DecisionMismatch("initialization bid 1 must win".into()))?;
        let block = (round - 1) / self.block_len;
        let last = self.grid.last_index();
        if block == 0 {
            self.init_samples.push(m);
        } else {
            self.levels[block - 1].stats.ingest(last, feedback)?;
        }
        if round == self.init_len() {
            let p0 = init_estimate(&self.init_samples, &self.grid)?;
            for level in &mut self.levels {
                level.stats.set_initial_probabilities(p0.clone())?;
            }
        }
        Ok(())
    }
}

impl Policy for MasterPolicy {
    fn name(&self) -> &str {
        "master"
    }

    fn choose(&self, round: usize, x: &Context, rng: &mut SimRng) -> Decision {
        self.choose_traced(round, x, rng).0
    }

    fn update(
        &mut self,
        round: usize,
        x: &Context,
        decision: &Decision,
        feedback: &AuctionFeedback,
    ) -> Result<()> {
        feedback.validate()?;
        if decision.round != round || round != self.rounds_seen + 1 {
            return Err(BidError::DecisionMismatch(format!(
                "decision for round {} applied at round {round} after {} rounds",
                decision.round, self.rounds_seen
            )));
        }
        let initializing = self.is_initializing(round);
        if initializing != (decision.branch == Branch::Init) {
            return Err(BidError::DecisionMismatch(format!(
                "branch {:?} at round {round}",
                decision.branch
            )));
        }
        if initializing {
            self.absorb_init(round, feedback)?;
            self.rounds_seen = round;
            return Ok(());
        }

        let ell = decision
            .level
            .filter(|l| (1..=self.levels.len()).contains(l))
            .ok_or_else(|| BidError::DecisionMismatch("missing level".into()))?;
        let audit = decision
            .audit
            .as_ref()
            .ok_or_else(|| BidError::DecisionMismatch("missing audit".into()))?;
        for &(level, size) in &audit.reads {
            if self.level_size(level) != size {
                return Err(BidError::DecisionMismatch(format!(
                    "level {level} changed since the decision was made"
                )));
            }
        }
        let index = decision
            .grid_index
            .ok_or_else(|| BidError::DecisionMismatch("missing grid index".into()))?;

        match decision.branch {
            Branch::Exploit => self.exploit_rounds += 1,
            Branch::Explore | Branch::Assign => {
                let explore = decision.branch == Branch::Explore;
                let g = clip_propensity(decision.g_hat, self.horizon);
                let e_tilde = ipw(feedback, g, explore)?;
                let sigma = variance_proxy(g, explore)?;
                let level = &mut self.levels[ell - 1];
                level.stats.ingest(index, feedback)?;
                level.ridge.absorb(x, e_tilde, sigma, decision.width)?;
                if explore {
                    self.explore_log.push((round, ell));
                }
            }
            other => {
                return Err(BidError::DecisionMismatch(format!(
                    "branch {other:?} during learning"
                )))
            }
        }
        self.rounds_seen = round;
        Ok(())
    }
}
