//! Highest-other-bid CDF estimation from one-sided payment feedback.
//!
//! The CDF on the grid is written as a sum of bucket probabilities,
//! `G(b_j) = sum_{i <= j} P(b_{i-1} < m <= b_i)` with bucket 0 being
//! `{m <= 0}`. A round that bid `b_k` reveals bucket membership for every
//! bucket `j <= k`: a loss means `m > b_k`, a win reveals `m` through the
//! payment. Lower buckets therefore accumulate more observations, and each
//! bucket ratio is estimated from its own count.

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionFeedback, BidGrid};
use crate::error::{BidError, Result};

/// Per-index observation counts for one independent history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HobStats {
    grid: BidGrid,
    /// `n[j]`: rounds whose bid was at least `b_j`.
    n: Vec<u64>,
    /// `c[j]`: of those, rounds whose HOB fell in bucket `j`.
    c: Vec<u64>,
    /// Initial bucket probabilities from a held-out sample.
    p0: Vec<f64>,
}

/// Every per-index quantity a policy reads from a [`HobStats`] at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct HobSnapshot {
    pub g_hat: Vec<f64>,
    pub integral: Vec<f64>,
    pub width: Vec<f64>,
}

/// Index of the bucket `(b_{k-1}, b_k]` holding `m`; bucket 0 is `m <= 0`.
pub fn bucket_of(grid: &BidGrid, m: f64) -> usize {
    grid.points().partition_point(|&p| p < m)
}

/// Empirical bucket frequencies of fully observed HOB samples.
pub fn init_estimate(samples: &[f64], grid: &BidGrid) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(BidError::EmptySamples);
    }
    let mut counts = vec![0u64; grid.len()];
    for &m in samples {
        let k = bucket_of(grid, m);
        if k >= grid.len() {
            return Err(BidError::InvalidParameter(format!("HOB sample {m} above 1")));
        }
        counts[k] += 1;
    }
    let total = samples.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

/// Uncapped Bernstein-style width of the CDF estimate at `j`:
/// `8 sqrt(sum_{k<=j} (2 ln T / n_k)(p0_k + 12 ln T / sqrt T)) + 8 ln T / n_j`.
pub fn raw_cdf_width(n: &[u64], p0: &[f64], j: usize, horizon: usize) -> Result<f64> {
    let log_t = (horizon as f64).ln();
    let floor = 12.0 * log_t / (horizon as f64).sqrt();
    let mut acc = 0.0;
    for k in 0..=j {
        if n[k] == 0 {
            return Err(BidError::InsufficientData(k));
        }
        acc += 2.0 * log_t / n[k] as f64 * (p0[k] + floor);
    }
    Ok(8.0 * acc.sqrt() + 8.0 * log_t / n[j] as f64)
}

impl HobStats {
    pub fn new(grid: BidGrid) -> Self {
        let len = grid.len();
        Self {
            grid,
            n: vec![0; len],
            c: vec![0; len],
            p0: vec![0.0; len],
        }
    }

    /// Rebuilds stats from raw counts, checking the book invariants.
    pub fn from_counts(grid: BidGrid, n: Vec<u64>, c: Vec<u64>, p0: Vec<f64>) -> Result<Self> {
        for v in [n.len(), c.len()] {
            if v != grid.len() {
                return Err(BidError::Dimension {
                    expected: grid.len(),
                    got: v,
                });
            }
        }
        if n.windows(2).any(|w| w[0] < w[1]) || c.iter().zip(&n).any(|(c, n)| c > n) {
            return Err(BidError::InvalidParameter(
                "counts must be non-increasing and dominate bucket counts".into(),
            ));
        }
        let mut stats = Self { grid, n, c, p0: Vec::new() };
        stats.set_initial_probabilities(p0)?;
        Ok(stats)
    }

    pub fn with_initial_probabilities(grid: BidGrid, p0: Vec<f64>) -> Result<Self> {
        let mut stats = Self::new(grid);
        stats.set_initial_probabilities(p0)?;
        Ok(stats)
    }

    pub fn set_initial_probabilities(&mut self, p0: Vec<f64>) -> Result<()> {
        if p0.len() != self.grid.len() {
            return Err(BidError::Dimension {
                expected: self.grid.len(),
                got: p0.len(),
            });
        }
        if p0.iter().any(|p| !(0.0..=1.0).contains(p)) || p0.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(BidError::InvalidParameter(
                "initial probabilities must be a sub-probability vector".into(),
            ));
        }
        self.p0 = p0;
        Ok(())
    }

    pub fn grid(&self) -> &BidGrid {
        &self.grid
    }

    pub fn counts(&self) -> &[u64] {
        &self.n
    }

    pub fn bucket_counts(&self) -> &[u64] {
        &self.c
    }

    pub fn initial_probabilities(&self) -> &[f64] {
        &self.p0
    }

    /// Absorbs the feedback of a round that bid grid point `bid_index`.
    pub fn ingest(&mut self, bid_index: usize, feedback: &AuctionFeedback) -> Result<()> {
        self.grid.check_index(bid_index)?;
        let hit = match (feedback.won, feedback.payment) {
            (true, None) => return Err(BidError::WinWithoutPayment),
            (true, Some(m)) => {
                let k = bucket_of(&self.grid, m);
                if k > bid_index {
                    return Err(BidError::InvalidParameter(format!(
                        "payment {m} exceeds the winning bid {}",
                        self.grid.point(bid_index)
                    )));
                }
                Some(k)
            }
            (false, _) => None,
        };
        for n in &mut self.n[..=bid_index] {
            *n += 1;
        }
        if let Some(k) = hit {
            self.c[k] += 1;
        }
        Ok(())
    }

    /// `min(1, sum_{i<=j} c_i / n_i)`.
    pub fn cdf_estimate(&self, j: usize) -> Result<f64> {
        self.grid.check_index(j)?;
        let mut acc = 0.0;
        for i in 0..=j {
            if self.n[i] == 0 {
                return Err(BidError::InsufficientData(i));
            }
            acc += self.c[i] as f64 / self.n[i] as f64;
        }
        Ok(acc.min(1.0))
    }

    /// Riemann sum `spacing * sum_{i<=j} G_hat(b_i)` approximating the
    /// integral of the CDF over `[0, b_j]`.
    pub fn integral_estimate(&self, j: usize) -> Result<f64> {
        self.grid.check_index(j)?;
        let mut acc = 0.0;
        for i in 0..=j {
            acc += self.cdf_estimate(i)?;
        }
        Ok(self.grid.spacing() * acc)
    }

    /// Confidence width of the CDF estimate at `j`, capped at 1.
    pub fn cdf_width(&self, j: usize, horizon: usize) -> Result<f64> {
        self.grid.check_index(j)?;
        Ok(raw_cdf_width(&self.n, &self.p0, j, horizon)?.min(1.0))
    }

    /// All estimates and widths on the grid in one linear pass.
    pub fn snapshot(&self, horizon: usize) -> Result<HobSnapshot> {
        self.snapshot_scaled(horizon, 1.0)
    }

    /// Like [`HobStats::snapshot`] with widths `min(1, radius * u)`.
    pub fn snapshot_scaled(&self, horizon: usize, radius: f64) -> Result<HobSnapshot> {
        let len = self.grid.len();
        let log_t = (horizon as f64).ln();
        let floor = 12.0 * log_t / (horizon as f64).sqrt();
        let spacing = self.grid.spacing();
        let mut g_hat = Vec::with_capacity(len);
        let mut integral = Vec::with_capacity(len);
        let mut width = Vec::with_capacity(len);
        let (mut ratio_sum, mut g_sum, mut var_sum) = (0.0, 0.0, 0.0);
        for j in 0..len {
            let n = self.n[j];
            if n == 0 {
                return Err(BidError::InsufficientData(j));
            }
            let n = n as f64;
            ratio_sum += self.c[j] as f64 / n;
            let g = ratio_sum.min(1.0);
            g_sum += g;
            var_sum += 2.0 * log_t / n * (self.p0[j] + floor);
            g_hat.push(g);
            integral.push(spacing * g_sum);
            width.push((radius * (8.0 * var_sum.sqrt() + 8.0 * log_t / n)).min(1.0));
        }
        Ok(HobSnapshot {
            g_hat,
            integral,
            width,
        })
    }
}
