//! Contextual markets: contexts, outcome pairs and HOB draws per round.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::auction::{Context, SimRng};
use crate::error::{BidError, Result};

use super::hob::{AtomMixHob, HobModel};

/// Everything drawn for one round. Only `x` is shown to the bidder before it
/// bids; the rest is revealed through the auction.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub x: Context,
    pub hob: f64,
    pub v1: f64,
    pub v0: f64,
    /// `E[v1 - v0 | round, x]`, the value the oracle bids.
    pub marginal: f64,
    /// The Bernoulli mean had to be clipped into `[0, 1]`.
    pub mean_clipped: bool,
    /// `v1` had to be clipped to 1.
    pub value_clipped: bool,
}

pub trait Environment: Send {
    fn dim(&self) -> usize;

    fn hob(&self) -> &dyn HobModel;

    fn true_theta(&self) -> &[f64];

    /// Draws round `t` (1-based). Contexts never depend on past bids.
    fn step(&self, t: usize, rng: &mut SimRng) -> Draw;
}

fn normal_vec(rng: &mut SimRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian contexts with an intercept, a periodic baseline outcome
/// `v0 = sigmoid(2 + sin(f t) + cos(beta^T x))`, and a Bernoulli lift
/// with mean `theta^T x` on winning.
#[derive(Debug, Clone)]
pub struct PeriodicEnv {
    theta: Vec<f64>,
    beta: Vec<f64>,
    frequency: f64,
    zero_baseline: bool,
    hob: Arc<dyn HobModel>,
}

impl PeriodicEnv {
    /// Draws `theta = normalize([0.6, g])` and `beta = normalize(g')` from `rng`.
    pub fn new(dim: usize, hob: Arc<dyn HobModel>, rng: &mut SimRng) -> Result<Self> {
        if dim < 1 {
            return Err(BidError::InvalidParameter("dimension must be positive".into()));
        }
        let mut theta = vec![0.6];
        theta.extend(normal_vec(rng, dim - 1));
        let beta = normalized(normal_vec(rng, dim));
        Ok(Self {
            theta: normalized(theta),
            beta,
            frequency: PI / 125.0,
            zero_baseline: false,
            hob,
        })
    }

    pub fn with_parameters(theta: Vec<f64>, beta: Vec<f64>, hob: Arc<dyn HobModel>) -> Self {
        Self {
            theta,
            beta,
            frequency: PI / 125.0,
            zero_baseline: false,
            hob,
        }
    }

    /// The same market with `v0 = 0`, so outcomes carry no baseline to confound
    /// the value of winning.
    pub fn with_zero_baseline(mut self) -> Self {
        self.zero_baseline = true;
        self
    }

    pub fn frequency(&self) -> f64 {
        self.frequency
    }

    pub fn baseline(&self, t: usize, x: &Context) -> f64 {
        if self.zero_baseline {
            return 0.0;
        }
        sigmoid(2.0 + (self.frequency * t as f64).sin() + x.dot(&self.beta).cos())
    }
}

impl Environment for PeriodicEnv {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn hob(&self) -> &dyn HobModel {
        self.hob.as_ref()
    }

    fn true_theta(&self) -> &[f64] {
        &self.theta
    }

    fn step(&self, t: usize, rng: &mut SimRng) -> Draw {
        let mut raw = vec![1.0];
        raw.extend(normal_vec(rng, self.dim() - 1));
        let x = Context::new(normalized(raw));
        let v0 = self.baseline(t, &x);
        let mean = x.dot(&self.theta);
        let p = mean.clamp(0.0, 1.0);
        let lift = if rng.random_bool(p) { 1.0 } else { 0.0 };
        let v1 = (v0 + lift).min(1.0);
        let hob = self.hob.sample(rng);
        Draw {
            x,
            hob,
            v1,
            v0,
            marginal: p * (1.0 - v0),
            mean_clipped: p != mean,
            value_clipped: v0 + lift > 1.0,
        }
    }
}

/// Uniform contexts `normalize([1, u1, u2])`, a baseline alternating between
/// two levels every half period, and a lift of fixed size `jump` won with
/// probability `theta^T x / jump`, so the marginal value is exactly linear.
#[derive(Debug, Clone)]
pub struct SimpleEnv {
    theta: Vec<f64>,
    levels: [f64; 2],
    period: usize,
    jump: f64,
    hob: Arc<dyn HobModel>,
}

impl SimpleEnv {
    pub const THETA: [f64; 3] = [0.5, 0.3, -0.2];

    pub fn new(hob: Arc<dyn HobModel>) -> Self {
        Self {
            theta: Self::THETA.to_vec(),
            levels: [0.1, 0.3],
            period: 250,
            jump: 0.7,
            hob,
        }
    }

    pub fn baseline(&self, t: usize) -> f64 {
        if t % self.period < self.period / 2 {
            self.levels[0]
        } else {
            self.levels[1]
        }
    }
}

impl Environment for SimpleEnv {
    fn dim(&self) -> usize {
        3
    }

    fn hob(&self) -> &dyn HobModel {
        self.hob.as_ref()
    }

    fn true_theta(&self) -> &[f64] {
        &self.theta
    }

    fn step(&self, t: usize, rng: &mut SimRng) -> Draw {
        let u: [f64; 2] = [rng.random(), rng.random()];
        let x = Context::new(normalized(vec![1.0, u[0], u[1]]));
        let v0 = self.baseline(t);
        let mean = x.dot(&self.theta);
        let clipped = !(0.0..=self.jump).contains(&mean);
        let p = (mean / self.jump).clamp(0.0, 1.0);
        let v1 = if rng.random_bool(p) { v0 + self.jump } else { v0 };
        let hob = self.hob.sample(rng);
        Draw {
            x,
            hob,
            v1,
            v0,
            marginal: if clipped { p * self.jump } else { mean },
            mean_clipped: clipped,
            value_clipped: false,
        }
    }
}

/// Hard instance: `d - 1` sub-horizons, each a two-point problem whose
/// marginal value is `1/4` or `1/4 + 2 delta`, with `v0 = 0` and an atomic HOB
/// placed between the two candidate optimal bids.
#[derive(Debug, Clone)]
pub struct LowerBoundEnv {
    theta: Vec<f64>,
    horizon: usize,
    delta: f64,
    hob: AtomMixHob,
}

impl LowerBoundEnv {
    pub fn new(dim: usize, horizon: usize, rng: &mut SimRng) -> Result<Self> {
        if dim == 0 || horizon < dim * dim || horizon < 4 {
            return Err(BidError::InvalidParameter(format!(
                "lower-bound instance needs T >= d^2 >= 1 and T >= 4, got d = {dim}, T = {horizon}"
            )));
        }
        let pieces = dim.saturating_sub(1).max(1) as f64;
        let delta = 0.25 * (pieces / horizon as f64).sqrt();
        let theta = if dim == 1 {
            vec![0.25 + if rng.random_bool(0.5) { 2.0 * delta } else { 0.0 }]
        } else {
            let mut theta = vec![0.5];
            theta.extend((1..dim).map(|_| if rng.random_bool(0.5) { 4.0 * delta } else { 0.0 }));
            theta
        };
        Ok(Self {
            theta,
            horizon,
            delta,
            hob: AtomMixHob::new(delta, 0.5)?,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Rounds per sub-horizon.
    pub fn sub_horizon(&self) -> usize {
        self.horizon / self.theta.len().saturating_sub(1).max(1)
    }

    pub fn context(&self, t: usize) -> Context {
        let d = self.theta.len();
        if d == 1 {
            return Context::new(vec![1.0]);
        }
        let k = ((t.max(1) - 1) / self.sub_horizon()).min(d - 2);
        let mut x = vec![0.0; d];
        x[0] = 0.5;
        x[k + 1] = 0.5;
        Context::new(x)
    }
}

impl Environment for LowerBoundEnv {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn hob(&self) -> &dyn HobModel {
        &self.hob
    }

    fn true_theta(&self) -> &[f64] {
        &self.theta
    }

    fn step(&self, t: usize, rng: &mut SimRng) -> Draw {
        let x = self.context(t);
        let mean = dot(x.as_slice(), &self.theta);
        let v1 = if rng.random_bool(mean) { 1.0 } else { 0.0 };
        let hob = self.hob.sample(rng);
        Draw {
            x,
            hob,
            v1,
            v0: 0.0,
            marginal: mean,
            mean_clipped: false,
            value_clipped: false,
        }
    }
}
