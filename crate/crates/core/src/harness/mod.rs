//! Seeded multi-run experiments with expected-regret accounting.
//!
//! Run `r` of an experiment seeds a ChaCha8 generator with `seed + r`. Stream
//! 0 of that generator builds the environment and draws every round, stream 1
//! drives the policy's own randomness, so all policies of one run face the
//! same contexts, HOBs and outcomes. Runs execute in parallel and are
//! collected in run order.

pub mod output;
pub mod verify;

use std::path::PathBuf;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::auction::{realized_payoff, run_auction, Branch, Policy, SimRng};
use crate::calibration::Calibration;
use crate::envs::{instant_regret, EnvSpec, Environment};
use crate::error::{BidError, Result};
use crate::master::MasterPolicy;
use crate::practical::{LinUcbPolicy, TesPolicy};

/// A registered policy with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PolicySpec {
    Master,
    LinucbTes {
        #[serde(default = "one")]
        eta: f64,
    },
    Linucb {
        #[serde(default = "one")]
        alpha: f64,
    },
    /// Bids the true marginal value; regret zero by construction.
    Oracle,
}

fn one() -> f64 {
    1.0
}

impl PolicySpec {
    pub fn label(&self) -> &'static str {
        match self {
            PolicySpec::Master => "master",
            PolicySpec::LinucbTes { .. } => "linucb_tes",
            PolicySpec::Linucb { .. } => "linucb",
            PolicySpec::Oracle => "oracle",
        }
    }

    fn build(
        &self,
        env: &dyn Environment,
        horizon: usize,
        calibration: Calibration,
    ) -> Result<Option<Box<dyn Policy>>> {
        let params = env.hob().local_params();
        let dim = env.dim();
        Ok(match *self {
            PolicySpec::Master => Some(Box::new(MasterPolicy::new(
                horizon,
                dim,
                params,
                calibration,
            )?)),
            PolicySpec::LinucbTes { eta } => Some(Box::new(TesPolicy::new(
                horizon,
                dim,
                params,
                eta,
                calibration,
            )?)),
            PolicySpec::Linucb { alpha } => Some(Box::new(LinUcbPolicy::new(dim, alpha)?)),
            PolicySpec::Oracle => None,
        })
    }
}

fn one_or_many<'de, D>(de: D) -> std::result::Result<Vec<PolicySpec>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(PolicySpec),
        Many(Vec<PolicySpec>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(p) => vec![p],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(alias = "policy", deserialize_with = "one_or_many")]
    pub policies: Vec<PolicySpec>,
    pub environment: EnvSpec,
    #[serde(alias = "T")]
    pub horizon: usize,
    #[serde(alias = "d")]
    pub dim: usize,
    #[serde(default = "one_run")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub calibration: Calibration,
}

fn one_run() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 4 {
            return Err(BidError::Config(format!("T = {} must be at least 4", self.horizon)));
        }
        if self.runs == 0 {
            return Err(BidError::Config("runs must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(BidError::Config("d must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(BidError::Config("no policy configured".into()));
        }
        self.calibration.validate()
    }
}

/// One round of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: usize,
    pub bid: f64,
    pub won: bool,
    pub payment: Option<f64>,
    pub outcome: f64,
    pub branch: Branch,
    pub inst_regret: f64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Fraction of rounds whose Bernoulli mean was clipped into `[0, 1]`.
    pub mean_clip_rate: f64,
    /// Fraction of rounds whose winning outcome was clipped to 1.
    pub value_clip_rate: f64,
    pub init_rounds: usize,
    pub explore_rounds: usize,
    pub assign_rounds: usize,
    pub exploit_rounds: usize,
    /// Sum of realized payoffs, for diagnostics only.
    pub realized_payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub run: usize,
    pub seed: u64,
    pub records: Vec<TrajectoryRecord>,
    pub diagnostics: RunDiagnostics,
}

impl RunTrace {
    pub fn final_regret(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.cum_regret)
    }

    pub fn cum_regret(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cum_regret).collect()
    }

    /// Number of exploration rounds among the first `t` rounds.
    pub fn explore_count(&self, t: usize) -> usize {
        self.records
            .iter()
            .take(t)
            .filter(|r| r.branch == Branch::Explore)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRuns {
    pub policy: PolicySpec,
    pub runs: Vec<RunTrace>,
}

/// Generators of run `r`: (environment stream, policy stream).
pub fn run_rngs(seed: u64) -> (SimRng, SimRng) {
    let mut env = SimRng::seed_from_u64(seed);
    env.set_stream(0);
    let mut policy = SimRng::seed_from_u64(seed);
    policy.set_stream(1);
    (env, policy)
}

/// Plays one policy for one run.
pub fn run_single(config: &ExperimentConfig, spec: &PolicySpec, run: usize) -> Result<RunTrace> {
    let seed = config.seed.wrapping_add(run as u64);
    let (mut env_rng, mut policy_rng) = run_rngs(seed);
    let env = config
        .environment
        .build(config.dim, config.horizon, &mut env_rng)?;
    let mut policy = spec.build(env.as_ref(), config.horizon, config.calibration)?;
    let hob = env.hob();
    let mut records = Vec::with_capacity(config.horizon);
    let mut diag = RunDiagnostics::default();
    let (mut mean_clips, mut value_clips) = (0usize, 0usize);
    let mut cum = 0.0;
    for t in 1..=config.horizon {
        let draw = env.step(t, &mut env_rng);
        mean_clips += usize::from(draw.mean_clipped);
        value_clips += usize::from(draw.value_clipped);
        let (bid, branch, feedback) = match policy.as_mut() {
            Some(p) => {
                let decision = p.choose(t, &draw.x, &mut policy_rng);
                let feedback = run_auction(draw.hob, draw.v1, draw.v0, decision.bid);
                p.update(t, &draw.x, &decision, &feedback)?;
                (decision.bid, decision.branch, feedback)
            }
            None => {
                let bid = draw.marginal.clamp(0.0, 1.0);
                (bid, Branch::Plain, run_auction(draw.hob, draw.v1, draw.v0, bid))
            }
        };
        match branch {
            Branch::Init => diag.init_rounds += 1,
            Branch::Explore => diag.explore_rounds += 1,
            Branch::Assign => diag.assign_rounds += 1,
            Branch::Exploit => diag.exploit_rounds += 1,
            _ => {}
        }
        diag.realized_payoff += realized_payoff(&feedback);
        let inst = instant_regret(hob, draw.marginal, bid);
        cum += inst;
        records.push(TrajectoryRecord {
            t,
            bid,
            won: feedback.won,
            payment: feedback.payment,
            outcome: feedback.observed_outcome,
            branch,
            inst_regret: inst,
            cum_regret: cum,
        });
    }
    diag.mean_clip_rate = mean_clips as f64 / config.horizon as f64;
    diag.value_clip_rate = value_clips as f64 / config.horizon as f64;
    Ok(RunTrace {
        run,
        seed,
        records,
        diagnostics: diag,
    })
}

/// Runs every configured policy for every run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PolicyRuns>> {
    config.validate()?;
    let jobs: Vec<(usize, usize)> = (0..config.policies.len())
        .flat_map(|p| (0..config.runs).map(move |r| (p, r)))
        .collect();
    let traces: Vec<RunTrace> = jobs
        .par_iter()
        .map(|&(p, r)| run_single(config, &config.policies[p], r))
        .collect::<Result<_>>()?;
    let mut traces = traces.into_iter();
    Ok(config
        .policies
        .iter()
        .map(|spec| PolicyRuns {
            policy: spec.clone(),
            runs: traces.by_ref().take(config.runs).collect(),
        })
        .collect())
}

/// Fractions of the horizon at which summaries are reported.
pub const CHECKPOINT_FRACTIONS: [f64; 13] = [
    0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub fraction: f64,
    pub mean: f64,
    pub std: f64,
}

/// Pointwise mean and sample standard deviation (zero for a single stream)
/// of cumulative-regret streams at the checkpoint rounds.
pub fn aggregate(streams: &[Vec<f64>]) -> Result<Vec<Checkpoint>> {
    let horizon = streams.first().map(Vec::len).ok_or(BidError::EmptySamples)?;
    if horizon == 0 || streams.iter().any(|s| s.len() != horizon) {
        return Err(BidError::InvalidParameter(
            "streams must be non-empty and of equal length".into(),
        ));
    }
    let mut rounds: Vec<(usize, f64)> = CHECKPOINT_FRACTIONS
        .iter()
        .map(|&f| (((f * horizon as f64).ceil() as usize).clamp(1, horizon), f))
        .collect();
    rounds.dedup_by_key(|(r, _)| *r);
    Ok(rounds
        .into_iter()
        .map(|(round, fraction)| {
            let (mean, std) = mean_std(streams.iter().map(|s| s[round - 1]));
            Checkpoint {
                round,
                fraction,
                mean,
                std,
            }
        })
        .collect())
}

/// Mean and sample standard deviation; the deviation of one value is 0.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::HobSpec;

    fn config(policies: Vec<PolicySpec>, horizon: usize, runs: usize) -> ExperimentConfig {
        ExperimentConfig {
            policies,
            environment: EnvSpec::Simple {
                hob: Some(HobSpec::Uniform { omega: 0.5 }),
            },
            horizon,
            dim: 3,
            runs,
            seed: 7,
            out_dir: PathBuf::from("unused"),
            plot: false,
            calibration: Calibration::theory(),
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = vec![(1..=100).map(f64::from).collect::<Vec<_>>()];
        let cps = aggregate(&s).unwrap();
        assert_eq!(cps.len(), CHECKPOINT_FRACTIONS.len());
        assert_eq!(cps[0].round, 1);
        assert_eq!(cps.last().unwrap().round, 100);
        assert!(cps.iter().all(|c| c.std == 0.0 && c.mean == c.round as f64));

        let twins = vec![s[0].clone(), s[0].clone()];
        assert!(aggregate(&twins).unwrap().iter().all(|c| c.std == 0.0));

        let pair = vec![vec![1.0, 2.0, 3.0, 4.0], vec![3.0, 6.0, 9.0, 12.0]];
        let last = aggregate(&pair).unwrap().pop().unwrap();
        assert_eq!(last.mean, 8.0);
        // sample deviation of {4, 12}: sqrt(((4 - 8)^2 + (12 - 8)^2) / 1)
        assert!((last.std - 32f64.sqrt()).abs() < 1e-12);

        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn config_parses_with_aliases() {
        let cfg = ExperimentConfig::from_json(
            r#"{"policy": {"name": "linucb"}, "environment": {"kind": "lower_bound"},
                "T": 100, "d": 3, "runs": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.policies, vec![PolicySpec::Linucb { alpha: 1.0 }]);
        assert_eq!(cfg.horizon, 100);
        assert!(cfg.calibration.is_theory());
        assert!(ExperimentConfig::from_json(
            r#"{"policies": [], "environment": {"kind": "lower_bound"}, "T": 100, "d": 3}"#
        )
        .is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"policies": [{"name": "master"}], "environment": {"kind": "lower_bound"}, "T": 3, "d": 1}"#
        )
        .is_err());
        assert!(ExperimentConfig::from_json(
            r#"{"policies": [{"name": "bogus"}], "environment": {"kind": "lower_bound"}, "T": 30, "d": 1}"#
        )
        .is_err());
    }

    #[test]
    fn oracle_has_zero_regret() {
        let cfg = config(vec![PolicySpec::Oracle], 2_000, 2);
        let out = run_experiment(&cfg).unwrap();
        for run in &out[0].runs {
            assert!(run.final_regret().abs() <= 2_000.0 * 1e-6);
        }
    }

    #[test]
    fn regret_accounting_is_exact_and_nonnegative() {
        let cfg = config(
            vec![PolicySpec::Linucb { alpha: 1.0 }, PolicySpec::Master],
            1_500,
            1,
        );
        for policy in run_experiment(&cfg).unwrap() {
            let mut acc = 0.0;
            for r in &policy.runs[0].records {
                acc += r.inst_regret;
                assert_eq!(acc, r.cum_regret);
                assert!(r.inst_regret >= -1e-9);
                assert_eq!(r.won, r.payment.is_some());
            }
        }
    }

    #[test]
    fn policies_share_environment_draws() {
        let cfg = config(vec![PolicySpec::Oracle, PolicySpec::Linucb { alpha: 1.0 }], 300, 1);
        let out = run_experiment(&cfg).unwrap();
        let a = &out[0].runs[0].records;
        let b = &out[1].runs[0].records;
        // both see the same HOB whenever both win
        for (x, y) in a.iter().zip(b) {
            if let (Some(p), Some(q)) = (x.payment, y.payment) {
                assert_eq!(p, q);
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = config(vec![PolicySpec::LinucbTes { eta: 1.0 }], 800, 2);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0].runs[0].records, a[0].runs[1].records);
    }
}
