//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use causal_bidding::envs::{oracle_best, AtomMixHob, BetaHob, HobModel, UniformHob};
use causal_bidding::harness::verify::{self, Report};
use causal_bidding::hob_cdf::HobStats;
use causal_bidding::value_est::RidgeState;
use causal_bidding::{run_auction, AuctionFeedback, BidGrid, Context, Result, SimRng};
use rand::{Rng, SeedableRng};

const SEED: u64 = 0;

struct Outcome {
    pass: bool,
    detail: String,
}

impl From<Report> for Outcome {
    fn from(r: Report) -> Self {
        let detail = r
            .checks
            .iter()
            .map(|c| format!("{}={:.4e}{}{:.4e}", c.name, c.measured, c.relation, c.threshold))
            .collect::<Vec<_>>()
            .join(" ");
        Self {
            pass: r.passed(),
            detail,
        }
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Weighted ridge estimate against dense normal equations.
fn ridge_oracle(rng: &mut SimRng) -> Result<f64> {
    let mut worst = 0.0f64;
    for dim in [1usize, 3, 5, 11] {
        let mut ridge = RidgeState::new(dim);
        let mut a = vec![vec![0.0; dim]; dim];
        (0..dim).for_each(|i| a[i][i] = 1.0);
        let mut b = vec![0.0; dim];
        for _ in 0..500 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = Context::new(x);
            let y: f64 = rng.random_range(-20.0..20.0);
            let sigma: f64 = rng.random_range(4.0..40.0);
            ridge.absorb(&x, y, sigma, 0.0)?;
            let w = 1.0 / (sigma * sigma);
            let xs = x.as_slice();
            for i in 0..dim {
                b[i] += w * y * xs[i];
                for j in 0..dim {
                    a[i][j] += w * xs[i] * xs[j];
                }
            }
        }
        let expected = gauss_solve(a, b);
        let got = ridge.theta_hat()?;
        let norm = expected.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = expected
            .iter()
            .zip(got.iter())
            .map(|(e, g)| (e - g).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(err / norm.max(1e-300));
    }
    Ok(worst)
}

/// Incremental CDF books against counts rebuilt from the raw history.
fn cdf_books_oracle(rng: &mut SimRng) -> Result<bool> {
    let horizon = 2_500;
    let grid = BidGrid::new(horizon)?;
    let len = grid.len();
    let hob = BetaHob::new(5.0, 7.0, None)?;
    let mut stats = HobStats::new(grid.clone());
    let mut history: Vec<(usize, AuctionFeedback)> = Vec::new();
    for _ in 0..horizon {
        let j = rng.random_range(0..len);
        let fb = run_auction(hob.sample(rng), 1.0, 0.0, grid.point(j));
        stats.ingest(j, &fb)?;
        history.push((j, fb));
    }
    let mut n = vec![0u64; len];
    let mut c = vec![0u64; len];
    for (j, fb) in &history {
        (0..=*j).for_each(|i| n[i] += 1);
        if let Some(m) = fb.payment {
            // first grid point at or above the payment
            let k = (0..len).find(|&k| grid.point(k) >= m).unwrap();
            c[k] += 1;
        }
    }
    let batch = HobStats::from_counts(grid.clone(), n.clone(), c.clone(), vec![0.0; len])?;
    let mut direct = 0.0f64;
    for j in 0..len {
        if n[j] == 0 {
            continue;
        }
        direct += c[j] as f64 / n[j] as f64;
        let inc = stats.cdf_estimate(j)?;
        if inc != batch.cdf_estimate(j)? || inc != direct.min(1.0) {
            return Ok(false);
        }
    }
    Ok(stats.counts() == n.as_slice() && stats.bucket_counts() == c.as_slice())
}

/// Best bid against an exhaustive sweep with step `1e-4`.
fn oracle_sweep(rng: &mut SimRng) -> Result<f64> {
    let hobs: Vec<Box<dyn HobModel>> = vec![
        Box::new(UniformHob { omega: 0.5 }),
        Box::new(BetaHob::new(5.0, 7.0, None)?),
        Box::new(AtomMixHob::new(0.01, 0.5)?),
    ];
    let mut worst = 0.0f64;
    for hob in &hobs {
        for _ in 0..20 {
            let v: f64 = rng.random_range(-0.2..1.2);
            let reward = |b: f64| hob.cdf(b) * (v - b) + hob.integral_cdf(b);
            let mut best = (0.0, f64::NEG_INFINITY);
            for i in 0..=10_000 {
                let b = i as f64 * 1e-4;
                let r = reward(b);
                if r > best.1 {
                    best = (b, r);
                }
            }
            let (b, r) = oracle_best(hob.as_ref(), v);
            // flat optima admit several bids; compare where rewards differ
            if r - best.1 > 1e-12 || best.1 - r > 1e-12 {
                worst = worst.max((b - best.0).abs());
            }
        }
    }
    Ok(worst)
}

fn criterion_nine() -> Result<Outcome> {
    let mut rng = SimRng::seed_from_u64(SEED);
    let ridge = ridge_oracle(&mut rng)?;
    let books = cdf_books_oracle(&mut rng)?;
    let sweep = oracle_sweep(&mut rng)?;
    Ok(Outcome {
        pass: ridge <= 1e-8 && books && sweep <= 2e-4,
        detail: format!("ridge_rel_err={ridge:.2e}<=1e-8 books_exact={books} sweep_bid_gap={sweep:.2e}<=2e-4"),
    })
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Result<Outcome>);
    let criteria: [Criterion; 9] = [
        ("1 figure2_shape", || Ok(verify::figure2(SEED, 10, 50_000)?.into())),
        ("2 cdf_coverage", || Ok(verify::cdf_coverage(SEED, 500, 10_000)?.into())),
        ("3 ipw_proxies", || Ok(verify::ipw_bias(SEED, 1_000_000)?.into())),
        ("4 ridge_coverage", || Ok(verify::wls_coverage(SEED, 500, 2_000)?.into())),
        ("5 interval_selection", || Ok(verify::ucb_selection(SEED, 1_000)?.into())),
        ("6 separation", || Ok(verify::separation(SEED, &[100, 10_000, 1_000_000])?.into())),
        ("7 master_regret_ratio", || {
            let r = verify::master_scaling(SEED, 10, 10_000)?;
            let c = r.check("regret_ratio").expect("check present").clone();
            Ok(Outcome {
                pass: c.pass,
                detail: format!("R(4T)/R(T)={:.4}<={}", c.measured, c.threshold),
            })
        }),
        ("8 exploration_rarity", || {
            let r = verify::master_scaling(SEED, 10, 10_000)?;
            let c = r.check("explore_rounds_4t").expect("check present").clone();
            Ok(Outcome {
                pass: c.pass,
                detail: format!("explore(4T)={:.1}<={:.1}", c.measured, c.threshold),
            })
        }),
        ("9 oracle_equivalence", criterion_nine),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run().unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        failed += usize::from(!outcome.pass);
        println!(
            "{} criterion {name} [{:.1}s] {}",
            if outcome.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            outcome.detail
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
