//! Highest-other-bid distributions on `[0, 1]`.

use std::fmt::Debug;

use rand::Rng;
use rand_distr::{Beta as BetaDist, Distribution};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{checked_beta_reg, ln_beta};

use crate::auction::{HobParams, SimRng};
use crate::error::{BidError, Result};

pub trait HobModel: Debug + Send + Sync {
    fn sample(&self, rng: &mut SimRng) -> f64;

    /// `G(b) = P(m <= b)`.
    fn cdf(&self, b: f64) -> f64;

    /// `P(m < b)`; differs from [`HobModel::cdf`] only at atoms.
    fn cdf_left(&self, b: f64) -> f64 {
        self.cdf(b)
    }

    /// Declared local-boundedness parameters.
    fn local_params(&self) -> HobParams;

    /// Locations of point masses, ascending.
    fn atoms(&self) -> Vec<f64> {
        Vec::new()
    }

    /// `int_0^b G(m) dm`, by quadrature unless a model knows better.
    fn integral_cdf(&self, b: f64) -> f64 {
        quad_integral_cdf(self, b)
    }
}

/// Adaptive Simpson integration of `G` over `[0, b]`, split at atoms so each
/// piece sees a continuous integrand. Endpoint values use the one-sided
/// limits of the piece.
pub fn quad_integral_cdf<H: HobModel + ?Sized>(hob: &H, b: f64) -> f64 {
    let b = b.clamp(0.0, 1.0);
    let mut cuts = vec![0.0];
    cuts.extend(hob.atoms().into_iter().filter(|&a| a > 0.0 && a < b));
    cuts.push(b);
    cuts.windows(2)
        .map(|w| {
            let (lo, hi) = (w[0], w[1]);
            if hi <= lo {
                return 0.0;
            }
            let f = |x: f64| hob.cdf(x);
            let (fa, fb) = (hob.cdf(lo), hob.cdf_left(hi));
            let mid = 0.5 * (lo + hi);
            let fm = f(mid);
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            simpson(&f, lo, hi, fa, fm, fb, whole, 1e-13, 48)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_cdf(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(BidError::InvalidParameter(format!("x = {x} outside [0, 1]")));
    }
    checked_beta_reg(a, b, x).map_err(|e| BidError::InvalidParameter(e.to_string()))
}

/// Beta density, for `a, b >= 1`.
pub fn beta_pdf(a: f64, b: f64, x: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let term = |k: f64, y: f64| if k == 1.0 { 0.0 } else { (k - 1.0) * y.ln() };
    (term(a, x) + term(b, 1.0 - x) - ln_beta(a, b)).exp()
}

/// `G(b) = b / 2 + 1[b >= 1/4 + delta] / 2`: half uniform, half an atom.
pub fn atom_mix_cdf(delta: f64, b: f64) -> f64 {
    let b = b.clamp(0.0, 1.0);
    b / 2.0 + if b >= 0.25 + delta { 0.5 } else { 0.0 }
}

/// Uniform HOB on `[0, 1]`, declared `(omega, omega)`-locally-bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformHob {
    pub omega: f64,
}

impl HobModel for UniformHob {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        rng.random()
    }

    fn cdf(&self, b: f64) -> f64 {
        b.clamp(0.0, 1.0)
    }

    fn local_params(&self) -> HobParams {
        HobParams {
            omega: self.omega,
            lambda: self.omega,
        }
    }

    fn integral_cdf(&self, b: f64) -> f64 {
        let b = b.clamp(0.0, 1.0);
        b * b / 2.0
    }
}

/// Beta HOB; with bounded density `U` it is `(omega, U omega)`-locally-bounded.
#[derive(Debug, Clone)]
pub struct BetaHob {
    a: f64,
    b: f64,
    omega: f64,
    max_density: f64,
    dist: BetaDist<f64>,
}

impl BetaHob {
    /// Requires `a, b >= 1` so the density is bounded. `omega` defaults to
    /// `1 / (2U)`, which makes `lambda = 1/2`.
    pub fn new(a: f64, b: f64, omega: Option<f64>) -> Result<Self> {
        if !(a >= 1.0 && b >= 1.0 && a.is_finite() && b.is_finite()) {
            return Err(BidError::InvalidParameter(format!(
                "Beta({a}, {b}) needs both shapes at least 1"
            )));
        }
        let max_density = max_beta_density(a, b);
        let omega = omega.unwrap_or(0.5 / max_density);
        if !(omega > 0.0 && omega * max_density < 1.0) {
            return Err(BidError::InvalidParameter(format!(
                "omega {omega} gives lambda outside (0, 1)"
            )));
        }
        let dist = BetaDist::new(a, b).map_err(|e| BidError::InvalidParameter(e.to_string()))?;
        Ok(Self {
            a,
            b,
            omega,
            max_density,
            dist,
        })
    }

    pub fn shapes(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn max_density(&self) -> f64 {
        self.max_density
    }
}

/// Maximum of the Beta density: coarse scan, then golden-section refinement.
pub fn max_beta_density(a: f64, b: f64) -> f64 {
    let n = 10_000;
    let best = (0..=n)
        .map(|i| i as f64 / n as f64)
        .max_by(|&x, &y| beta_pdf(a, b, x).total_cmp(&beta_pdf(a, b, y)))
        .unwrap_or(0.5);
    let (mut lo, mut hi) = ((best - 1e-4).max(0.0), (best + 1e-4).min(1.0));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if beta_pdf(a, b, m1) < beta_pdf(a, b, m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    beta_pdf(a, b, 0.5 * (lo + hi)).max(beta_pdf(a, b, best))
}

impl HobModel for BetaHob {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        self.dist.sample(rng)
    }

    fn cdf(&self, x: f64) -> f64 {
        checked_beta_reg(self.a, self.b, x.clamp(0.0, 1.0)).expect("validated shapes")
    }

    fn local_params(&self) -> HobParams {
        HobParams {
            omega: self.omega,
            lambda: self.max_density * self.omega,
        }
    }

    /// `int_0^x I_m(a, b) dm = x I_x(a, b) - a / (a + b) I_x(a + 1, b)`.
    fn integral_cdf(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        let shifted = checked_beta_reg(self.a + 1.0, self.b, x).expect("validated shapes");
        (x * self.cdf(x) - self.a / (self.a + self.b) * shifted).max(0.0)
    }
}

/// Mixture of `Unif[0, 1]` and a point mass at `1/4 + delta`, weights 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomMixHob {
    pub delta: f64,
    pub omega: f64,
}

impl AtomMixHob {
    pub fn new(delta: f64, omega: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 0.75) || !(omega > 0.0 && omega < 1.0) {
            return Err(BidError::InvalidParameter(format!(
                "atom mix needs delta in (0, 3/4) and omega in (0, 1), got ({delta}, {omega})"
            )));
        }
        Ok(Self { delta, omega })
    }

    pub fn atom(&self) -> f64 {
        0.25 + self.delta
    }
}

impl HobModel for AtomMixHob {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        if rng.random_bool(0.5) {
            self.atom()
        } else {
            rng.random()
        }
    }

    fn cdf(&self, b: f64) -> f64 {
        atom_mix_cdf(self.delta, b)
    }

    fn cdf_left(&self, b: f64) -> f64 {
        let b = b.clamp(0.0, 1.0);
        b / 2.0 + if b > self.atom() { 0.5 } else { 0.0 }
    }

    fn local_params(&self) -> HobParams {
        HobParams {
            omega: self.omega,
            lambda: (1.0 + self.omega) / 2.0,
        }
    }

    fn atoms(&self) -> Vec<f64> {
        vec![self.atom()]
    }

    fn integral_cdf(&self, b: f64) -> f64 {
        let b = b.clamp(0.0, 1.0);
        b * b / 4.0 + 0.5 * (b - self.atom()).max(0.0)
    }
}

/// Equal-width histogram density plus point masses: a HOB family whose
/// local bound can be computed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseHob {
    bins: Vec<f64>,
    atoms: Vec<(f64, f64)>,
    omega: f64,
    lambda: f64,
}

impl PiecewiseHob {
    /// `bins[k]` is the continuous mass spread over `[k/K, (k+1)/K]`;
    /// `atoms` are `(location, mass)` pairs inside `(0, 1)`. Masses must sum
    /// to 1.
    pub fn new(bins: Vec<f64>, mut atoms: Vec<(f64, f64)>, omega: f64) -> Result<Self> {
        let total: f64 = bins.iter().sum::<f64>() + atoms.iter().map(|a| a.1).sum::<f64>();
        if bins.is_empty()
            || bins.iter().any(|&m| !(m >= 0.0))
            || atoms.iter().any(|&(x, m)| !(x > 0.0 && x < 1.0 && m >= 0.0))
            || (total - 1.0).abs() > 1e-9
            || !(omega > 0.0 && omega < 1.0)
        {
            return Err(BidError::InvalidParameter(format!(
                "piecewise HOB needs non-negative masses summing to 1 (got {total}), \
                 atoms inside (0, 1) and omega in (0, 1)"
            )));
        }
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut hob = Self {
            bins,
            atoms,
            omega,
            lambda: 1.0,
        };
        hob.lambda = hob.exact_local_bound(omega);
        Ok(hob)
    }

    fn continuous_cdf(&self, b: f64) -> f64 {
        let k = self.bins.len();
        let pos = b.clamp(0.0, 1.0) * k as f64;
        let full = (pos.floor() as usize).min(k);
        let mut acc: f64 = self.bins[..full].iter().sum();
        if full < k {
            acc += self.bins[full] * (pos - full as f64);
        }
        acc
    }

    /// `sup` over `b` of `G(b + omega) - P(m < b)`. Between the breakpoints
    /// (bin edges, atoms and their shifts by `-omega`) the gap is linear, so
    /// checking the breakpoints is exact.
    pub fn exact_local_bound(&self, omega: f64) -> f64 {
        let k = self.bins.len();
        let mut points: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        points.extend(self.atoms.iter().map(|a| a.0));
        let shifted: Vec<f64> = points.iter().map(|p| p - omega).collect();
        points.extend(shifted);
        points
            .into_iter()
            .filter(|p| (0.0..=1.0).contains(p))
            .map(|p| self.cdf((p + omega).min(1.0)) - self.cdf_left(p))
            .fold(0.0, f64::max)
    }
}

impl HobModel for PiecewiseHob {
    fn sample(&self, rng: &mut SimRng) -> f64 {
        let mut u: f64 = rng.random();
        for &(x, m) in &self.atoms {
            if u < m {
                return x;
            }
            u -= m;
        }
        let k = self.bins.len();
        for (i, &m) in self.bins.iter().enumerate() {
            if u < m || i + 1 == k {
                let frac = if m > 0.0 { (u / m).clamp(0.0, 1.0) } else { 0.5 };
                return (i as f64 + frac) / k as f64;
            }
            u -= m;
        }
        unreachable!("bins are non-empty")
    }

    fn cdf(&self, b: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 <= b).map(|a| a.1).sum();
        (self.continuous_cdf(b) + atoms).min(1.0)
    }

    fn cdf_left(&self, b: f64) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.0 < b).map(|a| a.1).sum();
        (self.continuous_cdf(b) + atoms).min(1.0)
    }

    fn local_params(&self) -> HobParams {
        HobParams {
            omega: self.omega,
            lambda: self.lambda,
        }
    }

    fn atoms(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.0).collect()
    }

    fn integral_cdf(&self, b: f64) -> f64 {
        let b = b.clamp(0.0, 1.0);
        let k = self.bins.len();
        let h = 1.0 / k as f64;
        let mut acc = 0.0;
        let mut below = 0.0;
        for (i, &m) in self.bins.iter().enumerate() {
            let lo = i as f64 * h;
            if lo >= b {
                break;
            }
            let len = (b - lo).min(h);
            // mass accumulated linearly across the bin
            acc += below * len + m * len * len / (2.0 * h);
            below += m;
        }
        acc + self
            .atoms
            .iter()
            .map(|&(x, m)| m * (b - x).max(0.0))
            .sum::<f64>()
    }
}

/// Largest CDF increase over windows of width `omega`, scanned on a grid of
/// step `step`; an atom inside a window counts fully.
pub fn scan_local_bound<H: HobModel + ?Sized>(hob: &H, omega: f64, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    let mut starts: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    starts.extend(hob.atoms());
    starts
        .into_iter()
        .map(|b| hob.cdf((b + omega).min(1.0)) - hob.cdf_left(b))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Composite Simpson on the density, an independent route to `I_x(a, b)`.
    fn simpson_beta(a: f64, b: f64, x: f64, n: usize) -> f64 {
        let h = x / n as f64;
        let mut acc = beta_pdf(a, b, 0.0) + beta_pdf(a, b, x);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * beta_pdf(a, b, i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn beta_cdf_examples() {
        assert_eq!(beta_cdf(5.0, 7.0, 0.0).unwrap(), 0.0);
        assert!((beta_cdf(5.0, 7.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((beta_cdf(1.0, 1.0, 0.3).unwrap() - 0.3).abs() < 1e-14);
        let oracle = simpson_beta(5.0, 7.0, 0.4, 20_000);
        assert!((beta_cdf(5.0, 7.0, 0.4).unwrap() - oracle).abs() < 1e-10);
        assert!(beta_cdf(-1.0, 2.0, 0.5).is_err());
        assert!(beta_cdf(2.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn beta_cdf_matches_simpson_across_range() {
        for &(a, b) in &[(5.0, 7.0), (2.0, 3.0), (1.0, 1.0), (3.5, 1.5)] {
            for i in 1..20 {
                let x = i as f64 / 20.0;
                let got = beta_cdf(a, b, x).unwrap();
                assert!((got - simpson_beta(a, b, x, 20_000)).abs() < 1e-10, "{a} {b} {x}");
            }
        }
    }

    #[test]
    fn beta_max_density_at_mode() {
        // Beta(5, 7) has its mode at (a - 1) / (a + b - 2) = 0.4
        let u = max_beta_density(5.0, 7.0);
        assert!((u - beta_pdf(5.0, 7.0, 0.4)).abs() < 1e-10);
        assert!((u - 2.759).abs() < 1e-3);
    }

    #[test]
    fn atom_mix_examples() {
        let d = 0.05;
        assert_eq!(atom_mix_cdf(d, 0.0), 0.0);
        let below = 0.3 - 1e-9;
        assert!((atom_mix_cdf(d, below) - below / 2.0).abs() < 1e-15);
        assert_eq!(atom_mix_cdf(d, 0.3), 0.65);
        assert_eq!(atom_mix_cdf(d, 1.0), 1.0);
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        let models: Vec<Box<dyn HobModel>> = vec![
            Box::new(UniformHob { omega: 0.5 }),
            Box::new(BetaHob::new(5.0, 7.0, None).unwrap()),
            Box::new(BetaHob::new(2.0, 2.0, None).unwrap()),
            Box::new(AtomMixHob::new(0.05, 0.5).unwrap()),
            Box::new(AtomMixHob::new(0.0025, 0.5).unwrap()),
        ];
        for hob in &models {
            for i in 0..=50 {
                let b = i as f64 / 50.0 + if i % 7 == 3 { 0.0031 } else { 0.0 };
                let closed = hob.integral_cdf(b);
                let quad = quad_integral_cdf(hob.as_ref(), b);
                assert!((closed - quad).abs() < 1e-10, "{hob:?} at {b}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn declared_params_survive_window_scan() {
        let beta = BetaHob::new(5.0, 7.0, None).unwrap();
        let models: Vec<Box<dyn HobModel>> = vec![
            Box::new(UniformHob { omega: 0.5 }),
            Box::new(beta),
            Box::new(AtomMixHob::new(0.05, 0.5).unwrap()),
        ];
        for hob in &models {
            let p = hob.local_params();
            let worst = scan_local_bound(hob.as_ref(), p.omega, 1e-4);
            assert!(worst <= p.lambda + 1e-9, "{hob:?}: {worst} > {}", p.lambda);
            assert!(p.lambda < 1.0);
        }
    }

    #[test]
    fn samples_match_cdf_within_dkw_band() {
        let n = 1_000_000;
        // Dvoretzky-Kiefer-Wolfowitz radius at false-alarm rate 1e-4
        let eps = ((2.0f64 / 1e-4).ln() / (2.0 * n as f64)).sqrt();
        let models: Vec<Box<dyn HobModel>> = vec![
            Box::new(UniformHob { omega: 0.5 }),
            Box::new(BetaHob::new(5.0, 7.0, None).unwrap()),
            Box::new(AtomMixHob::new(0.05, 0.5).unwrap()),
        ];
        for (k, hob) in models.iter().enumerate() {
            let mut rng = SimRng::seed_from_u64(100 + k as u64);
            let mut xs: Vec<f64> = (0..n).map(|_| hob.sample(&mut rng)).collect();
            xs.sort_by(f64::total_cmp);
            let mut sup: f64 = 0.0;
            let mut i = 0;
            while i < n {
                let mut j = i;
                while j + 1 < n && xs[j + 1] == xs[i] {
                    j += 1;
                }
                let g = hob.cdf(xs[i]);
                let g_left = hob.cdf_left(xs[i]);
                sup = sup.max((g - (j + 1) as f64 / n as f64).abs());
                sup = sup.max((g_left - i as f64 / n as f64).abs());
                i = j + 1;
            }
            assert!(sup <= eps, "{hob:?}: sup gap {sup} > {eps}");
        }
    }

    #[test]
    fn piecewise_examples() {
        let hob = PiecewiseHob::new(vec![0.25, 0.25], vec![(0.5, 0.5)], 0.3).unwrap();
        assert_eq!(hob.cdf(0.5), 0.75);
        assert_eq!(hob.cdf_left(0.5), 0.25);
        // int_0^1 G = 1 - E[m] = 1 - 0.5
        assert!((hob.integral_cdf(1.0) - 0.5).abs() < 1e-15);
        // any window of width 0.3 holding the atom: 0.5 + 0.3 * density 0.5
        assert!((hob.local_params().lambda - 0.65).abs() < 1e-12);
        assert!(PiecewiseHob::new(vec![0.5], vec![], 0.3).is_err());
        assert!(PiecewiseHob::new(vec![0.5], vec![(1.0, 0.5)], 0.3).is_err());
    }

    #[test]
    fn piecewise_integral_and_bound_match_generic_routes() {
        let hob = PiecewiseHob::new(
            vec![0.1, 0.05, 0.2, 0.0, 0.15, 0.1, 0.05, 0.05],
            vec![(0.33, 0.2), (0.71, 0.1)],
            0.2,
        )
        .unwrap();
        for i in 0..=40 {
            let b = i as f64 / 40.0;
            assert!((hob.integral_cdf(b) - quad_integral_cdf(&hob, b)).abs() < 1e-10, "b={b}");
        }
        let scanned = scan_local_bound(&hob, 0.2, 1e-4);
        assert!(scanned <= hob.local_params().lambda + 1e-12);
        assert!(hob.local_params().lambda - scanned < 1e-3);
    }

}
