//! Treatment-effect estimation from one-sided outcomes.
//!
//! Each round contributes an inverse-propensity-weighted pseudo-outcome whose
//! mean is the marginal value `theta^T x`. Pseudo-outcomes are combined by a
//! ridge regression weighted with the inverse squared variance proxy, and the
//! confidence radius grows with the accumulated CDF uncertainty that leaks
//! into the propensities.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::auction::{AuctionFeedback, Context};
use crate::error::{BidError, Result};

/// Clamps a CDF estimate into `[1 / (2 sqrt T), 1 - 1 / (2 sqrt T)]`, far
/// below the grid resolution, so the propensity weights stay finite.
pub fn clip_propensity(g_hat: f64, horizon: usize) -> f64 {
    let eps = 0.5 / (horizon as f64).sqrt();
    g_hat.clamp(eps, 1.0 - eps)
}

fn check_propensity(g_hat: f64) -> Result<()> {
    if g_hat > 0.0 && g_hat < 1.0 {
        Ok(())
    } else {
        Err(BidError::DegeneratePropensity(g_hat))
    }
}

/// IPW pseudo-outcome. Exploration rounds bid 0 or 1 with probability one
/// half each, so their propensity is exactly 1/2 regardless of the CDF.
pub fn ipw(feedback: &AuctionFeedback, g_hat: f64, explore: bool) -> Result<f64> {
    let v = feedback.observed_outcome;
    if explore {
        return Ok(if feedback.won { 2.0 * v } else { -2.0 * v });
    }
    check_propensity(g_hat)?;
    Ok(if feedback.won {
        v / g_hat
    } else {
        -v / (1.0 - g_hat)
    })
}

/// Variance proxy `sigma` attached to an IPW sample; never below 4.
pub fn variance_proxy(g_hat: f64, explore: bool) -> Result<f64> {
    if explore {
        return Ok(4.0);
    }
    check_propensity(g_hat)?;
    Ok(1.0 / (g_hat * (1.0 - g_hat)))
}

/// Weighted ridge accumulator `A = I + sum w x x^T`, `z = sum w x y`.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeState {
    a: DMatrix<f64>,
    z: DVector<f64>,
    sum_u_sq: f64,
    count: usize,
}

impl RidgeState {
    pub fn new(dim: usize) -> Self {
        Self {
            a: DMatrix::identity(dim, dim),
            z: DVector::zeros(dim),
            sum_u_sq: 0.0,
            count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn sum_u_sq(&self) -> f64 {
        self.sum_u_sq
    }

    pub fn count(&self) -> usize {
        self.count
    }

    fn check_dim(&self, x: &Context) -> Result<()> {
        if x.dim() == self.dim() {
            Ok(())
        } else {
            Err(BidError::Dimension {
                expected: self.dim(),
                got: x.dim(),
            })
        }
    }

    /// Adds one IPW sample with variance proxy `sigma` and CDF width `u`.
    pub fn absorb(&mut self, x: &Context, e_tilde: f64, sigma: f64, u: f64) -> Result<()> {
        if !(sigma >= 4.0) {
            return Err(BidError::InvalidParameter(format!(
                "variance proxy {sigma} below 4"
            )));
        }
        if !(0.0..=1.0).contains(&u) {
            return Err(BidError::InvalidParameter(format!("width {u} outside [0, 1]")));
        }
        self.absorb_weighted(x, e_tilde, sigma.powi(-2))?;
        self.sum_u_sq += u * u;
        Ok(())
    }

    /// Adds `weight * x x^T` to the design and `weight * y x` to the response.
    pub fn absorb_weighted(&mut self, x: &Context, y: f64, weight: f64) -> Result<()> {
        self.check_dim(x)?;
        let v = DVector::from_column_slice(x.as_slice());
        self.a.ger(weight, &v, &v, 1.0);
        self.z.axpy(weight * y, &v, 1.0);
        self.count += 1;
        Ok(())
    }

    pub fn factor(&self) -> Result<RidgeFactor> {
        let chol = Cholesky::new(self.a.clone()).ok_or(BidError::Singular)?;
        let theta = chol.solve(&self.z);
        Ok(RidgeFactor { chol, theta })
    }

    pub fn theta_hat(&self) -> Result<DVector<f64>> {
        Ok(self.factor()?.theta)
    }

    /// `1 + 14 ln T + 4 sqrt(sum u^2)`.
    pub fn gamma(&self, horizon: usize) -> f64 {
        self.gamma_scaled(horizon, 1.0)
    }

    /// Radius whose noise part `1 + 14 ln T` is multiplied by `noise_scale`.
    pub fn gamma_scaled(&self, horizon: usize, noise_scale: f64) -> f64 {
        noise_scale * (1.0 + 14.0 * (horizon as f64).ln()) + 4.0 * self.sum_u_sq.sqrt()
    }

    /// `gamma * ||x||_{A^{-1}}`.
    pub fn value_conf_width(&self, x: &Context, horizon: usize) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.gamma(horizon) * self.factor()?.inv_norm(x))
    }
}

/// A factorized design matrix with its ridge solution.
#[derive(Debug, Clone)]
pub struct RidgeFactor {
    chol: Cholesky<f64, Dyn>,
    theta: DVector<f64>,
}

impl RidgeFactor {
    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn predict(&self, x: &Context) -> f64 {
        x.dot(self.theta.as_slice())
    }

    /// `sqrt(x^T A^{-1} x)`.
    pub fn inv_norm(&self, x: &Context) -> f64 {
        let v = DVector::from_column_slice(x.as_slice());
        let l = self.chol.l();
        let y = l
            .solve_lower_triangular(&v)
            .expect("Cholesky factor has a positive diagonal");
        y.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ipw_examples() {
        let won = AuctionFeedback::won(0.2, 1.0);
        assert_eq!(ipw(&won, 0.5, false).unwrap(), 2.0);
        assert_eq!(ipw(&won, 0.3, true).unwrap(), 2.0);
        let lost = AuctionFeedback::lost(0.5);
        assert!((ipw(&lost, 0.8, false).unwrap() + 2.5).abs() < 1e-12);
        assert_eq!(ipw(&lost, 0.0, true).unwrap(), -1.0);
        assert!(matches!(
            ipw(&won, 0.0, false),
            Err(BidError::DegeneratePropensity(_))
        ));
        assert!(ipw(&won, 1.0, false).is_err());
    }

    #[test]
    fn variance_proxy_examples() {
        assert_eq!(variance_proxy(0.5, false).unwrap(), 4.0);
        assert_eq!(variance_proxy(0.0, true).unwrap(), 4.0);
        assert!((variance_proxy(0.1, false).unwrap() - 1.0 / 0.09).abs() < 1e-12);
        assert!(variance_proxy(1.0, false).is_err());
    }

    #[test]
    fn clipping_keeps_propensity_interior() {
        assert_eq!(clip_propensity(0.0, 10_000), 0.005);
        assert_eq!(clip_propensity(1.0, 10_000), 0.995);
        assert_eq!(clip_propensity(0.3, 10_000), 0.3);
        for t in [4usize, 100, 1_000_000] {
            assert!(variance_proxy(clip_propensity(0.0, t), false).is_ok());
        }
    }

    #[test]
    fn absorb_example() {
        let mut s = RidgeState::new(1);
        s.absorb(&Context::new(vec![1.0]), 2.0, 4.0, 0.0).unwrap();
        assert!((s.design()[(0, 0)] - (1.0 + 1.0 / 16.0)).abs() < 1e-15);
        assert!((s.response()[0] - 2.0 / 16.0).abs() < 1e-15);
        assert_eq!(s.count(), 1);
    }

    #[test]
    fn huge_sigma_leaves_design_unchanged() {
        let mut s = RidgeState::new(2);
        s.absorb(&Context::new(vec![0.6, 0.8]), 1.0, 1e200, 0.0).unwrap();
        assert_eq!(s.design(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn absorb_rejects_bad_inputs() {
        let mut s = RidgeState::new(2);
        assert!(s.absorb(&Context::new(vec![0.6, 0.8]), 1.0, 2.0, 0.0).is_err());
        assert!(s.absorb(&Context::new(vec![0.6, 0.8]), 1.0, 4.0, 1.5).is_err());
        assert!(matches!(
            s.absorb(&Context::new(vec![1.0]), 1.0, 4.0, 0.0),
            Err(BidError::Dimension { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn theta_examples() {
        let s = RidgeState::new(3);
        assert_eq!(s.theta_hat().unwrap(), DVector::zeros(3));
        let mut s = RidgeState::new(1);
        // A = 1 + w, z = w y with w = 1, y = 1 gives A = 2, z = 1
        s.absorb_weighted(&Context::new(vec![1.0]), 1.0, 1.0).unwrap();
        assert!((s.theta_hat().unwrap()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gamma_examples() {
        let s = RidgeState::new(2);
        let log_t = 10_000f64.ln();
        assert!((s.gamma(10_000) - (1.0 + 14.0 * log_t)).abs() < 1e-12);
        let mut s = RidgeState::new(1);
        for _ in 0..4 {
            s.absorb(&Context::new(vec![1.0]), 0.0, 4.0, 1.0).unwrap();
        }
        assert_eq!(s.sum_u_sq(), 4.0);
        // horizon 1 has ln T = 0, so scaling the noise part by 15 mimics ln T = 1
        assert!((s.gamma_scaled(1, 15.0) - 23.0).abs() < 1e-12);
    }

    #[test]
    fn width_on_fresh_state_is_gamma_times_norm() {
        let s = RidgeState::new(3);
        let x = Context::new(vec![0.0, 0.6, 0.8]);
        let w = s.value_conf_width(&x, 10_000).unwrap();
        assert!((w - s.gamma(10_000)).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_direction_is_unaffected() {
        let mut s = RidgeState::new(2);
        for _ in 0..50 {
            s.absorb(&Context::new(vec![1.0, 0.0]), 1.0, 4.0, 0.1).unwrap();
        }
        let f = s.factor().unwrap();
        let x = Context::new(vec![0.0, 0.7]);
        assert!((f.inv_norm(&x) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn width_shrinks_like_sherman_morrison() {
        let mut s = RidgeState::new(1);
        let x = Context::new(vec![1.0]);
        let mut prev = f64::INFINITY;
        for k in 1..=100 {
            s.absorb(&x, 0.5, 4.0, 0.0).unwrap();
            let q = s.factor().unwrap().inv_norm(&x);
            let expected = (1.0 / (1.0 + k as f64 / 16.0)).sqrt();
            assert!((q - expected).abs() < 1e-12);
            assert!(q < prev);
            prev = q;
        }
    }

    proptest! {
        #[test]
        fn absorbs_commute(a in prop::collection::vec(-1.0..1.0f64, 3),
                           b in prop::collection::vec(-1.0..1.0f64, 3),
                           ya in -5.0..5.0f64, yb in -5.0..5.0f64) {
            let (xa, xb) = (Context::new(a), Context::new(b));
            let mut s1 = RidgeState::new(3);
            s1.absorb(&xa, ya, 4.0, 0.2).unwrap();
            s1.absorb(&xb, yb, 6.0, 0.3).unwrap();
            let mut s2 = RidgeState::new(3);
            s2.absorb(&xb, yb, 6.0, 0.3).unwrap();
            s2.absorb(&xa, ya, 4.0, 0.2).unwrap();
            prop_assert!((s1.design() - s2.design()).amax() < 1e-14);
            prop_assert!((s1.response() - s2.response()).amax() < 1e-14);
            prop_assert!((s1.sum_u_sq() - s2.sum_u_sq()).abs() < 1e-15);
        }

        #[test]
        fn quadratic_form_in_unit_interval(xs in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 0..30),
                                           q in prop::collection::vec(-1.0..1.0f64, 4)) {
            let mut s = RidgeState::new(4);
            for x in xs {
                s.absorb(&Context::new(x), 0.0, 4.0, 0.0).unwrap();
            }
            let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let unit = Context::new(q.iter().map(|v| v / norm).collect());
            let qf = s.factor().unwrap().inv_norm(&unit).powi(2);
            prop_assert!(qf > 0.0 && qf <= 1.0 + 1e-12);
        }
    }
}
