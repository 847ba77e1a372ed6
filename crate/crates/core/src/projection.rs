//! Smoothed Heaviside projections and their continuation schedule.
//!
//! Two complementary forms are used. The increasing form sharpens a filtered
//! design field toward 0/1 densities. The decreasing form realizes the layer
//! indicator: applied to the pseudo-time field at threshold `eta`, it returns
//! about 1 where material is deposited before `eta` and about 0 after, so
//! multiplying it with the density field carves out the partial structure
//! present at that moment of the fabrication process.

/// Increasing projection with threshold `eta` and sharpness `beta`.
/// Maps [0, 1] onto [0, 1] with fixed points at 0 and 1.
pub fn heaviside_up(x: f64, beta: f64, eta: f64) -> f64 {
    debug_assert!(beta > 0.0 && eta > 0.0 && eta <= 1.0);
    let den = (beta * eta).tanh() + (beta * (1.0 - eta)).tanh();
    ((beta * eta).tanh() + (beta * (x - eta)).tanh()) / den
}

/// Derivative of [`heaviside_up`] with respect to `x`.
pub fn heaviside_up_derivative(x: f64, beta: f64, eta: f64) -> f64 {
    let den = (beta * eta).tanh() + (beta * (1.0 - eta)).tanh();
    let c = (beta * (x - eta)).cosh();
    beta / (c * c * den)
}

/// Decreasing projection: 1 at x = 0, 0 at x = 1, transition at `eta`.
pub fn heaviside_project(x: f64, beta: f64, eta: f64) -> f64 {
    1.0 - heaviside_up(x, beta, eta)
}

/// Derivative of [`heaviside_project`] with respect to `x`.
pub fn heaviside_derivative(x: f64, beta: f64, eta: f64) -> f64 {
    -heaviside_up_derivative(x, beta, eta)
}

/// Stepwise geometric growth of the projection sharpness over the
/// optimization. Iterations are counted from 1.
#[derive(Debug, Clone)]
pub struct ContinuationSchedule {
    pub beta_initial: f64,
    pub growth: f64,
    pub period: usize,
    pub beta_max: f64,
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        ContinuationSchedule {
            beta_initial: 8.0,
            growth: 2.0,
            period: 50,
            beta_max: 64.0,
        }
    }
}

impl ContinuationSchedule {
    pub fn value(&self, iter: usize) -> f64 {
        debug_assert!(iter >= 1);
        debug_assert!(self.growth > 1.0 && self.period > 0);
        let doublings = (iter - 1) / self.period;
        (self.beta_initial * self.growth.powi(doublings as i32)).min(self.beta_max)
    }

    /// True once the sharpness has reached its cap at `iter`.
    pub fn saturated(&self, iter: usize) -> bool {
        self.value(iter) >= self.beta_max
    }
}

#[cfg(test)]
mod projection_tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        for &beta in &[1.0, 8.0, 64.0] {
            for &eta in &[0.1, 0.5, 0.9, 1.0] {
                assert!((heaviside_project(0.0, beta, eta) - 1.0).abs() < 1e-12);
                assert!(heaviside_project(1.0, beta, eta).abs() < 1e-12);
            }
            assert!((heaviside_project(0.5, beta, 0.5) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn monotone_nonincreasing_on_lattice() {
        for &beta in &[1.0, 8.0, 64.0] {
            for &eta in &[0.1, 0.5, 0.9, 1.0] {
                let mut prev = f64::INFINITY;
                for k in 0..=100 {
                    let v = heaviside_project(k as f64 / 100.0, beta, eta);
                    assert!(v <= prev + 1e-14, "beta={beta} eta={eta}");
                    assert!((-1e-12..=1.0 + 1e-12).contains(&v));
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let d = 1e-6;
        for &beta in &[1.0, 8.0, 32.0] {
            for &eta in &[0.3, 0.5, 0.8] {
                for &x in &[0.2, 0.5, 0.8] {
                    let fd =
                        (heaviside_project(x + d, beta, eta) - heaviside_project(x - d, beta, eta))
                            / (2.0 * d);
                    let an = heaviside_derivative(x, beta, eta);
                    assert!(
                        (fd - an).abs() <= 1e-6 * an.abs() + 1e-10,
                        "beta={beta} eta={eta} x={x}: {fd} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn derivative_closed_form_at_center() {
        for &beta in &[2.0f64, 8.0, 64.0] {
            let expected = -beta / (2.0 * (beta / 2.0).tanh());
            let got = heaviside_derivative(0.5, beta, 0.5);
            assert!((got - expected).abs() < 1e-10 * expected.abs());
        }
    }

    #[test]
    fn sharp_beta_saturates() {
        assert!(heaviside_project(0.7, 64.0, 0.5) < 1e-9);
        assert!(heaviside_project(0.3, 64.0, 0.5) > 1.0 - 1e-9);
    }

    #[test]
    fn complementary_forms() {
        for k in 0..=20 {
            let x = k as f64 / 20.0;
            let s = heaviside_up(x, 8.0, 0.4) + heaviside_project(x, 8.0, 0.4);
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn continuation_doubles_every_period_and_caps() {
        let s = ContinuationSchedule::default();
        assert_eq!(s.value(1), 8.0);
        assert_eq!(s.value(50), 8.0);
        assert_eq!(s.value(51), 16.0);
        assert_eq!(s.value(101), 32.0);
        assert_eq!(s.value(151), 64.0);
        assert_eq!(s.value(500), 64.0);
        assert!(!s.saturated(150));
        assert!(s.saturated(151));
    }
}
