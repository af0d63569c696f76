//! Model primitives: category parameters, Beta posteriors, and the three
//! elementary distributions the solver and simulator are built on.
//!
//! Time is normalized so the user's visit rate is 1. A category is then
//! described by the discount factor `gamma` (probability that another visit
//! happens) and the queue parameter `xi` (the queue length at a visit is
//! geometric on `{0, 1, 2, ...}` with `P(L = i) = (1 - xi)^i xi`).

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Per-category parameters of the forwarding problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryParams {
    pub gamma: f64,
    pub xi: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl CategoryParams {
    pub fn new(gamma: f64, xi: f64, alpha0: f64, beta0: f64) -> Result<Self> {
        let p = Self {
            gamma,
            xi,
            alpha0,
            beta0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        check_open_unit("gamma", self.gamma)?;
        check_open_unit("xi", self.xi)?;
        if !(self.alpha0 > 0.0 && self.alpha0.is_finite()) {
            return Err(Error::Domain(format!("alpha0 must be > 0, got {}", self.alpha0)));
        }
        if !(self.beta0 > 0.0 && self.beta0.is_finite()) {
            return Err(Error::Domain(format!("beta0 must be > 0, got {}", self.beta0)));
        }
        Ok(())
    }

    /// The prior as a posterior state (no observations yet).
    pub fn prior(&self) -> PosteriorState {
        PosteriorState {
            alpha: self.alpha0,
            beta: self.beta0,
        }
    }

    /// Same category, with the prior moved to `state`.
    pub fn rooted_at(&self, state: PosteriorState) -> Self {
        Self {
            alpha0: state.alpha,
            beta0: state.beta,
            ..*self
        }
    }

    /// Poisson arrival rate of items relative to a unit visit rate.
    pub fn arrival_rate(&self) -> f64 {
        (1.0 - self.xi) / self.xi
    }

    /// Abandonment rate relative to a unit visit rate.
    pub fn abandonment_rate(&self) -> f64 {
        (1.0 - self.gamma) / self.gamma
    }
}

/// Parameters of the full k-category problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub categories: Vec<CategoryParams>,
    /// Unit forwarding cost `c`; absent in the budget-only problem.
    pub cost: Option<f64>,
    /// `M`: per-category cap per visit, and the per-visit budget when
    /// `budget` is set.
    pub max_forward: u32,
    /// Whether `sum_x U_x <= M` is enforced at every visit.
    pub budget: bool,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Domain("at least one category is required".into()));
        }
        if self.max_forward == 0 {
            return Err(Error::Domain("max_forward must be >= 1".into()));
        }
        if let Some(c) = self.cost {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::Domain(format!("cost must be >= 0, got {c}")));
            }
        }
        self.categories.iter().try_for_each(CategoryParams::validate)
    }

    pub fn k(&self) -> usize {
        self.categories.len()
    }

    /// The discount factor shared by all categories. Visits belong to the
    /// user, so categories with different `gamma` are rejected.
    pub fn common_gamma(&self) -> Result<f64> {
        let g = self
            .categories
            .first()
            .ok_or_else(|| Error::Domain("no categories".into()))?
            .gamma;
        if self.categories.iter().any(|c| c.gamma != g) {
            return Err(Error::Config(
                "all categories must share the same gamma".into(),
            ));
        }
        Ok(g)
    }

    /// Cost used for net rewards and cost gates; 0 when absent.
    pub fn cost_or_zero(&self) -> f64 {
        self.cost.unwrap_or(0.0)
    }
}

/// Beta posterior `(alpha, beta)` on a category's relevance probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    pub alpha: f64,
    pub beta: f64,
}

impl PosteriorState {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(Error::Domain(format!(
                "posterior parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Observation counts `(relevant, irrelevant)` since the prior of
    /// `params`, or `None` if the state is not reachable from it.
    pub fn increments_from(&self, params: &CategoryParams) -> Option<(usize, usize)> {
        let i = count_increment(self.alpha - params.alpha0)?;
        let j = count_increment(self.beta - params.beta0)?;
        Some((i, j))
    }
}

fn count_increment(delta: f64) -> Option<usize> {
    let r = delta.round();
    if r < 0.0 || (delta - r).abs() > 1e-9 || !r.is_finite() {
        None
    } else {
        Some(r as usize)
    }
}

fn check_open_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// `P(L = i) = (1 - xi)^i xi`, the queue length at a visit.
pub fn queue_pmf(i: u32, xi: f64) -> Result<f64> {
    check_open_unit("xi", xi)?;
    Ok((1.0 - xi).powi(i as i32) * xi)
}

/// `P(Z = i | U = u)` for `Z = min(u, L)`.
pub fn truncated_queue_pmf(i: u32, u: u32, xi: f64) -> Result<f64> {
    check_open_unit("xi", xi)?;
    if i > u {
        return Err(Error::Domain(format!("shown count {i} exceeds action {u}")));
    }
    Ok(if i < u {
        (1.0 - xi).powi(i as i32) * xi
    } else {
        (1.0 - xi).powi(u as i32)
    })
}

/// `E[min(u, L)] = (1 - xi)/xi * (1 - (1 - xi)^u)`.
pub fn expected_min(u: u32, xi: f64) -> Result<f64> {
    check_open_unit("xi", xi)?;
    Ok((1.0 - xi) / xi * (1.0 - (1.0 - xi).powi(u as i32)))
}

/// `ln B(a, b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Probability of `k` relevant items among `i` shown, under a
/// `Beta(alpha, beta)` posterior. Evaluated in log space.
pub fn beta_binomial_pmf(k: u32, i: u32, alpha: f64, beta: f64) -> Result<f64> {
    if k > i {
        return Err(Error::Domain(format!("relevant count {k} exceeds shown count {i}")));
    }
    PosteriorState::new(alpha, beta)?;
    let (k, i) = (k as f64, i as f64);
    let ln_choose = ln_gamma(i + 1.0) - ln_gamma(k + 1.0) - ln_gamma(i - k + 1.0);
    let ln_p = ln_choose + ln_beta(alpha + k, beta + i - k) - ln_beta(alpha, beta);
    Ok(ln_p.exp())
}

/// Conjugate update after `y` relevant out of `z` shown.
pub fn posterior_update(state: PosteriorState, y: u32, z: u32) -> Result<PosteriorState> {
    if y > z {
        return Err(Error::Domain(format!("relevant count {y} exceeds shown count {z}")));
    }
    Ok(PosteriorState {
        alpha: state.alpha + y as f64,
        beta: state.beta + (z - y) as f64,
    })
}

/// Absolute tolerance on the returned quantile.
pub const QUANTILE_TOL: f64 = 1e-10;

/// Smallest `q` with `P(theta <= q) >= level` under `Beta(alpha, beta)`.
///
/// Bisection on the regularized incomplete beta function; each iteration
/// tries a Newton step first and keeps it only when it lands strictly inside
/// the current bracket and shrinks it at least as fast as halving would.
pub fn posterior_quantile(state: PosteriorState, level: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Domain(format!("quantile level must lie in [0, 1), got {level}")));
    }
    let PosteriorState { alpha, beta } = PosteriorState::new(state.alpha, state.beta)?;
    if level == 0.0 {
        return Ok(0.0);
    }
    let ln_b = ln_beta(alpha, beta);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = state.mean();
    for _ in 0..200 {
        let f = beta_reg(alpha, beta, x) - level;
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= QUANTILE_TOL {
            break;
        }
        let ln_pdf = (alpha - 1.0) * x.ln() + (beta - 1.0) * (1.0 - x).ln() - ln_b;
        let pdf = ln_pdf.exp();
        let newton = x - f / pdf;
        let mid = 0.5 * (lo + hi);
        // Newton steps that converge stop moving; finish with a tight bracket
        // around the Newton iterate so the tolerance is certified.
        if newton.is_finite() && newton > lo && newton < hi {
            if (newton - x).abs() < 0.25 * QUANTILE_TOL {
                let a = (newton - 0.5 * QUANTILE_TOL).max(lo);
                let b = (newton + 0.5 * QUANTILE_TOL).min(hi);
                if beta_reg(alpha, beta, a) < level {
                    lo = a;
                }
                if beta_reg(alpha, beta, b) >= level {
                    hi = b;
                }
                x = if hi - lo <= QUANTILE_TOL { newton.clamp(lo, hi) } else { 0.5 * (lo + hi) };
                if hi - lo <= QUANTILE_TOL {
                    break;
                }
                continue;
            }
            x = newton;
        } else {
            x = mid;
        }
    }
    Ok(x.clamp(lo, hi))
}

/// `E[(theta - nu)^+]` under `Beta(alpha, beta)`.
pub fn expected_positive_part(state: PosteriorState, nu: f64) -> f64 {
    let mu = state.mean();
    if nu <= 0.0 {
        return mu - nu;
    }
    if nu >= 1.0 {
        return 0.0;
    }
    let tail_a1 = 1.0 - beta_reg(state.alpha + 1.0, state.beta, nu);
    let tail_a = 1.0 - beta_reg(state.alpha, state.beta, nu);
    (mu * tail_a1 - nu * tail_a).max((mu - nu).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn queue_pmf_examples() {
        assert_abs_diff_eq!(queue_pmf(0, 0.5).unwrap(), 0.5);
        assert_abs_diff_eq!(queue_pmf(2, 0.5).unwrap(), 0.125);
        assert_abs_diff_eq!(queue_pmf(1, 0.2).unwrap(), 0.16, epsilon = 1e-15);
        assert!(queue_pmf(1, 1.0).is_err());
        assert!(queue_pmf(1, 0.0).is_err());
    }

    #[test]
    fn truncated_queue_examples() {
        assert_eq!(truncated_queue_pmf(0, 0, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(truncated_queue_pmf(2, 2, 0.5).unwrap(), 0.25);
        assert_abs_diff_eq!(truncated_queue_pmf(1, 2, 0.5).unwrap(), 0.25);
        assert!(truncated_queue_pmf(3, 2, 0.5).is_err());
    }

    #[test]
    fn expected_min_examples() {
        assert_eq!(expected_min(0, 0.5).unwrap(), 0.0);
        assert_abs_diff_eq!(expected_min(2, 0.5).unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(expected_min(1, 0.1).unwrap(), 0.9, epsilon = 1e-15);
    }

    #[test]
    fn beta_binomial_examples() {
        assert_abs_diff_eq!(beta_binomial_pmf(1, 2, 1.0, 1.0).unwrap(), 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(beta_binomial_pmf(0, 1, 2.0, 2.0).unwrap(), 0.5, epsilon = 1e-12);
        assert!(beta_binomial_pmf(3, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn beta_binomial_half_integer_against_exact_product() {
        // C(5,3) B(4.5, 4.5) / B(1.5, 2.5), expanded as rising factorials:
        // C(5,3) * (1.5)(2.5)(3.5) * (2.5)(3.5) / ((4)(5)(6)(7)(8)).
        let exact = 10.0 * (1.5 * 2.5 * 3.5) * (2.5 * 3.5) / (4.0 * 5.0 * 6.0 * 7.0 * 8.0);
        let got = beta_binomial_pmf(3, 5, 1.5, 2.5).unwrap();
        assert_abs_diff_eq!(got, exact, epsilon = 1e-13);
        let total: f64 = (0..=5).map(|k| beta_binomial_pmf(k, 5, 1.5, 2.5).unwrap()).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_update_examples() {
        let s = |a, b| PosteriorState { alpha: a, beta: b };
        assert_eq!(posterior_update(s(1.0, 1.0), 2, 3).unwrap(), s(3.0, 2.0));
        assert_eq!(posterior_update(s(5.0, 5.0), 0, 0).unwrap(), s(5.0, 5.0));
        assert_eq!(posterior_update(s(2.0, 1.0), 1, 1).unwrap(), s(3.0, 1.0));
        assert!(posterior_update(s(1.0, 1.0), 2, 1).is_err());
    }

    /// Composite Simpson on the Beta density, refined adaptively.
    fn beta_cdf_quadrature(a: f64, b: f64, x: f64) -> f64 {
        let ln_b = ln_beta(a, b);
        let pdf = |t: f64| {
            if t <= 0.0 || t >= 1.0 {
                0.0
            } else {
                ((a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln() - ln_b).exp()
            }
        };
        fn simpson(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, fl: f64, fm: f64, fh: f64, whole: f64, eps: f64, depth: u32) -> f64 {
            let m = 0.5 * (lo + hi);
            let (lm, rm) = (0.5 * (lo + m), 0.5 * (m + hi));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - lo) / 6.0 * (fl + 4.0 * flm + fm);
            let right = (hi - m) / 6.0 * (fm + 4.0 * frm + fh);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                simpson(f, lo, m, fl, flm, fm, left, eps / 2.0, depth - 1)
                    + simpson(f, m, hi, fm, frm, fh, right, eps / 2.0, depth - 1)
            }
        }
        let (fl, fm, fh) = (pdf(0.0), pdf(0.5 * x), pdf(x));
        let whole = x / 6.0 * (fl + 4.0 * fm + fh);
        simpson(&pdf, 0.0, x, fl, fm, fh, whole, 1e-14, 40)
    }

    #[test]
    fn quantile_examples() {
        let uniform = PosteriorState { alpha: 1.0, beta: 1.0 };
        assert_abs_diff_eq!(posterior_quantile(uniform, 0.75).unwrap(), 0.75, epsilon = 1e-10);
        assert_eq!(posterior_quantile(uniform, 0.0).unwrap(), 0.0);
        assert!(posterior_quantile(uniform, 1.0).is_err());
        assert!(posterior_quantile(uniform, -0.1).is_err());

        // Oracle: quadrature CDF inverted by plain bisection.
        let (a, b) = (3.0, 2.0);
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if beta_cdf_quadrature(a, b, mid) < 0.9 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        let got = posterior_quantile(PosteriorState { alpha: a, beta: b }, 0.9).unwrap();
        assert_abs_diff_eq!(got, oracle, epsilon = 2e-10);
        // Closed form CDF of Beta(3,2) is 4x^3 - 3x^4.
        assert_abs_diff_eq!(4.0 * got.powi(3) - 3.0 * got.powi(4), 0.9, epsilon = 1e-9);
    }

    #[test]
    fn positive_part_matches_quadrature() {
        let s = PosteriorState { alpha: 3.0, beta: 4.0 };
        let nu = 0.35;
        // E[(θ-ν)^+] = ∫_ν^1 (θ-ν) pdf = (1-I_ν(a+1,b)) μ - ν (1-I_ν(a,b)); check via
        // quadrature of the two CDFs.
        let mu = s.mean();
        let q = mu * (1.0 - beta_cdf_quadrature(4.0, 4.0, nu)) - nu * (1.0 - beta_cdf_quadrature(3.0, 4.0, nu));
        assert_abs_diff_eq!(expected_positive_part(s, nu), q, epsilon = 1e-10);
        assert_eq!(expected_positive_part(s, 1.0), 0.0);
        assert_abs_diff_eq!(expected_positive_part(s, 0.0), mu);
    }

    #[test]
    fn increments() {
        let p = CategoryParams::new(0.9, 0.2, 1.0, 1.0).unwrap();
        assert_eq!(PosteriorState { alpha: 3.0, beta: 1.0 }.increments_from(&p), Some((2, 0)));
        assert_eq!(PosteriorState { alpha: 0.5, beta: 1.0 }.increments_from(&p), None);
        assert_eq!(PosteriorState { alpha: 1.5, beta: 1.0 }.increments_from(&p), None);
    }

    proptest! {
        #[test]
        fn truncated_queue_normalizes_and_matches_expected_min(u in 0u32..40, xi in 0.001f64..0.999) {
            let total: f64 = (0..=u).map(|i| truncated_queue_pmf(i, u, xi).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            let mean: f64 = (0..=u).map(|i| i as f64 * truncated_queue_pmf(i, u, xi).unwrap()).sum();
            let closed = expected_min(u, xi).unwrap();
            prop_assert!((mean - closed).abs() < 1e-12 * closed.max(1.0));
        }

        #[test]
        fn beta_binomial_normalizes_and_is_martingale(i in 0u32..12, a in 0.1f64..300.0, b in 0.1f64..300.0) {
            let pmf: Vec<f64> = (0..=i).map(|k| beta_binomial_pmf(k, i, a, b).unwrap()).collect();
            let total: f64 = pmf.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-10);
            let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
            prop_assert!((mean - i as f64 * a / (a + b)).abs() < 1e-10);
            let s = PosteriorState { alpha: a, beta: b };
            let next_mean: f64 = pmf.iter().enumerate()
                .map(|(k, p)| p * posterior_update(s, k as u32, i).unwrap().mean())
                .sum();
            prop_assert!((next_mean - s.mean()).abs() < 1e-10);
        }

        #[test]
        fn quantile_is_monotone(a in 0.5f64..50.0, b in 0.5f64..50.0, l1 in 0.0f64..0.999, l2 in 0.0f64..0.999) {
            let s = PosteriorState { alpha: a, beta: b };
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let q1 = posterior_quantile(s, lo).unwrap();
            let q2 = posterior_quantile(s, hi).unwrap();
            prop_assert!(q1 <= q2 + 1e-10);
            if lo > 0.0 {
                prop_assert!((beta_reg(a, b, q1) - lo).abs() < 1e-6 || q1 < 1e-8 || q1 > 1.0 - 1e-8);
            }
        }
    }
}
