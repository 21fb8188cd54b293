//! Analytic worst-case rates of the gradient method, the one-dimensional
//! functions attaining them, and optimal step sizes.
//!
//! Everything here is normalized: smoothness, operator norm bound and
//! initial distance are all one, and `h` is the step in units of `1/L`.

use crate::error::{PepError, Result};

/// Bisection iterations; enough to shrink any bracket of width <= 2 below
/// one ulp.
const BISECTION_STEPS: usize = 200;
/// Relative gap below which the two branches count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

/// Parameters of the composed class `g(Mx)` with `g` 1-smooth
/// `mu_g`-strongly convex and `M` symmetric with spectrum in `[mu_m, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateParams {
    pub mu_g: f64,
    pub mu_m: f64,
    pub h: f64,
    pub n: usize,
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        check_unit("mu_g", self.mu_g)?;
        check_unit("mu_m", self.mu_m)?;
        check_step(self.h)
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(PepError::InvalidClass(format!(
            "{name} must lie in [0, 1], got {v}"
        )))
    }
}

fn check_step(h: f64) -> Result<()> {
    if h >= 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(PepError::InvalidMethod(format!(
            "step must be finite and >= 0, got {h}"
        )))
    }
}

/// Which one-dimensional function attains a rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveBranch {
    Huber,
    Quadratic,
    Both,
}

impl ActiveBranch {
    pub fn as_str(self) -> &'static str {
        match self {
            ActiveBranch::Huber => "huber",
            ActiveBranch::Quadratic => "quadratic",
            ActiveBranch::Both => "both",
        }
    }
}

/// The two candidate worst-case values, each already halved.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Branches {
    /// Gap on the Huber function; `None` when `1 - mu h <= 0`.
    pub huber: Option<f64>,
    /// Gap on `x^2 / 2`.
    pub quadratic: f64,
}

impl Branches {
    pub fn value(&self) -> f64 {
        self.huber.unwrap_or(0.0).max(self.quadratic)
    }

    pub fn active(&self) -> ActiveBranch {
        let Some(huber) = self.huber else {
            return ActiveBranch::Quadratic;
        };
        let scale = huber.abs().max(self.quadratic.abs()).max(f64::MIN_POSITIVE);
        if (huber - self.quadratic).abs() <= TIE_TOLERANCE * scale {
            ActiveBranch::Both
        } else if huber > self.quadratic {
            ActiveBranch::Huber
        } else {
            ActiveBranch::Quadratic
        }
    }
}

/// `c mu / (mu - 1 + (1 - c mu h)^(-2N))`, with the `mu -> 0` limit
/// `c / (1 + 2 N c h)`. `None` when `1 - c mu h <= 0`.
fn huber_ratio(mu: f64, c: f64, h: f64, n: usize) -> Option<f64> {
    let t = mu * c * h;
    if t >= 1.0 {
        return None;
    }
    if mu == 0.0 {
        return Some(c / (1.0 + 2.0 * n as f64 * c * h));
    }
    // (1 - t)^(-2N) - 1 without cancellation
    let growth = (-2.0 * n as f64 * (-t).ln_1p()).exp_m1();
    Some(c * mu / (mu + growth))
}

fn quadratic_branch(h: f64, n: usize) -> f64 {
    0.5 * (1.0 - h).powi(2 * n as i32)
}

/// Both branches of the rate on 1-smooth `mu_f`-strongly convex functions.
pub fn smooth_convex_branches(mu_f: f64, h: f64, n: usize) -> Result<Branches> {
    check_unit("mu_f", mu_f)?;
    check_step(h)?;
    let huber = huber_ratio(mu_f, 1.0, h, n).map(|v| 0.5 * v);
    if huber.is_none() {
        log::warn!("1 - mu h <= 0 (mu = {mu_f}, h = {h}); using the quadratic branch only");
    }
    Ok(Branches {
        huber,
        quadratic: quadratic_branch(h, n),
    })
}

/// Worst-case `f(x_N) - f*` of `N` steps on 1-smooth `mu_f`-strongly convex
/// functions with `||x_0 - x*|| <= 1`.
pub fn rate_smooth_convex(mu_f: f64, h: f64, n: usize) -> Result<f64> {
    smooth_convex_branches(mu_f, h, n).map(|b| b.value())
}

/// `(1 - mu)(1 - mu h)^(2N+1) - 1 + (2N+1) mu h`.
pub fn h0_residual(mu_g: f64, n: usize, h: f64) -> f64 {
    let k = (2 * n + 1) as f64;
    (1.0 - mu_g) * (1.0 - mu_g * h).powi(2 * n as i32 + 1) - 1.0 + k * mu_g * h
}

/// Root of [`h0_residual`] in `(0, 1/mu_g]`, found by bisection. The
/// residual is `-mu_g < 0` at zero, `2N > 0` at `1/mu_g` and increasing in
/// between. Returns infinity for `mu_g = 0`.
pub fn solve_h0(mu_g: f64, n: usize) -> Result<f64> {
    check_unit("mu_g", mu_g)?;
    if mu_g == 0.0 {
        return Ok(f64::INFINITY);
    }
    if n == 0 {
        return Ok(1.0 / mu_g);
    }
    let f = |h| h0_residual(mu_g, n, h);
    let (mut lo, mut hi) = (0.0, 1.0 / mu_g);
    if !(f(lo) < 0.0 && f(hi) > 0.0) {
        return Err(PepError::RootNotFound(format!(
            "no sign change of the h0 equation on [0, 1/mu_g] for mu_g = {mu_g}, N = {n}"
        )));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    let residual = f(root).abs();
    if residual > 1e-12 {
        return Err(PepError::RootNotFound(format!(
            "h0 bisection stalled with residual {residual:e}"
        )));
    }
    Ok(root)
}

/// Optimal scalar operator `clamp(sqrt(h0 / h), mu_m, 1)`.
pub fn m_star(params: &RateParams) -> Result<f64> {
    params.validate()?;
    let h0 = solve_h0(params.mu_g, params.n)?;
    let ratio = (h0 / params.h).sqrt();
    Ok(if ratio.is_nan() {
        1.0
    } else {
        ratio.clamp(params.mu_m, 1.0)
    })
}

/// Both branches of the conjectured rate on `g(Mx)`.
pub fn composed_branches(params: &RateParams) -> Result<Branches> {
    let m = m_star(params)?;
    let c = m * m;
    Ok(Branches {
        huber: huber_ratio(params.mu_g, c, params.h, params.n).map(|v| 0.5 * v),
        quadratic: quadratic_branch(params.h, params.n),
    })
}

/// Conjectured worst-case `F(x_N) - F*` on `F = g(Mx)`.
pub fn rate_composed(params: &RateParams) -> Result<f64> {
    composed_branches(params).map(|b| b.value())
}

/// Worst case on homogeneous quadratics with spectrum in `[mu, L]` for the
/// step `h / L` and `||x_0 - x*|| <= r`.
pub fn rate_quadratic(mu: f64, l: f64, h: f64, n: usize, r: f64) -> Result<f64> {
    if !(l > 0.0 && l.is_finite() && mu <= l) {
        return Err(PepError::InvalidClass(format!(
            "quadratic rate needs mu <= L, 0 < L < inf, got mu={mu}, L={l}"
        )));
    }
    check_step(h)?;
    let k = (2 * n + 1) as f64;
    let alpha = (1.0 / (h * k)).clamp(mu / l, 1.0);
    let e = 2 * n as i32;
    let worst = (alpha * (1.0 - alpha * h).powi(e)).max((1.0 - h).powi(e));
    Ok(0.5 * l * r * r * worst)
}

/// Function class for [`optimal_step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepClass {
    Plain { mu_f: f64 },
    Composed { mu_g: f64, mu_m: f64 },
}

/// Step in `[1, 2]` where the Huber and quadratic branches cross, which
/// minimizes the rate. Bisection on the branch difference, which is
/// nonnegative at 1 and negative at 2.
pub fn optimal_step(class: StepClass, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(PepError::InvalidMethod("optimal step needs N >= 1".into()));
    }
    let diff: Box<dyn Fn(f64) -> Result<f64>> = match class {
        StepClass::Plain { mu_f } => {
            check_unit("mu_f", mu_f)?;
            Box::new(move |h| {
                Ok(huber_ratio(mu_f, 1.0, h, n).unwrap_or(0.0) - (1.0 - h).powi(2 * n as i32))
            })
        }
        StepClass::Composed { mu_g, mu_m } => {
            check_unit("mu_g", mu_g)?;
            check_unit("mu_m", mu_m)?;
            let h0 = solve_h0(mu_g, n)?;
            Box::new(move |h| {
                let c = if h0.is_infinite() {
                    1.0
                } else {
                    (h0 / h).clamp(mu_m * mu_m, 1.0)
                };
                Ok(huber_ratio(mu_g, c, h, n).unwrap_or(0.0) - (1.0 - h).powi(2 * n as i32))
            })
        }
    };
    let (mut lo, mut hi) = (1.0, 2.0);
    if diff(lo)? < 0.0 || diff(hi)? >= 0.0 {
        return Err(PepError::RootNotFound(format!(
            "branches do not cross on [1, 2] for {class:?}, N = {n}"
        )));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if diff(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = diff(lo)?.abs();
    if residual > 1e-10 {
        return Err(PepError::RootNotFound(format!(
            "optimal step bisection stalled with residual {residual:e}"
        )));
    }
    Ok(lo)
}

/// One-dimensional functions attaining the worst case.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WorstFunction1D {
    /// Quadratic near zero, `mu`-strongly convex beyond `|x| = tau`.
    Huber { mu: f64, tau: f64 },
    /// `x^2 / 2`.
    Quadratic,
}

impl WorstFunction1D {
    /// Huber function tuned to `N` steps of size `h`, with
    /// `tau = mu / (mu - 1 + (1 - mu h)^(-2N))`.
    pub fn huber(mu: f64, h: f64, n: usize) -> Result<Self> {
        check_unit("mu", mu)?;
        check_step(h)?;
        let tau = huber_ratio(mu, 1.0, h, n).ok_or_else(|| {
            PepError::InvalidMethod(format!(
                "Huber threshold undefined for mu h = {} >= 1",
                mu * h
            ))
        })?;
        Ok(WorstFunction1D::Huber { mu, tau })
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            WorstFunction1D::Huber { mu, tau } if x.abs() >= tau => {
                0.5 * mu * x * x + (1.0 - mu) * tau * x.abs() - 0.5 * (1.0 - mu) * tau * tau
            }
            _ => 0.5 * x * x,
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            WorstFunction1D::Huber { mu, tau } if x.abs() >= tau => {
                mu * x + (1.0 - mu) * tau * x.signum()
            }
            _ => x,
        }
    }
}

/// Iterates and gaps of the gradient method on `scale * fun`.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceRun {
    pub iterates: Vec<f64>,
    /// `scale * fun(x_k)`; the minimum value is zero.
    pub gaps: Vec<f64>,
}

impl InstanceRun {
    pub fn final_gap(&self) -> f64 {
        *self.gaps.last().expect("at least the initial iterate")
    }
}

/// Runs `x_{k+1} = x_k - h scale fun'(x_k)` for `N` steps from `x0`.
pub fn run_method_on_instance(
    fun: &WorstFunction1D,
    scale: f64,
    h: f64,
    n: usize,
    x0: f64,
) -> InstanceRun {
    let mut x = x0;
    let mut iterates = vec![x];
    let mut gaps = vec![scale * fun.value(x)];
    for _ in 0..n {
        x -= h * scale * fun.derivative(x);
        iterates.push(x);
        gaps.push(scale * fun.value(x));
    }
    InstanceRun { iterates, gaps }
}

/// Larger final gap of the gradient method on `M*^2 l_{mu_g, M*^2 h}` and
/// `x^2 / 2` from `x0 = 1`: a lower bound on the composed worst case.
pub fn composed_lower_bound(params: &RateParams) -> Result<f64> {
    let m = m_star(params)?;
    let c = m * m;
    let quad = run_method_on_instance(&WorstFunction1D::Quadratic, 1.0, params.h, params.n, 1.0);
    let huber = match WorstFunction1D::huber(params.mu_g, c * params.h, params.n) {
        Ok(f) => run_method_on_instance(&f, c, params.h, params.n, 1.0).final_gap(),
        Err(_) => 0.0,
    };
    Ok(huber.max(quad.final_gap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(mu_g: f64, mu_m: f64, h: f64, n: usize) -> RateParams {
        RateParams { mu_g, mu_m, h, n }
    }

    #[test]
    fn convex_one_step() {
        assert_abs_diff_eq!(
            rate_smooth_convex(0.0, 1.0, 1).unwrap(),
            1.0 / 6.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn zero_step_makes_no_progress() {
        for mu in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(
                rate_smooth_convex(mu, 0.0, 5).unwrap(),
                0.5,
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn small_mu_approaches_convex_limit() {
        let limit = rate_smooth_convex(0.0, 1.0, 7).unwrap();
        let near = rate_smooth_convex(1e-9, 1.0, 7).unwrap();
        assert_abs_diff_eq!(limit, near, epsilon = 1e-9);
    }

    #[test]
    fn huber_branch_undefined_past_inverse_mu() {
        let b = smooth_convex_branches(0.8, 1.5, 3).unwrap();
        assert_eq!(b.huber, None);
        assert_eq!(b.active(), ActiveBranch::Quadratic);
        assert_abs_diff_eq!(b.value(), 0.5 * 0.5f64.powi(6), epsilon = 1e-15);
    }

    #[test]
    fn h0_residual_vanishes_on_grid() {
        for n in [1, 2, 5, 10, 30] {
            for k in 1..=19 {
                let mu = 0.05 * k as f64;
                let h0 = solve_h0(mu, n).unwrap();
                assert!(h0 > 0.0 && h0 <= 1.0 / mu);
                assert!(h0_residual(mu, n, h0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn h0_at_unit_mu() {
        for n in 1..6 {
            let h0 = solve_h0(1.0, n).unwrap();
            assert_abs_diff_eq!(h0, 1.0 / (2 * n + 1) as f64, epsilon = 1e-14);
        }
        assert!(solve_h0(0.0, 3).unwrap().is_infinite());
    }

    #[test]
    fn unit_mu_m_matches_plain_rate() {
        for &(mu, h, n) in &[(0.1, 1.0, 10), (0.5, 0.7, 3), (0.0, 1.5, 4), (0.9, 1.9, 2)] {
            let composed = rate_composed(&params(mu, 1.0, h, n)).unwrap();
            let plain = rate_smooth_convex(mu, h, n).unwrap();
            assert_abs_diff_eq!(composed, plain, epsilon = 1e-14);
        }
    }

    #[test]
    fn composed_rate_is_sandwiched() {
        for k in 1..40 {
            let h = 0.05 * k as f64;
            for &(mu_g, mu_m) in &[(0.1, 0.0), (0.3, 0.5), (0.8, 0.2)] {
                let c = rate_composed(&params(mu_g, mu_m, h, 6)).unwrap();
                let low = rate_smooth_convex(mu_g, h, 6).unwrap();
                let high = rate_smooth_convex(0.0, h, 6).unwrap();
                assert!(
                    low <= c + 1e-14 && c <= high + 1e-14,
                    "h={h}: {low} {c} {high}"
                );
            }
        }
    }

    #[test]
    fn quadratic_rate_examples() {
        assert_abs_diff_eq!(
            rate_quadratic(0.0, 1.0, 1.0, 1, 1.0).unwrap(),
            2.0 / 27.0,
            epsilon = 1e-15
        );
        let same = rate_quadratic(1.0, 1.0, 0.4, 3, 1.0).unwrap();
        assert_abs_diff_eq!(same, 0.5 * 0.6f64.powi(6), epsilon = 1e-15);
        let scaled = rate_quadratic(0.5, 2.0, 0.8, 2, 3.0).unwrap();
        let unit = rate_quadratic(0.25, 1.0, 0.8, 2, 1.0).unwrap();
        assert_abs_diff_eq!(scaled, 2.0 * 9.0 * unit, epsilon = 1e-13);
    }

    #[test]
    fn optimal_step_equalizes_branches() {
        for n in [1, 3, 10] {
            for mu in [0.0, 0.1, 0.5, 0.9] {
                let h = optimal_step(StepClass::Plain { mu_f: mu }, n).unwrap();
                let b = smooth_convex_branches(mu, h, n).unwrap();
                assert_abs_diff_eq!(b.huber.unwrap(), b.quadratic, epsilon = 1e-9);
                let best = b.value();
                for dh in [-0.01, 0.01] {
                    assert!(best <= rate_smooth_convex(mu, h + dh, n).unwrap() + 1e-15);
                }
            }
        }
    }

    #[test]
    fn composed_optimal_step_reduces_to_plain() {
        for mu in [0.0, 0.2, 0.7] {
            let plain = optimal_step(StepClass::Plain { mu_f: mu }, 4).unwrap();
            let composed = optimal_step(
                StepClass::Composed {
                    mu_g: mu,
                    mu_m: 1.0,
                },
                4,
            )
            .unwrap();
            assert_abs_diff_eq!(plain, composed, epsilon = 1e-12);
        }
    }

    #[test]
    fn composed_optimal_step_is_locally_optimal() {
        for &(mu_g, mu_m) in &[(0.1, 0.0), (0.5, 0.3)] {
            let h = optimal_step(StepClass::Composed { mu_g, mu_m }, 5).unwrap();
            let best = rate_composed(&params(mu_g, mu_m, h, 5)).unwrap();
            for dh in [-0.01, 0.01] {
                assert!(best <= rate_composed(&params(mu_g, mu_m, h + dh, 5)).unwrap() + 1e-15);
            }
        }
    }

    #[test]
    fn huber_is_continuous_and_in_class() {
        for &(mu, h, n) in &[(0.1, 1.0, 5), (0.0, 1.5, 3), (0.6, 0.9, 2)] {
            let f = WorstFunction1D::huber(mu, h, n).unwrap();
            let WorstFunction1D::Huber { tau, .. } = f else {
                unreachable!()
            };
            let (inside, outside) = (tau * (1.0 - 1e-13), tau * (1.0 + 1e-13));
            assert_abs_diff_eq!(f.value(inside), f.value(outside), epsilon = 1e-12);
            assert_abs_diff_eq!(f.derivative(inside), f.derivative(outside), epsilon = 1e-12);
            let step = 1e-4;
            for k in -300..=300 {
                let x = 0.01 * k as f64;
                let second = (f.derivative(x + step) - f.derivative(x - step)) / (2.0 * step);
                let kink = (x.abs() - tau).abs() < step;
                if !kink {
                    assert!(
                        second >= mu - 1e-8 && second <= 1.0 + 1e-8,
                        "x={x}: {second}"
                    );
                }
            }
        }
    }

    #[test]
    fn instances_reach_the_branches() {
        for &(h, n) in &[(0.5, 1), (1.0, 4), (1.7, 6)] {
            let q = run_method_on_instance(&WorstFunction1D::Quadratic, 1.0, h, n, 1.0);
            assert_abs_diff_eq!(
                q.final_gap(),
                0.5 * (1.0 - h).powi(2 * n as i32),
                epsilon = 1e-14
            );
            for mu in [0.0, 0.2, 0.5] {
                if mu * h >= 1.0 {
                    continue;
                }
                let f = WorstFunction1D::huber(mu, h, n).unwrap();
                let run = run_method_on_instance(&f, 1.0, h, n, 1.0);
                let expected = smooth_convex_branches(mu, h, n).unwrap().huber.unwrap();
                assert_abs_diff_eq!(run.final_gap(), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn construction_matches_conjectured_rate() {
        for &mu_g in &[0.0, 0.1, 0.4, 0.9] {
            for &mu_m in &[0.0, 0.3, 1.0] {
                for &n in &[1, 3, 8] {
                    for k in 1..20 {
                        let p = params(mu_g, mu_m, 0.1 * k as f64, n);
                        let lb = composed_lower_bound(&p).unwrap();
                        let rate = rate_composed(&p).unwrap();
                        assert_abs_diff_eq!(lb, rate, epsilon = 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn composition_gain_is_about_exp_sqrt_mu() {
        let (mu_g, n) = (0.1, 50);
        let h0 = solve_h0(mu_g, n).unwrap();
        let h = h0.max(1.0);
        let p = params(mu_g, 0.0, h, n);
        assert_eq!(composed_branches(&p).unwrap().active(), ActiveBranch::Huber);
        let ratio = rate_composed(&p).unwrap() / rate_smooth_convex(0.0, h, n).unwrap();
        let expected = (-mu_g.sqrt()).exp();
        assert!(
            (ratio / expected - 1.0).abs() < 0.2,
            "{ratio} vs {expected}"
        );
    }
}
