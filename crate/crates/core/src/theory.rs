//! When does splitting a budget over independent threads pay off, under a
//! power-law success curve `q(x) = c x^alpha`?

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TheoryError {
    #[error("c must lie in (0, 1], got {0}")]
    BadScale(f64),
    #[error("alpha must lie in (0, 1), got {0}")]
    BadExponent(f64),
    #[error("p must be at least 2, got {0}")]
    BadThreads(u32),
    #[error("budget fraction {0} outside (0, 1]")]
    OutOfDomain(f64),
    #[error("need at least two points with positive success rate for a fit, got {0}")]
    TooFewPoints(usize),
}

/// Lower bracket of the root search, away from the trivial root at 0.
pub const ROOT_EPS: f64 = 1e-15;
/// Default reward threshold defining an empirical success.
pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawModel {
    pub c: f64,
    pub alpha: f64,
}

impl PowerLawModel {
    pub fn new(c: f64, alpha: f64) -> Result<Self, TheoryError> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(TheoryError::BadScale(c));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(TheoryError::BadExponent(alpha));
        }
        Ok(PowerLawModel { c, alpha })
    }

    /// Success probability with budget fraction `x`.
    pub fn q(&self, x: f64) -> f64 {
        self.c * x.powf(self.alpha)
    }
}

fn check_p(p: u32) -> Result<(), TheoryError> {
    if p < 2 {
        Err(TheoryError::BadThreads(p))
    } else {
        Ok(())
    }
}

/// Both sides of the benefit inequality: `(1 - (1 - q(x/p))^p, q(x))`.
pub fn benefit_sides(model: &PowerLawModel, x: f64, p: u32) -> Result<(f64, f64), TheoryError> {
    check_p(p)?;
    if !(x > 0.0 && x <= 1.0) {
        return Err(TheoryError::OutOfDomain(x));
    }
    let qs = model.q(x / f64::from(p));
    Ok((1.0 - (1.0 - qs).powi(p as i32), model.q(x)))
}

/// True when `p` threads of budget `x/p` beat one thread of budget `x`.
/// Differences below 1e-12 relative are treated as equality, so the
/// threshold itself evaluates to false.
pub fn benefit_condition(model: &PowerLawModel, x: f64, p: u32) -> Result<bool, TheoryError> {
    let (lhs, rhs) = benefit_sides(model, x, p)?;
    Ok(lhs - rhs > 1e-12 * rhs)
}

/// `h(y) = 1 - (1 - y)^p - p^alpha y`.
/// Evaluated as `-expm1(p ln(1 - y))` to keep precision near `y = 0`.
pub fn h(y: f64, p: u32, alpha: f64) -> f64 {
    -(f64::from(p) * (-y).ln_1p()).exp_m1() - f64::from(p).powf(alpha) * y
}

/// Unique root of `h` in `(0, 1]`, by bisection on `[1e-15, 1]`. `h` is
/// strictly concave with `h(0) = 0` and `h'(0) = p - p^alpha > 0`.
pub fn solve_root(p: u32, alpha: f64) -> Result<f64, TheoryError> {
    check_p(p)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(TheoryError::BadExponent(alpha));
    }
    let (mut lo, mut hi) = (ROOT_EPS, 1.0f64);
    if h(hi, p, alpha) > 0.0 {
        return Ok(1.0);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid, p, alpha) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub p: u32,
    pub y_star: f64,
    /// `p (y* / c)^(1/alpha)`; may exceed 1.
    pub v_p: f64,
    /// `min(v_p, 1)`: the threshold within the budget domain.
    pub v_p_clamped: f64,
}

/// Budget fraction below which splitting into `p` threads helps.
pub fn budget_threshold(model: &PowerLawModel, p: u32) -> Result<Threshold, TheoryError> {
    let y_star = solve_root(p, model.alpha)?;
    let v_p = f64::from(p) * (y_star / model.c).powf(1.0 / model.alpha);
    Ok(Threshold {
        p,
        y_star,
        v_p,
        v_p_clamped: v_p.min(1.0),
    })
}

/// Leading-order approximation of `v_2` as `alpha -> 1`:
/// `4 ln 2 (1 - alpha) / c`.
pub fn approx_v2(model: &PowerLawModel) -> f64 {
    4.0 * std::f64::consts::LN_2 * (1.0 - model.alpha) / model.c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub x: f64,
    pub parallel: f64,
    pub single: f64,
    pub holds: bool,
}

/// Benefit condition over an evenly spaced grid of `points` budgets in `(0, 1]`.
pub fn condition_table(model: &PowerLawModel, p: u32, points: usize) -> Result<Vec<ConditionRow>, TheoryError> {
    (1..=points)
        .map(|i| {
            let x = i as f64 / points as f64;
            let (parallel, single) = benefit_sides(model, x, p)?;
            Ok(ConditionRow {
                x,
                parallel,
                single,
                holds: benefit_condition(model, x, p)?,
            })
        })
        .collect()
}

/// Fraction of rewards at or above `threshold`.
pub fn success_rate(rewards: &[f64], threshold: f64) -> f64 {
    if rewards.is_empty() {
        return 0.0;
    }
    rewards.iter().filter(|&&r| r >= threshold).count() as f64 / rewards.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub c: f64,
    pub alpha: f64,
    pub points_used: usize,
}

/// Least-squares fit of `log q = log c + alpha log x` over points with
/// `x > 0` and `q > 0`. The fitted values are not clamped to the model's
/// valid ranges.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit, TheoryError> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, q)| *x > 0.0 && *q > 0.0)
        .map(|(x, q)| (x.ln(), q.ln()))
        .collect();
    let n = pts.len();
    let distinct_x = pts.windows(2).any(|w| w[0].0 != w[1].0);
    if n < 2 || !distinct_x {
        return Err(TheoryError::TooFewPoints(n));
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let alpha = sxy / sxx;
    Ok(PowerLawFit {
        c: (my - alpha * mx).exp(),
        alpha,
        points_used: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_root_closed_form() {
        for i in 1..=19 {
            let a = f64::from(i) * 0.05;
            let y = solve_root(2, a).unwrap();
            assert!((y - (2.0 - 2f64.powf(a))).abs() < 1e-10, "alpha {a}");
        }
    }

    #[test]
    fn v2_at_half() {
        let m = PowerLawModel::new(1.0, 0.5).unwrap();
        let t = budget_threshold(&m, 2).unwrap();
        let expected = 2.0 * (2.0 - 2f64.sqrt()).powi(2);
        assert!((t.v_p - expected).abs() < 1e-10);
        assert!((t.v_p - 0.6863).abs() < 1e-4);
    }

    #[test]
    fn p3_root_brackets() {
        let y = solve_root(3, 0.5).unwrap();
        assert!(h(y, 3, 0.5).abs() < 1e-10);
        assert!(h(y * 0.999, 3, 0.5) > 0.0 && h(y * 1.001, 3, 0.5) < 0.0);
    }

    #[test]
    fn root_vanishes_as_alpha_nears_one() {
        assert!(solve_root(2, 0.999_999).unwrap() < 1e-5);
    }

    #[test]
    fn condition_at_threshold_and_small_budgets() {
        let m = PowerLawModel::new(1.0, 0.5).unwrap();
        let t = budget_threshold(&m, 2).unwrap();
        assert!(!benefit_condition(&m, t.v_p, 2).unwrap());
        assert!(benefit_condition(&m, 1e-6, 2).unwrap());
        let (l, r) = benefit_sides(&m, 0.1, 2).unwrap();
        assert!((l - (1.0 - (1.0 - 0.05f64.sqrt()).powi(2))).abs() < 1e-15);
        assert!((r - 0.1f64.sqrt()).abs() < 1e-15);
        assert_eq!(benefit_condition(&m, 0.1, 2).unwrap(), 0.1 < t.v_p);
    }

    #[test]
    fn tiny_c_pushes_threshold_past_one() {
        let m = PowerLawModel::new(1e-3, 0.5).unwrap();
        let t = budget_threshold(&m, 2).unwrap();
        assert!(t.v_p > 1.0);
        assert_eq!(t.v_p_clamped, 1.0);
    }

    #[test]
    fn validation() {
        assert!(PowerLawModel::new(0.0, 0.5).is_err());
        assert!(PowerLawModel::new(1.0, 1.0).is_err());
        assert!(solve_root(1, 0.5).is_err());
        let m = PowerLawModel::new(1.0, 0.5).unwrap();
        assert!(benefit_condition(&m, 0.0, 2).is_err());
        assert!(benefit_condition(&m, 1.5, 2).is_err());
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.2, 0.4, 0.8]
            .iter()
            .map(|&x| (x, 0.7 * f64::powf(x, 0.6)))
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.c - 0.7).abs() < 1e-12 && (f.alpha - 0.6).abs() < 1e-12);
        assert!(fit_power_law(&[(0.5, 0.2), (0.5, 0.3)]).is_err());
        assert_eq!(success_rate(&[0.95, 0.5, 0.9, 1.0], DEFAULT_SUCCESS_THRESHOLD), 0.75);
    }
}
