//! Grid-sampled heuristic check of the validity conditions on `h`.
//!
//! The conditions are asymptotic, so the report is evidence rather than a
//! proof and never blocks a simulation.

use serde::Serialize;

use super::{FeedbackFunction, SumTable};
use crate::error::{Error, Result};

/// Values of `eps` at which the slow-variation constant is sampled.
pub const SLOW_VARIATION_EPSILONS: [f64; 3] = [0.1, 0.25, 0.5];

const POINTS_PER_DECADE: usize = 8;
const SUBSAMPLES: usize = 16;

#[derive(Debug, Clone, Serialize)]
pub struct ValidityReport {
    pub feedback: String,
    pub grid_max: u64,
    pub tolerance_c: f64,
    /// `min h` over the tail of the grid (`x >= sqrt(grid_max)`).
    pub min_h_tail: f64,
    pub exponent_above_one: bool,
    /// `x^(-1/4) h(x)` nonincreasing over the last third of the grid.
    pub subpolynomial_growth: bool,
    /// Largest observed `|h(t)/h(x) - 1| / eps` for `x <= t <= x^(1+eps)`.
    pub empirical_c: f64,
    pub slowly_varying: bool,
    /// `S_1(1) < inf`, the monopoly condition.
    pub monopoly_condition: bool,
    pub s1_at_one: Option<f64>,
    pub finite_difference_h: bool,
    pub warnings: Vec<String>,
    pub passed: bool,
}

fn grid(max: f64) -> Vec<f64> {
    let decades = max.log10();
    let steps = (decades * POINTS_PER_DECADE as f64).ceil() as usize;
    (0..=steps)
        .map(|k| 10f64.powf(decades * k as f64 / steps as f64))
        .collect()
}

/// Evaluates the three conditions on `h` plus the monopoly condition.
///
/// `tolerance_c` is the largest empirical slow-variation constant accepted.
pub fn check_validity(
    fb: &FeedbackFunction,
    grid_max: u64,
    tolerance_c: f64,
) -> Result<ValidityReport> {
    if grid_max < 100 {
        return Err(Error::domain(format!("grid_max must be at least 100, got {grid_max}")));
    }
    if !(tolerance_c > 0.0) {
        return Err(Error::domain(format!("tolerance_c must be positive, got {tolerance_c}")));
    }
    let max = grid_max as f64;
    let points = grid(max);
    let mut warnings = vec!["heuristic check on a finite grid; not a proof".to_string()];

    let tail: Vec<f64> = points.iter().copied().filter(|&x| x >= max.sqrt()).collect();
    let min_h_tail = tail.iter().map(|&x| fb.h_raw(x)).fold(f64::INFINITY, f64::min);
    let exponent_above_one = min_h_tail > 1.0;

    let last_third: Vec<f64> = points
        .iter()
        .copied()
        .filter(|&x| x >= max.powf(2.0 / 3.0))
        .collect();
    let damped: Vec<f64> = last_third.iter().map(|&x| x.powf(-0.25) * fb.h_raw(x)).collect();
    let subpolynomial_growth = damped.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
        && damped.iter().all(|v| v.is_finite());

    let mut empirical_c: f64 = 0.0;
    for &x in &tail {
        let hx = fb.h_raw(x);
        for eps in SLOW_VARIATION_EPSILONS {
            let ln_x = x.ln();
            for k in 1..=SUBSAMPLES {
                let t = (ln_x * (1.0 + eps * k as f64 / SUBSAMPLES as f64)).exp();
                let ratio = (fb.h_raw(t) / hx - 1.0).abs() / eps;
                empirical_c = if ratio.is_nan() { f64::INFINITY } else { empirical_c.max(ratio) };
            }
        }
    }
    let slowly_varying = empirical_c <= tolerance_c;

    let s1_at_one = match SumTable::new(fb, 1.0).and_then(|t| t.tail(1)) {
        Ok(v) if v.is_finite() => Some(v),
        Ok(_) => None,
        Err(e) => {
            warnings.push(format!("S_1(1) not computed: {e}"));
            None
        }
    };
    let monopoly_condition = s1_at_one.is_some();

    let finite_difference_h = fb.has_numerical_exponent();
    if finite_difference_h {
        warnings.push("h evaluated by finite differences".to_string());
    }
    let passed = exponent_above_one && subpolynomial_growth && slowly_varying && monopoly_condition;
    Ok(ValidityReport {
        feedback: fb.label(),
        grid_max,
        tolerance_c,
        min_h_tail,
        exponent_above_one,
        subpolynomial_growth,
        empirical_c,
        slowly_varying,
        monopoly_condition,
        s1_at_one,
        finite_difference_h,
        warnings,
        passed,
    })
}
