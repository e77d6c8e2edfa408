//! Partial sums `S_r(n, m) = sum_{j=n}^{m-1} f(j)^(-r)` and tail integrals
//! `M_r(n) = int_n^inf f(x)^(-r) dx`.
//!
//! Infinite sums are summed directly up to a cut-off `J` and completed with
//! an Euler–Maclaurin tail `M_r(J) + g(J)/2 - g'(J)/12 + g'''(J)/720`,
//! `g = f^(-r)`. The cut-off doubles until the last included correction is
//! below the relative tolerance.

use std::collections::HashMap;
use std::sync::Mutex;

use super::FeedbackFunction;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, Tolerance};

/// Upper summation limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Upper {
    At(u64),
    Infinity,
}

/// Value of `M_r(n)` with an absolute error bound (quadrature plus the
/// analytic remainder beyond the last panel).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailIntegral {
    pub value: f64,
    pub error: f64,
}

const DIRECT_LIMIT: u64 = 1 << 16;
const MAX_CUTOFF: u64 = 1 << 26;
const DEFAULT_EPSILON: f64 = 1e-12;

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Memoised `S_r` for one feedback function and exponent.
///
/// The cache is behind a mutex; concurrent readers of the same index always
/// observe the same value since the computation is deterministic.
#[derive(Debug)]
pub struct SumTable {
    fb: FeedbackFunction,
    r: f64,
    epsilon: f64,
    tails: Mutex<HashMap<u64, f64>>,
}

impl Clone for SumTable {
    fn clone(&self) -> Self {
        Self {
            fb: self.fb.clone(),
            r: self.r,
            epsilon: self.epsilon,
            tails: Mutex::new(self.tails.lock().expect("sum cache poisoned").clone()),
        }
    }
}

impl SumTable {
    pub fn new(fb: &FeedbackFunction, r: f64) -> Result<Self> {
        Self::with_epsilon(fb, r, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(fb: &FeedbackFunction, r: f64, epsilon: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::domain(format!("sum exponent r must be positive, got {r}")));
        }
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::domain(format!("truncation epsilon must be in (0,1), got {epsilon}")));
        }
        Ok(Self {
            fb: fb.clone(),
            r,
            epsilon,
            tails: Mutex::new(HashMap::new()),
        })
    }

    pub fn feedback(&self) -> &FeedbackFunction {
        &self.fb
    }

    pub fn exponent(&self) -> f64 {
        self.r
    }

    pub fn tail_truncation_epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `f(j)^(-r)`.
    pub fn term(&self, j: u64) -> f64 {
        self.fb.inv_pow(j as f64, self.r)
    }

    fn direct(&self, n: u64, m: u64) -> f64 {
        let mut acc = Compensated::default();
        // smallest terms first
        for j in (n..m).rev() {
            acc.add(self.term(j));
        }
        acc.value()
    }

    /// `S_r(n, m)`; `S_r(n, n) = 0`.
    pub fn partial(&self, n: u64, m: Upper) -> Result<f64> {
        if n == 0 {
            return Err(Error::domain("sums start at index 1"));
        }
        match m {
            Upper::Infinity => self.tail(n),
            Upper::At(m) if m < n => Err(Error::domain(format!("empty range: m = {m} < n = {n}"))),
            Upper::At(m) if m - n <= DIRECT_LIMIT => Ok(self.direct(n, m)),
            Upper::At(m) => Ok(self.tail(n)? - self.tail(m)?),
        }
    }

    fn check_convergence(&self) -> Result<()> {
        let growth = self.r * self.fb.asymptotic_exponent();
        if growth <= 1.0 || growth.is_nan() {
            return Err(Error::Divergent(format!(
                "sum of f(j)^-{} diverges for {:?} (r * h -> {growth})",
                self.r, self.fb
            )));
        }
        Ok(())
    }

    /// `S_r(n) = S_r(n, inf)`.
    pub fn tail(&self, n: u64) -> Result<f64> {
        if n == 0 {
            return Err(Error::domain("sums start at index 1"));
        }
        if let Some(v) = self.tails.lock().expect("sum cache poisoned").get(&n) {
            return Ok(*v);
        }
        self.check_convergence()?;
        let value = self.compute_tail(n)?;
        self.tails.lock().expect("sum cache poisoned").insert(n, value);
        Ok(value)
    }

    fn compute_tail(&self, n: u64) -> Result<f64> {
        let mut cutoff = n.max(64);
        let mut head = Compensated::default();
        for j in n..cutoff {
            head.add(self.term(j));
        }
        loop {
            let (tail, tail_err) = self.euler_maclaurin_tail(cutoff)?;
            let total = head.value() + tail;
            if tail_err <= self.epsilon * total {
                return Ok(total);
            }
            if cutoff >= MAX_CUTOFF {
                return Err(Error::ToleranceUnreachable {
                    requested: self.epsilon,
                    achieved: tail_err / total,
                    context: format!("tail sum from {n} for {:?}", self.fb),
                });
            }
            let next = cutoff * 2;
            head.add(self.direct(cutoff, next));
            cutoff = next;
        }
    }

    /// Tail `sum_{j >= J} g(j)` and a bound on its error.
    fn euler_maclaurin_tail(&self, cutoff: u64) -> Result<(f64, f64)> {
        let x = cutoff as f64;
        let m = integral_m_impl(&self.fb, self.r, x, self.epsilon * 1e-2)?;
        let g = self.term(cutoff);
        let s = self.r * self.fb.h_raw(x);
        let dg = s * g / x; // -g'(J)
        // g''' ~ -s (s + 1) (s + 2) g / x^3 with h frozen at J
        let third = (s + 1.0) * (s + 2.0) * dg / (720.0 * x * x);
        let estimate = (m.value + 0.5 * g + dg / 12.0 - third).clamp(m.value, m.value + g);
        // the frozen-h third term is trusted only up to its own size
        let bound = third + m.error;
        Ok((estimate, bound))
    }
}

/// `S_r(n, m)` computed afresh.
pub fn partial_sum_s(fb: &FeedbackFunction, r: f64, n: u64, m: Upper) -> Result<f64> {
    SumTable::new(fb, r)?.partial(n, m)
}

/// `M_r(n) = int_n^inf f(x)^(-r) dx`.
pub fn integral_m(fb: &FeedbackFunction, r: f64, n: f64) -> Result<TailIntegral> {
    if !(n >= 1.0) {
        return Err(Error::domain(format!("integral lower limit must be >= 1, got {n}")));
    }
    if !(r > 0.0) {
        return Err(Error::domain(format!("integral exponent must be positive, got {r}")));
    }
    let growth = r * fb.asymptotic_exponent();
    if growth <= 1.0 || growth.is_nan() {
        return Err(Error::Divergent(format!(
            "integral of f^-{r} diverges for {fb:?} (r * h -> {growth})"
        )));
    }
    integral_m_impl(fb, r, n, 1e-14)
}

/// Quadrature in `u = ln(x / n)`, panel by panel (each panel quadruples `x`),
/// until the remainder bound from `f(y)/f(x) >= (y/x)^c` is negligible.
fn integral_m_impl(fb: &FeedbackFunction, r: f64, n: f64, rel: f64) -> Result<TailIntegral> {
    let width = 4f64.ln();
    let ln_n = n.ln();
    let integrand = |u: f64| {
        let ln_x = ln_n + u;
        (ln_x - r * fb.ln_raw(ln_x.exp())).exp()
    };
    let mut acc = Compensated::default();
    let mut quad_err = 0.0;
    let mut k = 0u32;
    loop {
        let (a, b) = (k as f64 * width, (k + 1) as f64 * width);
        let piece = integrate(integrand, a, b, Tolerance::relative((rel * 1e-1).max(1e-14)))?;
        acc.add(piece.value);
        quad_err += piece.error;
        k += 1;

        let ln_x = ln_n + b;
        let c = fb.tail_exponent_lower_bound(ln_x.exp());
        if r * c > 1.0 {
            let remainder = (ln_x - r * fb.ln_raw(ln_x.exp())).exp() / (r * c - 1.0);
            let total = acc.value();
            if remainder <= rel * total || ln_x > 690.0 {
                return Ok(TailIntegral {
                    value: total + 0.5 * remainder,
                    error: 0.5 * remainder + quad_err,
                });
            }
        } else if ln_x > 690.0 {
            return Err(Error::Divergent(format!(
                "no usable growth bound for {fb:?} up to x = e^{ln_x:.0}"
            )));
        }
    }
}

/// Leading-order form `n / ((r h(n) - 1) f(n)^r)`.
pub fn asymptotic_s(fb: &FeedbackFunction, r: f64, n: u64) -> Result<f64> {
    let x = n as f64;
    let h = fb.characteristic_exponent(x)?;
    let denom = r * h - 1.0;
    if denom <= 0.0 {
        return Err(Error::domain(format!("r * h(n) = {} <= 1 at n = {n}", r * h)));
    }
    Ok(x * fb.inv_pow(x, r) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sq() -> FeedbackFunction {
        FeedbackFunction::power(2.0).unwrap()
    }

    /// Direct summation of a million terms plus the integral remainder bracket.
    fn brute_tail(fb: &FeedbackFunction, r: f64, n: u64, terms: u64) -> f64 {
        let mut acc = Compensated::default();
        for j in (n..n + terms).rev() {
            acc.add(fb.inv_pow(j as f64, r));
        }
        let cut = (n + terms) as f64;
        // power law remainder: midpoint of [M(cut), M(cut) + f(cut)^-r]
        let p = fb.p().unwrap();
        let m = cut.powf(1.0 - r * p) / (r * p - 1.0);
        acc.value() + m + 0.5 * fb.inv_pow(cut, r)
    }

    #[test]
    fn finite_partial_sums() {
        let s = partial_sum_s(&sq(), 1.0, 2, Upper::At(4)).unwrap();
        assert!((s - 13.0 / 36.0).abs() < 1e-16);
        assert_eq!(partial_sum_s(&sq(), 1.0, 5, Upper::At(5)).unwrap(), 0.0);
        assert!(partial_sum_s(&sq(), 1.0, 5, Upper::At(4)).is_err());
    }

    #[test]
    fn infinite_sum_matches_brute_force() {
        let oracle = brute_tail(&sq(), 1.0, 10, 1_000_000);
        // frozen: pi^2/6 - sum_{j<10} j^-2
        let frozen = 0.105_166_335_681_685_75;
        assert!((oracle - frozen).abs() < 1e-13);
        let s = partial_sum_s(&sq(), 1.0, 10, Upper::Infinity).unwrap();
        assert!((s - frozen).abs() < 1e-13 * frozen, "{s}");
        let s100 = partial_sum_s(&sq(), 1.0, 100, Upper::Infinity).unwrap();
        assert!((s100 - 0.010_050_166_663_333_571).abs() < 1e-14);
    }

    #[test]
    fn power_times_log_tail() {
        let ptl = FeedbackFunction::power_times_log(2.0).unwrap();
        let s = partial_sum_s(&ptl, 1.0, 100, Upper::Infinity).unwrap();
        // frozen: compensated direct sum to 2e6 plus integral remainder
        assert!((s - 0.001_837_253_778_163_083).abs() < 1e-15, "{s}");
        let m = integral_m(&ptl, 1.0, 100.0).unwrap();
        assert!((m.value - 0.001_826_396_543_455_356).abs() < 1e-15, "{}", m.value);
        assert!((m.value - s).abs() <= 1.0 / ptl.value(100.0).unwrap());
    }

    #[test]
    fn integrals_of_power_laws() {
        let m = integral_m(&sq(), 1.0, 10.0).unwrap();
        assert!((m.value - 0.1).abs() < 1e-14);
        let m2 = integral_m(&sq(), 2.0, 10.0).unwrap();
        assert!((m2.value - 1.0 / 3000.0).abs() < 1e-17);
        let slow = FeedbackFunction::power(1.1).unwrap();
        let m3 = integral_m(&slow, 1.0, 1.0).unwrap();
        assert!((m3.value - 10.0).abs() < 1e-10, "{:?}", m3);
    }

    #[test]
    fn divergence_is_reported() {
        let lin = FeedbackFunction::power(1.0).unwrap();
        assert!(matches!(
            partial_sum_s(&lin, 1.0, 1, Upper::Infinity),
            Err(Error::Divergent(_))
        ));
        assert!(matches!(integral_m(&lin, 1.0, 2.0), Err(Error::Divergent(_))));
        // r = 2 converges even for p = 1
        assert!(partial_sum_s(&lin, 2.0, 1, Upper::Infinity).is_ok());
    }

    #[test]
    fn asymptotic_forms() {
        assert!((asymptotic_s(&sq(), 1.0, 100).unwrap() - 0.01).abs() < 1e-16);
        let cube = FeedbackFunction::power(3.0).unwrap();
        assert!((asymptotic_s(&cube, 1.0, 10).unwrap() - 0.005).abs() < 1e-16);
        let expect = 50.0 / (3.0 * 50f64.powi(4));
        assert!((asymptotic_s(&sq(), 2.0, 50).unwrap() - expect).abs() < 1e-18);
        let lin = FeedbackFunction::power(1.0).unwrap();
        assert!(asymptotic_s(&lin, 1.0, 10).is_err());
    }

    #[test]
    fn log_domain_sums_stay_finite() {
        let fb = FeedbackFunction::power_log_exponent(2.0, 2.0).unwrap();
        // ln f(j) passes the guard well before j = 10^4
        assert!(fb.ln_value(1e4).unwrap() > super::super::LOG_GUARD);
        let s = partial_sum_s(&fb, 1.0, 5000, Upper::Infinity).unwrap();
        assert!(s >= 0.0 && s.is_finite());
        let s1 = partial_sum_s(&fb, 1.0, 1, Upper::Infinity).unwrap();
        assert!(s1 > 1.0 && s1.is_finite());
    }

    #[test]
    fn cache_returns_identical_values() {
        let table = SumTable::new(&sq(), 1.0).unwrap();
        let a = table.tail(37).unwrap();
        let b = table.clone().tail(37).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
