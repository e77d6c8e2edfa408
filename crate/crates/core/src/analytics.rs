//! Limiting constants and asymptotic predictors.
//!
//! For `x >= y` let `Delta_n = A_1(n) - A_2(n)`. Its characteristic function
//! is
//!
//! ```text
//! psi_n(t) = prod_{l=y}^{x-1} (1 + i t / f(l))^-1 * prod_{j=x}^{n-1} (1 + t^2 / f(j)^2)^-1
//! ```
//!
//! and `c_n = (1/pi) int psi_n`, `c = lim c_n`, is the density of `Delta_inf`
//! at zero times two. `c` sets the scale of every tail law of the losing bin.

use std::collections::HashMap;
use std::sync::Mutex;

use num_complex::Complex64;
use serde::Serialize;

use crate::embedding::{ClockPair, RateTable};
use crate::discrete::UrnState;
use crate::error::{Error, Result};
use crate::feedback::{FeedbackFunction, SumTable, Upper};
use crate::fraction::Fraction;
use crate::quadrature::{integrate, Tolerance};
use crate::stream::RandomStream;

/// Smallest relative tolerance accepted for `c`.
pub const MIN_REL_TOL: f64 = 1e-10;

/// Number of second-product factors used for the integrand's tail bound.
pub const TAIL_FACTORS: u64 = 4;

/// Exponent `gamma` in the window precheck `S_1^2 >= n^gamma S_2`.
pub const WINDOW_GAMMA: f64 = 0.1;

const MAX_FIRST_FACTORS: u64 = 8;
const MAX_TRUNCATION: u64 = 1 << 24;
const QUAD_PANELS: usize = 1 << 14;

fn ordered(x: u64, y: u64) -> Result<(u64, u64)> {
    if x == 0 || y == 0 {
        return Err(Error::domain("initial counts must be positive"));
    }
    Ok((x.max(y), x.min(y)))
}

/// `psi_n(t)` for a finite `n`; `y <= x <= n` is required.
pub fn psi(fb: &FeedbackFunction, x: u64, y: u64, n: u64, t: f64) -> Result<Complex64> {
    CharacteristicProduct::new(fb, x, y, n)?.eval(t)
}

/// The product `psi_n` with its factors' rates tabulated.
#[derive(Debug, Clone)]
pub struct CharacteristicProduct {
    pub x: u64,
    pub y: u64,
    pub n: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl CharacteristicProduct {
    pub fn new(fb: &FeedbackFunction, x: u64, y: u64, n: u64) -> Result<Self> {
        if !(y <= x && x <= n && y >= 1) {
            return Err(Error::domain(format!("psi needs 1 <= y <= x <= n, got ({x}, {y}), n = {n}")));
        }
        Ok(Self {
            x,
            y,
            n,
            first: (y..x).map(|l| fb.inv_pow(l as f64, 1.0)).collect(),
            second: (x..n).map(|j| fb.inv_pow(j as f64, 2.0)).collect(),
        })
    }

    /// Polar accumulation of the first product: `(modulus, argument)`.
    fn first_polar(&self, t: f64) -> (f64, f64) {
        let mut log_mod = 0.0;
        let mut arg = 0.0;
        for &w in &self.first {
            let u = t * w;
            log_mod -= 0.5 * u.mul_add(u, 1.0).ln();
            arg -= u.atan();
        }
        (log_mod.exp(), arg)
    }

    pub fn eval(&self, t: f64) -> Result<Complex64> {
        let (modulus, arg) = self.first_polar(t);
        let second = real_product(&self.second, t);
        Ok(Complex64::from_polar(modulus * second, arg))
    }
}

/// `prod (1 + t^2 w_j)^-1`, renormalising to stay in range.
fn real_product(weights: &[f64], t: f64) -> f64 {
    let t2 = t * t;
    let mut prod = 1.0f64;
    let mut log_acc = 0.0;
    for &w in weights {
        prod *= t2.mul_add(w, 1.0);
        if prod > 1e200 {
            log_acc += prod.ln();
            prod = 1.0;
        }
    }
    (-(log_acc + prod.ln())).exp()
}

/// The limit constant with its error budget.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticConstant {
    pub feedback: String,
    pub x: u64,
    pub y: u64,
    /// `None` for the limit `c`, `Some(n)` for `c_n`.
    pub n: Option<u64>,
    pub c: f64,
    pub error_bound: f64,
    pub quadrature_error: f64,
    pub truncation_error: f64,
    pub tail_error: f64,
    /// Largest product cut-off used by any evaluation of the integrand.
    pub truncation_index: u64,
    pub integration_limit: f64,
    /// `int_{-T}^{T} Im psi`, zero in exact arithmetic.
    pub imaginary_residual: f64,
    pub rel_tol: f64,
    pub evaluations: usize,
}

/// Cut-offs `J_k` with `S_2(J_k)`, grown on demand, plus tabulated `f(j)^-2`.
struct Truncation {
    x: u64,
    cutoffs: Vec<(u64, f64)>,
    weights: Vec<f64>,
    fb: FeedbackFunction,
    budget: f64,
    largest: u64,
}

impl Truncation {
    fn new(fb: &FeedbackFunction, x: u64, rel_tol: f64) -> Result<Self> {
        let s2 = SumTable::new(fb, 2.0)?;
        let mut cutoffs = Vec::new();
        let mut j = x.max(16);
        while j <= MAX_TRUNCATION {
            cutoffs.push((j, s2.tail(j)?));
            j *= 2;
        }
        Ok(Self {
            x,
            cutoffs,
            weights: Vec::new(),
            fb: fb.clone(),
            budget: (0.5 * rel_tol).ln_1p(),
            largest: 0,
        })
    }

    /// Cut-off for `t` and the remainder exponent `t^2 S_2(J)`.
    fn pick(&mut self, t: f64) -> Option<(u64, f64)> {
        let t2 = t * t;
        let (j, s2) = *self.cutoffs.iter().find(|(_, s2)| t2 * s2 <= self.budget)?;
        let need = (j - self.x) as usize;
        while self.weights.len() < need {
            let idx = self.x + self.weights.len() as u64;
            self.weights.push(self.fb.inv_pow(idx as f64, 2.0));
        }
        self.largest = self.largest.max(j);
        Some((j, t2 * s2))
    }
}

/// Limit `c = (1/pi) int psi_inf`.
pub fn limit_constant_c(fb: &FeedbackFunction, x: u64, y: u64, rel_tol: f64) -> Result<AsymptoticConstant> {
    compute_constant(fb, x, y, None, rel_tol)
}

/// `c_n = (1/pi) int psi_n` for finite `n`.
pub fn constant_cn(fb: &FeedbackFunction, x: u64, y: u64, n: u64, rel_tol: f64) -> Result<AsymptoticConstant> {
    compute_constant(fb, x, y, Some(n), rel_tol)
}

fn compute_constant(
    fb: &FeedbackFunction,
    x0: u64,
    y0: u64,
    n: Option<u64>,
    rel_tol: f64,
) -> Result<AsymptoticConstant> {
    if !(MIN_REL_TOL..1.0).contains(&rel_tol) {
        return Err(Error::domain(format!("rel_tol must be in [{MIN_REL_TOL:e}, 1), got {rel_tol}")));
    }
    let (x, y) = ordered(x0, y0)?;
    if n.is_none() && fb.builtin_validity() == Some(false) {
        return Err(Error::Divergent(format!("{fb:?} is not a valid feedback function")));
    }
    let finite_n = n.unwrap_or(x);
    if finite_n < x {
        return Err(Error::domain(format!("n = {finite_n} must be at least max(x, y) = {x}")));
    }
    let first = CharacteristicProduct::new(fb, x, y, x)?;

    // tail bound |psi(t)| <= K t^(-2E) from a few leading factors
    let second_factors = match n {
        Some(n) => TAIL_FACTORS.min(n - x),
        None => TAIL_FACTORS,
    };
    let first_factors = MAX_FIRST_FACTORS.min(x - y);
    let mut ln_k = 0.0;
    for l in y..y + first_factors {
        ln_k += fb.ln_value(l as f64)?;
    }
    for j in x..x + second_factors {
        ln_k += 2.0 * fb.ln_value(j as f64)?;
    }
    let two_e = (first_factors + 2 * second_factors) as f64;
    if two_e <= 1.0 {
        return Err(Error::Divergent(format!(
            "psi does not decay for ({x}, {y}) with n = {finite_n}: the density is singular"
        )));
    }
    let tail_at = |limit: f64| (2.0 / std::f64::consts::PI) * (ln_k + (1.0 - two_e) * limit.ln()).exp() / (two_e - 1.0);
    let limit_for = |target: f64| -> f64 {
        let ln_t = (ln_k - (target * std::f64::consts::PI / 2.0 * (two_e - 1.0)).ln()) / (two_e - 1.0);
        ln_t.exp().max(1.0)
    };

    let mut trunc = match n {
        None => Some(Truncation::new(fb, x, rel_tol)?),
        Some(_) => None,
    };
    let fixed_weights: Vec<f64> = match n {
        Some(n) => (x..n).map(|j| fb.inv_pow(j as f64, 2.0)).collect(),
        None => Vec::new(),
    };
    let mut failure = None;
    // returns (Re psi midpoint, half-width of truncation bracket)
    let mut integrand = |t: f64| -> (f64, f64) {
        let (modulus, arg) = first.first_polar(t);
        let re_first = modulus * arg.cos();
        match trunc.as_mut() {
            None => (re_first * real_product(&fixed_weights, t), 0.0),
            Some(tr) => match tr.pick(t) {
                Some((j, u)) => {
                    let p = re_first * real_product(&tr.weights[..(j - x) as usize], t);
                    let shrink = (-u).exp();
                    (p * 0.5 * (1.0 + shrink), p.abs() * 0.5 * (1.0 - shrink))
                }
                None => {
                    failure = Some(t);
                    (f64::NAN, f64::NAN)
                }
            },
        }
    };

    // rough pass to fix the scale of the absolute targets
    let rough_limit = limit_for(1e-4);
    let rough = integrate(|t| integrand(t).0, 0.0, rough_limit, Tolerance::relative(1e-4))?;
    let scale = (2.0 / std::f64::consts::PI * rough.value).abs().max(f64::MIN_POSITIVE);

    let limit = limit_for(0.25 * rel_tol * scale);
    let tol = Tolerance {
        abs: 0.25 * rel_tol * scale * std::f64::consts::PI / 2.0,
        rel: 0.0,
        max_intervals: QUAD_PANELS,
    };
    let main = integrate(|t| integrand(t).0, 0.0, limit, tol)?;
    let trunc_integral = if n.is_none() {
        integrate(|t| integrand(t).1, 0.0, limit, Tolerance { abs: tol.abs, rel: 0.1, max_intervals: QUAD_PANELS })?
    } else {
        crate::quadrature::Integral { value: 0.0, error: 0.0, evaluations: 0, intervals: 0 }
    };
    if let Some(t) = failure {
        return Err(Error::ToleranceUnreachable {
            requested: rel_tol,
            achieved: f64::NAN,
            context: format!("product truncation beyond {MAX_TRUNCATION} needed at t = {t}"),
        });
    }
    let imaginary_residual = if x > y {
        // the second product is real and even, so its truncation does not
        // affect the symmetry being checked
        let weights = match trunc.as_ref() {
            Some(tr) => &tr.weights[..(tr.largest - x) as usize],
            None => &fixed_weights[..],
        };
        let im = |t: f64| {
            let (modulus, arg) = first.first_polar(t);
            modulus * arg.sin() * real_product(weights, t)
        };
        let r = integrate(im, -limit, limit, Tolerance { abs: tol.abs, rel: 0.0, max_intervals: QUAD_PANELS })?;
        r.value / std::f64::consts::PI
    } else {
        0.0
    };

    let k = 2.0 / std::f64::consts::PI;
    let c = k * main.value;
    let quadrature_error = k * main.error;
    let truncation_error = k * (trunc_integral.value + trunc_integral.error);
    let tail_error = tail_at(limit);
    let error_bound = quadrature_error + truncation_error + tail_error;
    if error_bound > rel_tol * c.abs() {
        return Err(Error::ToleranceUnreachable {
            requested: rel_tol,
            achieved: error_bound / c.abs(),
            context: format!("constant for ({x}, {y})"),
        });
    }
    Ok(AsymptoticConstant {
        feedback: fb.label(),
        x,
        y,
        n,
        c,
        error_bound,
        quadrature_error,
        truncation_error,
        tail_error,
        truncation_index: trunc.as_ref().map_or(finite_n, |t| t.largest),
        integration_limit: limit,
        imaginary_residual,
        rel_tol,
        evaluations: rough.evaluations + main.evaluations + trunc_integral.evaluations,
    })
}

/// Constants keyed by `(feedback, x, y, rel_tol)`; concurrent fills are idempotent.
#[derive(Debug, Default)]
pub struct ConstantCache {
    entries: Mutex<HashMap<String, AsymptoticConstant>>,
}

impl ConstantCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, fb: &FeedbackFunction, x: u64, y: u64, rel_tol: f64) -> Result<AsymptoticConstant> {
        let (x, y) = ordered(x, y)?;
        let key = format!("{}|{x}|{y}|{rel_tol:e}", fb.cache_key());
        if let Some(c) = self.entries.lock().expect("constant cache poisoned").get(&key) {
            return Ok(c.clone());
        }
        let value = limit_constant_c(fb, x, y, rel_tol)?;
        self.entries
            .lock()
            .expect("constant cache poisoned")
            .entry(key)
            .or_insert(value.clone());
        Ok(value)
    }
}

/// Monte Carlo estimate of `Pr[|Delta_n| <= eps] / eps` for each `eps`.
pub fn density_slope_cn(
    fb: &FeedbackFunction,
    x: u64,
    y: u64,
    n: u64,
    epsilons: &[f64],
    samples: u64,
    stream: RandomStream,
) -> Result<Vec<f64>> {
    let (x, y) = ordered(x, y)?;
    if n < x {
        return Err(Error::domain(format!("n = {n} must be at least {x}")));
    }
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::domain("epsilons must be positive"));
    }
    let rates = RateTable::new(fb, n + 1);
    let state = UrnState::two(x, y)?;
    let mut hits = vec![0u64; epsilons.len()];
    for r in 0..samples {
        let mut pair = ClockPair::new(&state, &stream.replicate(r))?;
        let d = pair.difference(n, &rates).abs();
        for (h, e) in hits.iter_mut().zip(epsilons) {
            if d <= *e {
                *h += 1;
            }
        }
    }
    Ok(hits
        .iter()
        .zip(epsilons)
        .map(|(h, e)| *h as f64 / samples as f64 / e)
        .collect())
}

/// Result of a window prediction with its hypothesis precheck.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowPrediction {
    pub value: f64,
    pub lower: u64,
    pub upper: u64,
    /// Set when `S_1^2 < n^gamma S_2` on the window.
    pub warning: Option<String>,
}

/// Predictors built on one constant `c` and the sums of `f`.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub constant: AsymptoticConstant,
    s1: SumTable,
    s2: SumTable,
}

impl Predictor {
    pub fn new(fb: &FeedbackFunction, x: u64, y: u64, rel_tol: f64) -> Result<Self> {
        Self::from_constant(fb, limit_constant_c(fb, x, y, rel_tol)?)
    }

    pub fn cached(cache: &ConstantCache, fb: &FeedbackFunction, x: u64, y: u64, rel_tol: f64) -> Result<Self> {
        Self::from_constant(fb, cache.get(fb, x, y, rel_tol)?)
    }

    pub fn from_constant(fb: &FeedbackFunction, constant: AsymptoticConstant) -> Result<Self> {
        Ok(Self {
            constant,
            s1: SumTable::new(fb, 1.0)?,
            s2: SumTable::new(fb, 2.0)?,
        })
    }

    pub fn c(&self) -> f64 {
        self.constant.c
    }

    /// `Pr[L > n] ~ c S_1(n)`.
    pub fn tail_l(&self, n: u64) -> Result<f64> {
        Ok(self.c() * self.s1.tail(n.max(1))?)
    }

    /// `Pr[LoserHasMoreThan(alpha, n)] ~ c S_1(ceil(alpha n), n - ceil(alpha n))`.
    pub fn loser_fraction(&self, alpha: Fraction, n: u64) -> Result<f64> {
        if !alpha.is_below_half() {
            return Err(Error::domain(format!("alpha must be in (0, 1/2), got {alpha}")));
        }
        let a = alpha.ceil_mul(n);
        Ok(self.window_sum(a, n.saturating_sub(a))?.0 * self.c())
    }

    /// `Pr[|I_1 - I_2| <= q at total n] ~ c S_1(ceil((n-q)/2), floor((n+q)/2))`.
    pub fn window(&self, q: u64, n: u64) -> Result<WindowPrediction> {
        if q >= n {
            return Err(Error::domain(format!("window q = {q} must be below n = {n}")));
        }
        let lower = (n - q).div_ceil(2);
        let upper = (n + q) / 2;
        let (s1, s2) = self.window_sum(lower, upper)?;
        let warning = (s1 > 0.0 && s1 * s1 < (n as f64).powf(WINDOW_GAMMA) * s2).then(|| {
            format!(
                "window [{lower}, {upper}) at n = {n}: S1^2 = {:.3e} < n^{WINDOW_GAMMA} S2 = {:.3e}",
                s1 * s1,
                (n as f64).powf(WINDOW_GAMMA) * s2
            )
        });
        Ok(WindowPrediction {
            value: self.c() * s1,
            lower,
            upper,
            warning,
        })
    }

    fn window_sum(&self, lower: u64, upper: u64) -> Result<(f64, f64)> {
        if lower == 0 || upper <= lower {
            return Ok((0.0, 0.0));
        }
        Ok((
            self.s1.partial(lower, Upper::At(upper))?,
            self.s2.partial(lower, Upper::At(upper))?,
        ))
    }
}

/// `c S_1(n)`.
pub fn predict_tail_l(fb: &FeedbackFunction, x: u64, y: u64, n: u64) -> Result<f64> {
    Predictor::new(fb, x, y, 1e-8)?.tail_l(n)
}

/// `c S_1(ceil(alpha n), n - ceil(alpha n))`.
pub fn predict_loser_fraction(fb: &FeedbackFunction, x: u64, y: u64, alpha: Fraction, n: u64) -> Result<f64> {
    Predictor::new(fb, x, y, 1e-8)?.loser_fraction(alpha, n)
}

/// `c S_1(ceil((n-q)/2), floor((n+q)/2))` with the hypothesis precheck.
pub fn predict_window(fb: &FeedbackFunction, x: u64, y: u64, q: u64, n: u64) -> Result<WindowPrediction> {
    Predictor::new(fb, x, y, 1e-8)?.window(q, n)
}
