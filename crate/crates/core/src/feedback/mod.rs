//! Feedback functions `f` and their characteristic exponents
//! `h(x) = x * (ln f)'(x)`.
//!
//! Three parametric families are built in, all normalised so that
//! `f(1) = 1`:
//!
//! | family              | `f(x)`                 | `h(x)`                                  |
//! |---------------------|------------------------|-----------------------------------------|
//! | `power`             | `x^p`                  | `p`                                     |
//! | `power-log`         | `x^(p ln^a x)`         | `p (a + 1) ln^a x`                      |
//! | `power-times-log`   | `x^p ln(x + e - 1)`    | `p + x / ((x + e - 1) ln(x + e - 1))`   |
//!
//! Custom functions supply `ln f` (or `f`) together with `h`; when `h` is
//! omitted a central finite difference is used and reported as such.

mod sums;
mod validity;

use std::fmt;
use std::sync::Arc;

pub use sums::{asymptotic_s, integral_m, partial_sum_s, Compensated, SumTable, TailIntegral, Upper};
pub use validity::{check_validity, ValidityReport, SLOW_VARIATION_EPSILONS};

use crate::error::{Error, Result};

/// Above this value of `ln f(x)` everything is computed in the log domain.
pub const LOG_GUARD: f64 = 600.0;

/// Relative step of the finite-difference fallback for `h`.
pub const FD_STEP: f64 = 1e-6;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomFeedback {
    name: String,
    ln_f: RealFn,
    h: Option<RealFn>,
}

#[derive(Clone)]
pub enum FeedbackKind {
    Power { p: f64 },
    PowerLogExponent { p: f64, a: f64 },
    PowerTimesLog { p: f64 },
    Custom(CustomFeedback),
}

/// An increasing positive function driving the reinforcement.
///
/// Immutable once built; cloning is cheap (custom closures are shared).
#[derive(Clone)]
pub struct FeedbackFunction {
    kind: FeedbackKind,
}

impl fmt::Debug for FeedbackFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            FeedbackKind::Power { p } => write!(f, "power(p={p})"),
            FeedbackKind::PowerLogExponent { p, a } => write!(f, "power-log(p={p}, a={a})"),
            FeedbackKind::PowerTimesLog { p } => write!(f, "power-times-log(p={p})"),
            FeedbackKind::Custom(c) => write!(f, "custom({})", c.name),
        }
    }
}

fn check_param(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("parameter {name} must be finite and positive, got {v}")))
    }
}

impl FeedbackFunction {
    pub fn power(p: f64) -> Result<Self> {
        check_param("p", p)?;
        Ok(Self {
            kind: FeedbackKind::Power { p },
        })
    }

    pub fn power_log_exponent(p: f64, a: f64) -> Result<Self> {
        check_param("p", p)?;
        check_param("a", a)?;
        Ok(Self {
            kind: FeedbackKind::PowerLogExponent { p, a },
        })
    }

    pub fn power_times_log(p: f64) -> Result<Self> {
        check_param("p", p)?;
        Ok(Self {
            kind: FeedbackKind::PowerTimesLog { p },
        })
    }

    /// Custom feedback from `f` itself. `f` must be positive on `[1, inf)`.
    pub fn custom<F>(name: impl Into<String>, f: F, h: Option<RealFn>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::custom_log(name, move |x| f(x).ln(), h)
    }

    /// Custom feedback from `ln f`, which keeps fast-growing functions finite.
    pub fn custom_log<F>(name: impl Into<String>, ln_f: F, h: Option<RealFn>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            kind: FeedbackKind::Custom(CustomFeedback {
                name: name.into(),
                ln_f: Arc::new(ln_f),
                h,
            }),
        }
    }

    pub fn kind(&self) -> &FeedbackKind {
        &self.kind
    }

    /// Short family name used in reports and CSV output.
    pub fn label(&self) -> String {
        match &self.kind {
            FeedbackKind::Power { .. } => "power".into(),
            FeedbackKind::PowerLogExponent { .. } => "power-log".into(),
            FeedbackKind::PowerTimesLog { .. } => "power-times-log".into(),
            FeedbackKind::Custom(c) => format!("custom:{}", c.name),
        }
    }

    pub fn p(&self) -> Option<f64> {
        match self.kind {
            FeedbackKind::Power { p }
            | FeedbackKind::PowerLogExponent { p, .. }
            | FeedbackKind::PowerTimesLog { p } => Some(p),
            FeedbackKind::Custom(_) => None,
        }
    }

    pub fn a(&self) -> Option<f64> {
        match self.kind {
            FeedbackKind::PowerLogExponent { a, .. } => Some(a),
            _ => None,
        }
    }

    /// Stable identifier for caches keyed on the function.
    pub fn cache_key(&self) -> String {
        format!("{self:?}")
    }

    /// `Some(valid)` for the built-in families, `None` for custom functions,
    /// whose validity can only be assessed heuristically.
    pub fn builtin_validity(&self) -> Option<bool> {
        match self.kind {
            FeedbackKind::Power { p }
            | FeedbackKind::PowerLogExponent { p, .. }
            | FeedbackKind::PowerTimesLog { p } => Some(p > 1.0),
            FeedbackKind::Custom(_) => None,
        }
    }

    pub fn has_numerical_exponent(&self) -> bool {
        matches!(&self.kind, FeedbackKind::Custom(c) if c.h.is_none())
    }

    fn check_domain(x: f64) -> Result<()> {
        if x >= 1.0 && x.is_finite() {
            Ok(())
        } else {
            Err(Error::domain(format!("feedback argument must be a finite number >= 1, got {x}")))
        }
    }

    /// `ln f(x)` without the domain check.
    pub(crate) fn ln_raw(&self, x: f64) -> f64 {
        match &self.kind {
            FeedbackKind::Power { p } => p * x.ln(),
            FeedbackKind::PowerLogExponent { p, a } => {
                let l = x.ln();
                p * l.powf(*a) * l
            }
            FeedbackKind::PowerTimesLog { p } => {
                p * x.ln() + (x + std::f64::consts::E - 1.0).ln().ln()
            }
            FeedbackKind::Custom(c) => (c.ln_f)(x),
        }
    }

    pub fn ln_value(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.ln_raw(x))
    }

    /// `f(x)`. Beyond [`LOG_GUARD`] the value is `exp(ln f(x))`, which is
    /// `+inf` once it leaves the double range; use [`Self::ln_value`] or
    /// [`Self::inv_pow`] there.
    pub fn value(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.value_raw(x))
    }

    pub(crate) fn value_raw(&self, x: f64) -> f64 {
        match &self.kind {
            FeedbackKind::Power { p } => {
                if p.fract() == 0.0 && *p <= 64.0 {
                    x.powi(*p as i32)
                } else {
                    x.powf(*p)
                }
            }
            FeedbackKind::PowerTimesLog { p } => {
                let ln = self.ln_raw(x);
                if ln > LOG_GUARD {
                    ln.exp()
                } else {
                    x.powf(*p) * (x + std::f64::consts::E - 1.0).ln()
                }
            }
            _ => self.ln_raw(x).exp(),
        }
    }

    /// `f(x)^(-r)`, underflowing gracefully through the log domain.
    pub fn inv_pow(&self, x: f64, r: f64) -> f64 {
        let ln = self.ln_raw(x);
        if ln > LOG_GUARD {
            (-r * ln).exp()
        } else if r == 1.0 {
            1.0 / self.value_raw(x)
        } else if r == 2.0 {
            let v = self.value_raw(x);
            1.0 / (v * v)
        } else {
            self.value_raw(x).powf(-r)
        }
    }

    /// Characteristic exponent `h(x) = x (ln f)'(x)`.
    pub fn characteristic_exponent(&self, x: f64) -> Result<f64> {
        Self::check_domain(x)?;
        Ok(self.h_raw(x))
    }

    pub(crate) fn h_raw(&self, x: f64) -> f64 {
        match &self.kind {
            FeedbackKind::Power { p } => *p,
            FeedbackKind::PowerLogExponent { p, a } => p * (a + 1.0) * x.ln().powf(*a),
            FeedbackKind::PowerTimesLog { p } => {
                let s = x + std::f64::consts::E - 1.0;
                p + x / (s * s.ln())
            }
            FeedbackKind::Custom(c) => match &c.h {
                Some(h) => h(x),
                None => self.finite_difference_h(x),
            },
        }
    }

    fn finite_difference_h(&self, x: f64) -> f64 {
        let up = x * (1.0 + FD_STEP);
        let down = x * (1.0 - FD_STEP);
        if down < 1.0 {
            (self.ln_raw(up) - self.ln_raw(x)) / FD_STEP
        } else {
            (self.ln_raw(up) - self.ln_raw(down)) / (2.0 * FD_STEP)
        }
    }

    /// A lower bound on `inf_{y >= x} h(y)`: exact for the built-in families,
    /// sampled over `[x, x^4]` for custom functions.
    pub fn tail_exponent_lower_bound(&self, x: f64) -> f64 {
        match &self.kind {
            FeedbackKind::Power { p } => *p,
            FeedbackKind::PowerTimesLog { p } => *p,
            FeedbackKind::PowerLogExponent { .. } => self.h_raw(x),
            FeedbackKind::Custom(_) => {
                let lx = x.max(1.0).ln().max(1e-3);
                (0..=48)
                    .map(|k| self.h_raw((lx * (1.0 + 3.0 * k as f64 / 48.0)).exp()))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// Limit of `h` at infinity, used for convergence checks.
    pub(crate) fn asymptotic_exponent(&self) -> f64 {
        match &self.kind {
            FeedbackKind::Power { p } | FeedbackKind::PowerTimesLog { p } => *p,
            FeedbackKind::PowerLogExponent { .. } => f64::INFINITY,
            FeedbackKind::Custom(_) => self.h_raw(1e12),
        }
    }
}
