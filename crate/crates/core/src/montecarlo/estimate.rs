//! Binomial estimates with score intervals and censoring brackets.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Default two-sided confidence level.
pub const DEFAULT_CONFIDENCE: f64 = 0.99;

/// Two-sided normal quantile for `confidence`.
pub fn normal_quantile(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!("confidence must be in (0, 1), got {confidence}")));
    }
    Ok(Normal::standard().inverse_cdf(0.5 + 0.5 * confidence))
}

/// Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // guard rounding so that the interval always contains p
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Point estimate of an event probability from independent replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub event_label: String,
    pub n: u64,
    pub samples: u64,
    pub hits: u64,
    /// Replicates whose outcome could not be certified for this event.
    pub censored: u64,
    /// `hits / (samples - censored)`.
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `hits / samples`: every censored replicate counted as a miss.
    pub bracket_low: f64,
    /// `(hits + censored) / samples`: every censored replicate counted as a hit.
    pub bracket_high: f64,
    pub seed: u64,
}

impl TailEstimate {
    pub fn new(
        event_label: impl Into<String>,
        n: u64,
        samples: u64,
        hits: u64,
        censored: u64,
        confidence: f64,
        seed: u64,
    ) -> Result<Self> {
        if hits + censored > samples {
            return Err(Error::domain(format!(
                "{hits} hits and {censored} censored exceed {samples} samples"
            )));
        }
        let z = normal_quantile(confidence)?;
        let decided = samples - censored;
        let p_hat = if decided == 0 { 0.0 } else { hits as f64 / decided as f64 };
        let (ci_low, ci_high) = wilson_interval(hits, decided, z);
        let total = samples.max(1) as f64;
        Ok(Self {
            event_label: event_label.into(),
            n,
            samples,
            hits,
            censored,
            p_hat,
            ci_low,
            ci_high,
            bracket_low: hits as f64 / total,
            bracket_high: (hits + censored) as f64 / total,
            seed,
        })
    }

    pub fn decided(&self) -> u64 {
        self.samples - self.censored
    }

    /// Binomial standard error of `p_hat` under probability `p`.
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.decided().max(1) as f64).sqrt()
    }
}

/// An estimate next to its asymptotic prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub estimate: TailEstimate,
    pub prediction: Option<f64>,
    pub ratio: Option<f64>,
    pub z_score: Option<f64>,
}

impl ComparisonRow {
    pub fn new(estimate: TailEstimate, prediction: Option<f64>) -> Self {
        let usable = prediction.filter(|p| *p > 0.0 && *p < 1.0);
        let ratio = usable.map(|p| estimate.p_hat / p);
        let z_score = usable.map(|p| (estimate.p_hat - p) / estimate.standard_error(p));
        Self {
            estimate,
            prediction,
            ratio,
            z_score,
        }
    }
}
