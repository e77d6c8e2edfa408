//! Run configuration, read from TOML and overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::FeedbackFunction;
use crate::fraction::Fraction;
use crate::montecarlo::QSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackFamily {
    Power,
    PowerLog,
    PowerTimesLog,
}

/// A built-in feedback function by family and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSpec {
    pub kind: FeedbackFamily,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

impl FeedbackSpec {
    pub fn build(&self) -> Result<FeedbackFunction> {
        let fb = match self.kind {
            FeedbackFamily::Power => FeedbackFunction::power(self.p),
            FeedbackFamily::PowerTimesLog => FeedbackFunction::power_times_log(self.p),
            FeedbackFamily::PowerLog => {
                let a = self
                    .a
                    .ok_or_else(|| Error::config("feedback.a", "power-log feedback needs the exponent a"))?;
                FeedbackFunction::power_log_exponent(self.p, a)
            }
        };
        fb.map_err(|e| Error::config("feedback", e.to_string()))
    }
}

/// Initial counts, either explicit or as the state `[n, alpha]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Counts { x: u64, y: u64 },
    Fraction { n: u64, alpha: Fraction },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<QSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

/// Everything a run needs besides the subcommand. All fields are optional
/// so that a file and the flags can each supply part of it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<FeedbackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialState>,
    #[serde(default)]
    pub experiment: ExperimentParams,
    #[serde(default)]
    pub output: OutputConfig,
}

fn open_unit(path: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !(x > 0.0 && x < 1.0) => Err(Error::config(path, format!("must be in (0, 1), got {x}"))),
        _ => Ok(()),
    }
}

fn open_unit_fraction(path: &str, v: Option<Fraction>) -> Result<()> {
    match v {
        Some(x) if !x.is_open_unit() => Err(Error::config(path, format!("must be in (0, 1), got {x}"))),
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let path = e.span().map_or_else(String::new, |s| format!("byte {}", s.start));
            Error::config(path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        open_unit("confidence", self.confidence)?;
        open_unit("experiment.delta", self.experiment.delta)?;
        open_unit_fraction("experiment.alpha", self.experiment.alpha)?;
        open_unit_fraction("experiment.beta", self.experiment.beta)?;
        if let Some(list) = &self.experiment.n_list {
            if list.is_empty() {
                return Err(Error::config("experiment.n_list", "must not be empty"));
            }
            if list.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config("experiment.n_list", "must be strictly increasing"));
            }
        }
        if self.experiment.samples == Some(0) {
            return Err(Error::config("experiment.samples", "must be at least 1"));
        }
        if let Some(InitialState::Counts { x, y }) = self.initial {
            if x == 0 || y == 0 {
                return Err(Error::config("initial", "both counts must be positive"));
            }
        }
        if let Some(InitialState::Fraction { alpha, .. }) = self.initial {
            open_unit_fraction("initial.alpha", Some(alpha))?;
        }
        Ok(())
    }
}
