//! Batches of experiments described in TOML.

use serde::{Deserialize, Serialize};

use super::experiments::{
    experiment_imbalance, experiment_losing_tail, experiment_loser_fraction, experiment_window, ExperimentReport,
    QSpec, Settings,
};
use crate::config::FeedbackSpec;
use crate::error::{Error, Result};
use crate::fraction::Fraction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    TailLoser,
    Imbalance,
    LoserFraction,
    Window,
}

/// One experiment; per-experiment run settings override the plan's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannedExperiment {
    pub kind: ExperimentKind,
    pub feedback: FeedbackSpec,
    #[serde(default)]
    pub x0: Option<u64>,
    #[serde(default)]
    pub y0: Option<u64>,
    #[serde(default)]
    pub n: Vec<u64>,
    #[serde(default)]
    pub alpha: Option<Fraction>,
    #[serde(default)]
    pub beta: Option<Fraction>,
    #[serde(default)]
    pub q: Option<QSpec>,
    #[serde(default)]
    pub samples: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: u64,
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default)]
    pub cap: Option<u64>,
    #[serde(default)]
    pub confidence: Option<f64>,
    #[serde(default, rename = "experiment")]
    pub experiments: Vec<PlannedExperiment>,
}

fn default_samples() -> u64 {
    10_000
}

impl ExperimentPlan {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("plan", e.message().to_string()))
    }
}

fn field<T>(value: Option<T>, path: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(path, "missing"))
}

fn run_one(exp: &PlannedExperiment, plan: &ExperimentPlan, workers: usize) -> Result<ExperimentReport> {
    let fb = exp.feedback.build()?;
    let mut settings = Settings::new(exp.samples.unwrap_or(plan.samples), exp.seed.unwrap_or(plan.seed));
    settings.workers = workers;
    if let Some(d) = plan.delta {
        settings.delta = d;
    }
    if let Some(c) = plan.cap {
        settings.cap = c;
    }
    if let Some(c) = plan.confidence {
        settings.confidence = c;
    }
    let (x, y) = (exp.x0.unwrap_or(1), exp.y0.unwrap_or(1));
    match exp.kind {
        ExperimentKind::TailLoser => experiment_losing_tail(&fb, x, y, &exp.n, &settings),
        ExperimentKind::Imbalance => {
            let [n] = exp.n[..] else {
                return Err(Error::config("n", "imbalance takes exactly one n"));
            };
            experiment_imbalance(&fb, n, field(exp.alpha, "alpha")?, field(exp.beta, "beta")?, &settings)
        }
        ExperimentKind::LoserFraction => {
            experiment_loser_fraction(&fb, x, y, field(exp.alpha, "alpha")?, &exp.n, &settings)
        }
        ExperimentKind::Window => experiment_window(&fb, x, y, field(exp.q, "q")?, &exp.n, &settings),
    }
}

/// Runs every experiment in order; the output depends only on the plan.
pub fn run_plan(plan: &ExperimentPlan, workers: usize) -> Result<ExperimentReport> {
    let mut report = ExperimentReport::default();
    for (i, exp) in plan.experiments.iter().enumerate() {
        let part = run_one(exp, plan, workers).map_err(|e| match e {
            Error::Config { path, message } => Error::config(format!("experiment[{i}].{path}"), message),
            other => other,
        })?;
        report.extend(part);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan_is_empty_report() {
        let plan = ExperimentPlan::from_toml("seed = 1").unwrap();
        assert!(run_plan(&plan, 1).unwrap().rows.is_empty());
    }

    #[test]
    fn invalid_feedback_names_the_field() {
        let plan = ExperimentPlan::from_toml(
            r#"
            seed = 1
            samples = 10
            [[experiment]]
            kind = "tail-loser"
            feedback = { kind = "power", p = 1.0 }
            n = [5]
            "#,
        )
        .unwrap();
        let err = run_plan(&plan, 1).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("experiment[0].feedback"), "{text}");
        assert!(text.contains("analytics unavailable"), "{text}");
    }

    #[test]
    fn plan_runs_each_kind() {
        let plan = ExperimentPlan::from_toml(
            r#"
            seed = 3
            samples = 200
            [[experiment]]
            kind = "tail-loser"
            feedback = { kind = "power", p = 2.0 }
            n = [1, 4]
            [[experiment]]
            kind = "imbalance"
            feedback = { kind = "power", p = 2.0 }
            n = [10]
            alpha = 0.3
            beta = 0.4
            [[experiment]]
            kind = "window"
            feedback = { kind = "power", p = 2.0 }
            q = "const:2"
            n = [10, 20]
            "#,
        )
        .unwrap();
        let r = run_plan(&plan, 2).unwrap();
        let kinds: Vec<&str> = r.rows.iter().map(|r| r.experiment.as_str()).collect();
        assert_eq!(kinds, ["tail-loser", "tail-loser", "imbalance", "window", "window"]);
    }
}
