//! Experiment harness: replicates in parallel, integer tallies, binomial
//! intervals and comparisons with the asymptotic predictors.

mod estimate;
mod experiments;
mod plan;

pub use estimate::{normal_quantile, wilson_interval, ComparisonRow, TailEstimate, DEFAULT_CONFIDENCE};
pub use experiments::{
    experiment_imbalance, experiment_losing_tail, experiment_loser_fraction, experiment_window, fitted_exponent,
    write_csv, write_json, ExperimentReport, QSpec, ReportRow, Settings, CSV_COLUMNS,
};
pub use plan::{run_plan, ExperimentPlan, PlannedExperiment};
