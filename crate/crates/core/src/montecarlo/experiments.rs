//! One experiment per tail law, each comparing Monte Carlo frequencies with
//! the corresponding asymptotic prediction.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::estimate::{ComparisonRow, TailEstimate, DEFAULT_CONFIDENCE};
use crate::analytics::Predictor;
use crate::discrete::UrnState;
use crate::embedding::{ClockPair, ImbalanceOutcome, RaceContext, RateTable, DEFAULT_CAP, DEFAULT_DELTA};
use crate::error::{Error, Result};
use crate::feedback::FeedbackFunction;
use crate::fraction::Fraction;
use crate::stream::{RandomStream, Replicate};

/// Run parameters shared by all experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub samples: u64,
    pub delta: f64,
    pub cap: u64,
    pub confidence: f64,
    pub seed: u64,
    pub workers: usize,
    /// Relative tolerance for the constant `c`.
    pub rel_tol: f64,
}

impl Settings {
    pub fn new(samples: u64, seed: u64) -> Self {
        Self {
            samples,
            delta: DEFAULT_DELTA,
            cap: DEFAULT_CAP,
            confidence: DEFAULT_CONFIDENCE,
            seed,
            workers: 1,
            rel_tol: 1e-8,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("samples", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("delta", "must be in (0, 1)"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::config("confidence", "must be in (0, 1)"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        Ok(())
    }
}

/// Window half-width rule `q(n)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QSpec {
    /// `q(n) = k`.
    Constant(u64),
    /// `q(n) = n - 2 ceil(alpha n)`: the LoserHasMoreThan window.
    Alpha(Fraction),
    /// `q(n) = floor(lambda sqrt(n))`.
    Sqrt(f64),
}

impl QSpec {
    pub fn q(&self, n: u64) -> Result<u64> {
        let q = match self {
            QSpec::Constant(k) => *k,
            QSpec::Alpha(alpha) => {
                let a = alpha.ceil_mul(n);
                if 2 * a > n {
                    return Err(Error::config("q", format!("ceil({alpha} * {n}) exceeds n / 2")));
                }
                n - 2 * a
            }
            QSpec::Sqrt(lambda) => (lambda * (n as f64).sqrt()).floor() as u64,
        };
        if q >= n {
            return Err(Error::config("q", format!("q({n}) = {q} must be below n")));
        }
        Ok(q)
    }
}

impl fmt::Display for QSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QSpec::Constant(k) => write!(f, "const:{k}"),
            QSpec::Alpha(a) => write!(f, "alpha:{a}"),
            QSpec::Sqrt(l) => write!(f, "sqrt:{l}"),
        }
    }
}

impl FromStr for QSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("q", format!("expected const:K, alpha:A or sqrt:L, got `{s}`"));
        let (kind, value) = s.split_once(':').ok_or_else(bad)?;
        match kind.trim() {
            "const" => value.trim().parse().map(QSpec::Constant).map_err(|_| bad()),
            "alpha" => {
                let a: Fraction = value.trim().parse().map_err(|_| bad())?;
                if !a.is_below_half() {
                    return Err(Error::config("q", "alpha must be in (0, 1/2)"));
                }
                Ok(QSpec::Alpha(a))
            }
            "sqrt" => match value.trim().parse::<f64>() {
                Ok(l) if l.is_finite() && l >= 0.0 => Ok(QSpec::Sqrt(l)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

impl Serialize for QSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for QSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One output line; field names are the CSV columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub feedback: String,
    pub p: Option<f64>,
    pub x0: u64,
    pub y0: u64,
    pub param_alpha: Option<f64>,
    pub param_beta: Option<f64>,
    pub param_q: Option<u64>,
    pub n: u64,
    pub samples: u64,
    pub hits: u64,
    pub censored: u64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub prediction: Option<f64>,
    pub ratio: Option<f64>,
    pub z_score: Option<f64>,
    pub seed: u64,
}

/// Column order of [`ReportRow`].
pub const CSV_COLUMNS: [&str; 19] = [
    "experiment", "feedback", "p", "x0", "y0", "param_alpha", "param_beta", "param_q", "n", "samples", "hits",
    "censored", "p_hat", "ci_low", "ci_high", "prediction", "ratio", "z_score", "seed",
];

/// Rows of one experiment plus diagnostics that do not fit the table.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub comparisons: Vec<ComparisonRow>,
    pub warnings: Vec<String>,
    /// Least-squares slope of `ln p_hat` against `ln n` (window experiments).
    pub fitted_exponent: Option<f64>,
}

impl ExperimentReport {
    pub fn extend(&mut self, other: ExperimentReport) {
        self.rows.extend(other.rows);
        self.comparisons.extend(other.comparisons);
        self.warnings.extend(other.warnings);
        self.fitted_exponent = other.fitted_exponent.or(self.fitted_exponent);
    }
}

struct RowContext<'a> {
    experiment: &'a str,
    fb: &'a FeedbackFunction,
    x0: u64,
    y0: u64,
    alpha: Option<Fraction>,
    beta: Option<Fraction>,
}

impl RowContext<'_> {
    fn row(&self, cmp: &ComparisonRow, q: Option<u64>) -> ReportRow {
        let e = &cmp.estimate;
        ReportRow {
            experiment: self.experiment.to_string(),
            feedback: self.fb.label(),
            p: self.fb.p(),
            x0: self.x0,
            y0: self.y0,
            param_alpha: self.alpha.map(|a| a.to_f64()),
            param_beta: self.beta.map(|b| b.to_f64()),
            param_q: q,
            n: e.n,
            samples: e.samples,
            hits: e.hits,
            censored: e.censored,
            p_hat: e.p_hat,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            prediction: cmp.prediction,
            ratio: cmp.ratio,
            z_score: cmp.z_score,
            seed: e.seed,
        }
    }
}

/// Per-event integer counts; merging is order-independent.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Tally {
    hits: Vec<u64>,
    censored: Vec<u64>,
}

impl Tally {
    fn new(events: usize) -> Self {
        Self {
            hits: vec![0; events],
            censored: vec![0; events],
        }
    }

    fn record(&mut self, event: usize, outcome: Option<bool>) {
        match outcome {
            Some(true) => self.hits[event] += 1,
            Some(false) => {}
            None => self.censored[event] += 1,
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.hits.iter_mut().zip(other.hits) {
            *a += b;
        }
        for (a, b) in self.censored.iter_mut().zip(other.censored) {
            *a += b;
        }
        self
    }
}

/// Runs `step` on every replicate in parallel and sums the tallies.
fn run_replicates<F>(settings: &Settings, events: usize, step: F) -> Result<Tally>
where
    F: Fn(&mut Tally, Replicate) + Sync,
{
    let stream = RandomStream::new(settings.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    Ok(pool.install(|| {
        (0..settings.samples)
            .into_par_iter()
            .fold(
                || Tally::new(events),
                |mut tally, r| {
                    step(&mut tally, stream.replicate(r));
                    tally
                },
            )
            .reduce(|| Tally::new(events), Tally::merge)
    }))
}

fn check_n_list(n_list: &[u64], minimum: u64) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::config("n_list", "must not be empty"));
    }
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config("n_list", "must be strictly increasing"));
    }
    if n_list[0] < minimum {
        return Err(Error::config("n_list", format!("values must be at least {minimum}")));
    }
    Ok(())
}

fn require_analytics(fb: &FeedbackFunction) -> Result<()> {
    if fb.builtin_validity() == Some(false) {
        return Err(Error::config("feedback", "feedback not valid; analytics unavailable"));
    }
    Ok(())
}

fn as_config(path: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Domain(m) | Error::Divergent(m) => Error::config(path, m),
        other => other,
    }
}

fn censoring_warnings(label: &str, est: &TailEstimate) -> Option<String> {
    (est.censored > 0).then(|| {
        format!(
            "{label} n={}: {} of {} replicates censored; p_hat is bracketed by [{:.6e}, {:.6e}]",
            est.n, est.censored, est.samples, est.bracket_low, est.bracket_high
        )
    })
}

/// `Pr[L > n]` for each `n`, against `c S_1(n)`.
pub fn experiment_losing_tail(
    fb: &FeedbackFunction,
    x: u64,
    y: u64,
    n_list: &[u64],
    settings: &Settings,
) -> Result<ExperimentReport> {
    settings.validate()?;
    require_analytics(fb)?;
    check_n_list(n_list, 0)?;
    let state = UrnState::two(x, y).map_err(as_config("initial"))?;
    let ctx = RaceContext::new(fb, settings.delta, settings.cap).map_err(as_config("feedback"))?;
    let predictor = Predictor::new(fb, x, y, settings.rel_tol)?;
    let tally = run_replicates(settings, n_list.len(), |tally, rep| {
        let outcome = ClockPair::new(&state, &rep).expect("validated state").race(&ctx);
        for (k, &n) in n_list.iter().enumerate() {
            tally.record(k, outcome.losing_exceeds(n));
        }
    })?;
    let rc = RowContext { experiment: "tail-loser", fb, x0: x, y0: y, alpha: None, beta: None };
    let mut report = ExperimentReport::default();
    for (k, &n) in n_list.iter().enumerate() {
        let est = TailEstimate::new("L>n", n, settings.samples, tally.hits[k], tally.censored[k], settings.confidence, settings.seed)?;
        report.warnings.extend(censoring_warnings("tail-loser", &est));
        let cmp = ComparisonRow::new(est, Some(predictor.tail_l(n)?));
        report.rows.push(rc.row(&cmp, None));
        report.comparisons.push(cmp);
    }
    Ok(report)
}

/// `Pr[exists N >= n: HasMoreThan(beta, N)]` from the state `[n, alpha]`.
pub fn experiment_imbalance(
    fb: &FeedbackFunction,
    n: u64,
    alpha: Fraction,
    beta: Fraction,
    settings: &Settings,
) -> Result<ExperimentReport> {
    settings.validate()?;
    if !(alpha.numerator() > 0 && alpha < beta && beta.is_below_half()) {
        return Err(Error::config("alpha", format!("need 0 < alpha < beta < 1/2, got alpha = {alpha}, beta = {beta}")));
    }
    let state = UrnState::with_fraction(n, alpha).map_err(as_config("n"))?;
    let ctx = RaceContext::new(fb, settings.delta, settings.cap).map_err(as_config("feedback"))?;
    let tally = run_replicates(settings, 1, |tally, rep| {
        let mut pair = ClockPair::new(&state, &rep).expect("validated state");
        let outcome = match pair.monitor_imbalance(beta, &ctx).0 {
            ImbalanceOutcome::Occurred { .. } => Some(true),
            ImbalanceOutcome::Avoided => Some(false),
            ImbalanceOutcome::Censored => None,
        };
        tally.record(0, outcome);
    })?;
    let est = TailEstimate::new("HasMoreThan(beta,N)", n, settings.samples, tally.hits[0], tally.censored[0], settings.confidence, settings.seed)?;
    let counts = state.counts();
    let rc = RowContext { experiment: "imbalance", fb, x0: counts[0], y0: counts[1], alpha: Some(alpha), beta: Some(beta) };
    let mut report = ExperimentReport::default();
    report.warnings.extend(censoring_warnings("imbalance", &est));
    let cmp = ComparisonRow::new(est, None);
    report.rows.push(rc.row(&cmp, None));
    report.comparisons.push(cmp);
    Ok(report)
}

/// Exact window frequencies for each `(q, n)` on shared replicates.
fn window_tally(fb: &FeedbackFunction, state: &UrnState, windows: &[(u64, u64)], settings: &Settings) -> Result<Tally> {
    let max_n = windows.iter().map(|w| w.1).max().unwrap_or(0);
    let rates = RateTable::new(fb, max_n + 1);
    run_replicates(settings, windows.len(), |tally, rep| {
        let mut pair = ClockPair::new(state, &rep).expect("validated state");
        for (k, &(q, n)) in windows.iter().enumerate() {
            tally.record(k, Some(pair.window(q, n, &rates)));
        }
    })
}

/// `Pr[LoserHasMoreThan(alpha, n)]`, i.e. both bins hold `ceil(alpha n)` at total `n`.
pub fn experiment_loser_fraction(
    fb: &FeedbackFunction,
    x: u64,
    y: u64,
    alpha: Fraction,
    n_list: &[u64],
    settings: &Settings,
) -> Result<ExperimentReport> {
    settings.validate()?;
    require_analytics(fb)?;
    if !alpha.is_below_half() {
        return Err(Error::config("alpha", format!("must be in (0, 1/2), got {alpha}")));
    }
    check_n_list(n_list, x + y)?;
    let spec = QSpec::Alpha(alpha);
    let windows = n_list.iter().map(|&n| Ok((spec.q(n)?, n))).collect::<Result<Vec<_>>>()?;
    let state = UrnState::two(x, y).map_err(as_config("initial"))?;
    let predictor = Predictor::new(fb, x, y, settings.rel_tol)?;
    let tally = window_tally(fb, &state, &windows, settings)?;
    let rc = RowContext { experiment: "loser-fraction", fb, x0: x, y0: y, alpha: Some(alpha), beta: None };
    let mut report = ExperimentReport::default();
    for (k, &n) in n_list.iter().enumerate() {
        let est = TailEstimate::new("LoserHasMoreThan(alpha,n)", n, settings.samples, tally.hits[k], 0, settings.confidence, settings.seed)?;
        let cmp = ComparisonRow::new(est, Some(predictor.loser_fraction(alpha, n)?));
        report.rows.push(rc.row(&cmp, None));
        report.comparisons.push(cmp);
    }
    Ok(report)
}

/// `Pr[|I_1 - I_2| <= q(n)]` at total `n`, with a fitted power-law exponent.
pub fn experiment_window(
    fb: &FeedbackFunction,
    x: u64,
    y: u64,
    q_spec: QSpec,
    n_list: &[u64],
    settings: &Settings,
) -> Result<ExperimentReport> {
    settings.validate()?;
    require_analytics(fb)?;
    check_n_list(n_list, x + y)?;
    let windows = n_list.iter().map(|&n| Ok((q_spec.q(n)?, n))).collect::<Result<Vec<_>>>()?;
    let state = UrnState::two(x, y).map_err(as_config("initial"))?;
    let predictor = Predictor::new(fb, x, y, settings.rel_tol)?;
    let tally = window_tally(fb, &state, &windows, settings)?;
    let rc = RowContext { experiment: "window", fb, x0: x, y0: y, alpha: None, beta: None };
    let mut report = ExperimentReport::default();
    for (k, &(q, n)) in windows.iter().enumerate() {
        let est = TailEstimate::new("window(q,n)", n, settings.samples, tally.hits[k], 0, settings.confidence, settings.seed)?;
        let prediction = predictor.window(q, n)?;
        report.warnings.extend(prediction.warning);
        let cmp = ComparisonRow::new(est, Some(prediction.value));
        report.rows.push(rc.row(&cmp, Some(q)));
        report.comparisons.push(cmp);
    }
    report.fitted_exponent = fitted_exponent(
        report.comparisons.iter().map(|c| (c.estimate.n as f64, c.estimate.p_hat)),
    );
    Ok(report)
}

/// Least-squares slope of `ln p` against `ln n` over points with `p > 0`.
pub fn fitted_exponent(points: impl IntoIterator<Item = (f64, f64)>) -> Option<f64> {
    let logs: Vec<(f64, f64)> = points
        .into_iter()
        .filter(|(n, p)| *n > 0.0 && *p > 0.0)
        .map(|(n, p)| (n.ln(), p.ln()))
        .collect();
    if logs.len() < 2 {
        return None;
    }
    let m = logs.len() as f64;
    let mx = logs.iter().map(|l| l.0).sum::<f64>() / m;
    let my = logs.iter().map(|l| l.1).sum::<f64>() / m;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Writes rows as CSV with the fixed header.
pub fn write_csv<W: std::io::Write>(rows: &[ReportRow], writer: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    out.write_record(CSV_COLUMNS)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes rows as a JSON array with the CSV field names.
pub fn write_json<W: std::io::Write>(rows: &[ReportRow], mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, rows)?;
    writeln!(writer)?;
    Ok(())
}
