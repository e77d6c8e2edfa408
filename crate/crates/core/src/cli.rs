//! The `monopoly` command line.
//!
//! Exit codes: 0 success, 2 usage, configuration or validation failure,
//! 3 numerical failure (tolerance unreachable), 1 I/O failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::analytics::limit_constant_c;
use crate::config::{ExperimentParams, FeedbackFamily, FeedbackSpec, Format, InitialState, RunConfig};
use crate::discrete::{simulate_steps, UrnState};
use crate::error::{Error, Result};
use crate::feedback::check_validity;
use crate::fraction::Fraction;
use crate::montecarlo::{
    experiment_imbalance, experiment_losing_tail, experiment_loser_fraction, experiment_window, run_plan,
    write_csv, write_json, ExperimentPlan, ExperimentReport, QSpec, Settings,
};
use crate::stream::{RandomStream, AUX_CHANNEL};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MONOPOLY_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "monopoly", version, about = "Balls-in-bins with feedback: simulation and tail asymptotics")]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Output file (standard output by default).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct FeedbackArgs {
    #[arg(long = "feedback", value_enum)]
    kind: Option<FeedbackFamily>,
    #[arg(long)]
    p: Option<f64>,
    /// Log exponent for the power-log family.
    #[arg(long)]
    a: Option<f64>,
}

#[derive(Debug, Args, Default)]
struct StartArgs {
    #[arg(long)]
    x0: Option<u64>,
    #[arg(long)]
    y0: Option<u64>,
}

#[derive(Debug, Args, Default)]
struct RunArgs {
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Horizon cap per bin for certified races.
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    confidence: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Heuristic validity check of a feedback function.
    Validate {
        #[command(flatten)]
        feedback: FeedbackArgs,
        #[arg(long, default_value_t = 1_000_000)]
        grid_max: u64,
        #[arg(long, default_value_t = 10.0)]
        tolerance_c: f64,
    },
    /// The limit constant c by Fourier inversion.
    Constant {
        #[command(flatten)]
        feedback: FeedbackArgs,
        #[command(flatten)]
        start: StartArgs,
        #[arg(long)]
        rel_tol: Option<f64>,
    },
    /// Pr[L > n] against c S_1(n).
    TailLoser {
        #[command(flatten)]
        feedback: FeedbackArgs,
        #[command(flatten)]
        start: StartArgs,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u64>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Whether bin 1 ever exceeds a beta share, starting from [n, alpha].
    Imbalance {
        #[command(flatten)]
        feedback: FeedbackArgs,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        alpha: Option<Fraction>,
        #[arg(long)]
        beta: Option<Fraction>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pr[both bins hold ceil(alpha n) at total n].
    LoserFraction {
        #[command(flatten)]
        feedback: FeedbackArgs,
        #[command(flatten)]
        start: StartArgs,
        #[arg(long)]
        alpha: Option<Fraction>,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u64>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Pr[|I_1 - I_2| <= q(n) at total n]; q is const:K, alpha:A or sqrt:L.
    Window {
        #[command(flatten)]
        feedback: FeedbackArgs,
        #[command(flatten)]
        start: StartArgs,
        #[arg(long)]
        q: Option<QSpec>,
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u64>>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// One trajectory of the discrete chain as CSV.
    Simulate {
        #[command(flatten)]
        feedback: FeedbackArgs,
        #[command(flatten)]
        start: StartArgs,
        /// Initial counts for any number of bins, e.g. 1,1,1.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["x0", "y0"])]
        counts: Option<Vec<u64>>,
        #[arg(long)]
        steps: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Runs every experiment of a TOML plan.
    Run {
        #[arg(long)]
        plan: PathBuf,
    },
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::ToleranceUnreachable { .. } => 3,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{}", e.render());
            return e.exit_code();
        }
    };
    match execute(cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn workers() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::config(WORKERS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

struct Context {
    cfg: RunConfig,
    format: Format,
    output: Option<PathBuf>,
}

impl Context {
    fn feedback(&self, args: &FeedbackArgs) -> Result<crate::feedback::FeedbackFunction> {
        let base = self.cfg.feedback.clone();
        let kind = args.kind.or(base.as_ref().map(|b| b.kind)).unwrap_or(FeedbackFamily::Power);
        let p = args
            .p
            .or(base.as_ref().map(|b| b.p))
            .ok_or_else(|| Error::config("feedback.p", "missing (use --p)"))?;
        let a = args.a.or(base.and_then(|b| b.a));
        FeedbackSpec { kind, p, a }.build()
    }

    fn start(&self, args: &StartArgs) -> Result<(u64, u64)> {
        let (cx, cy) = match self.cfg.initial {
            Some(InitialState::Counts { x, y }) => (Some(x), Some(y)),
            Some(InitialState::Fraction { n, alpha }) => {
                let s = UrnState::with_fraction(n, alpha).map_err(|e| Error::config("initial", e.to_string()))?;
                (Some(s.counts()[0]), Some(s.counts()[1]))
            }
            None => (None, None),
        };
        let x = args.x0.or(cx).unwrap_or(1);
        let y = args.y0.or(cy).unwrap_or(1);
        if x == 0 || y == 0 {
            return Err(Error::config("initial", "counts must be positive"));
        }
        Ok((x, y))
    }

    fn n_list(&self, flag: &Option<Vec<u64>>) -> Result<Vec<u64>> {
        flag.clone()
            .or_else(|| self.cfg.experiment.n_list.clone())
            .ok_or_else(|| Error::config("experiment.n_list", "missing (use --n)"))
    }

    fn settings(&self, run: &RunArgs) -> Result<Settings> {
        let e: &ExperimentParams = &self.cfg.experiment;
        let seed = run
            .seed
            .or(self.cfg.seed)
            .ok_or_else(|| Error::config("seed", "experiments require --seed"))?;
        let samples = run
            .samples
            .or(e.samples)
            .ok_or_else(|| Error::config("experiment.samples", "missing (use --samples)"))?;
        let mut s = Settings::new(samples, seed);
        if let Some(d) = run.delta.or(e.delta) {
            s.delta = d;
        }
        if let Some(c) = run.cap.or(e.cap) {
            s.cap = c;
        }
        if let Some(c) = run.confidence.or(self.cfg.confidence) {
            s.confidence = c;
        }
        if let Some(t) = e.rel_tol {
            s.rel_tol = t;
        }
        s.workers = workers()?;
        Ok(s)
    }

    fn sink(&self, stdout: &mut dyn Write, body: &[u8]) -> Result<()> {
        match &self.output {
            Some(path) => {
                let mut f = BufWriter::new(File::create(path)?);
                f.write_all(body)?;
                f.flush()?;
            }
            None => stdout.write_all(body)?,
        }
        Ok(())
    }

    fn emit_report(&self, report: &ExperimentReport, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
        let mut body = Vec::new();
        match self.format {
            Format::Csv => write_csv(&report.rows, &mut body)?,
            Format::Json => write_json(&report.rows, &mut body)?,
        }
        self.sink(stdout, &body)?;
        for w in &report.warnings {
            writeln!(stderr, "warning: {w}")?;
        }
        if let Some(slope) = report.fitted_exponent {
            writeln!(stderr, "fitted decay exponent: {slope:.4}")?;
        }
        Ok(0)
    }
}

fn execute(cli: Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let ctx = Context {
        format: cli.format.or(cfg.output.format).unwrap_or_default(),
        output: cli.output.clone().or_else(|| cfg.output.path.clone()),
        cfg,
    };
    match &cli.command {
        Command::Validate { feedback, grid_max, tolerance_c } => {
            let fb = ctx.feedback(feedback)?;
            let report = check_validity(&fb, *grid_max, *tolerance_c).map_err(|e| Error::config("grid_max", e.to_string()))?;
            let mut body = serde_json::to_vec_pretty(&report)?;
            body.push(b'\n');
            ctx.sink(stdout, &body)?;
            Ok(if report.passed { 0 } else { 2 })
        }
        Command::Constant { feedback, start, rel_tol } => {
            let fb = ctx.feedback(feedback)?;
            let (x, y) = ctx.start(start)?;
            let tol = rel_tol.or(ctx.cfg.experiment.rel_tol).unwrap_or(1e-8);
            let c = limit_constant_c(&fb, x, y, tol).map_err(|e| match e {
                Error::Divergent(m) => Error::config("feedback", m),
                Error::Domain(m) => Error::config("rel_tol", m),
                other => other,
            })?;
            let mut body = serde_json::to_vec_pretty(&c)?;
            body.push(b'\n');
            ctx.sink(stdout, &body)?;
            Ok(0)
        }
        Command::TailLoser { feedback, start, n, run } => {
            let fb = ctx.feedback(feedback)?;
            let (x, y) = ctx.start(start)?;
            let report = experiment_losing_tail(&fb, x, y, &ctx.n_list(n)?, &ctx.settings(run)?)?;
            ctx.emit_report(&report, stdout, stderr)
        }
        Command::Imbalance { feedback, n, alpha, beta, run } => {
            let fb = ctx.feedback(feedback)?;
            let (cn, calpha) = match ctx.cfg.initial {
                Some(InitialState::Fraction { n, alpha }) => (Some(n), Some(alpha)),
                _ => (None, None),
            };
            let n = n.or(cn).ok_or_else(|| Error::config("initial.n", "missing (use --n)"))?;
            let alpha = alpha
                .or(ctx.cfg.experiment.alpha)
                .or(calpha)
                .ok_or_else(|| Error::config("experiment.alpha", "missing (use --alpha)"))?;
            let beta = beta
                .or(ctx.cfg.experiment.beta)
                .ok_or_else(|| Error::config("experiment.beta", "missing (use --beta)"))?;
            let report = experiment_imbalance(&fb, n, alpha, beta, &ctx.settings(run)?)?;
            ctx.emit_report(&report, stdout, stderr)
        }
        Command::LoserFraction { feedback, start, alpha, n, run } => {
            let fb = ctx.feedback(feedback)?;
            let (x, y) = ctx.start(start)?;
            let alpha = alpha
                .or(ctx.cfg.experiment.alpha)
                .ok_or_else(|| Error::config("experiment.alpha", "missing (use --alpha)"))?;
            let report = experiment_loser_fraction(&fb, x, y, alpha, &ctx.n_list(n)?, &ctx.settings(run)?)?;
            ctx.emit_report(&report, stdout, stderr)
        }
        Command::Window { feedback, start, q, n, run } => {
            let fb = ctx.feedback(feedback)?;
            let (x, y) = ctx.start(start)?;
            let q = q.or(ctx.cfg.experiment.q).ok_or_else(|| Error::config("experiment.q", "missing (use --q)"))?;
            let report = experiment_window(&fb, x, y, q, &ctx.n_list(n)?, &ctx.settings(run)?)?;
            ctx.emit_report(&report, stdout, stderr)
        }
        Command::Simulate { feedback, start, counts, steps, seed } => {
            let fb = ctx.feedback(feedback)?;
            let state = match counts {
                Some(c) => UrnState::new(c.clone()),
                None => {
                    let (x, y) = ctx.start(start)?;
                    UrnState::two(x, y)
                }
            }
            .map_err(|e| Error::config("initial", e.to_string()))?;
            let seed = seed.or(ctx.cfg.seed).ok_or_else(|| Error::config("seed", "simulate requires --seed"))?;
            let mut rng = RandomStream::new(seed).replicate(0).rng(AUX_CHANNEL);
            let trajectory = simulate_steps(&fb, &state, *steps, &mut rng);
            let mut body = Vec::new();
            trajectory.write_csv(&mut body)?;
            ctx.sink(stdout, &body)?;
            Ok(0)
        }
        Command::Run { plan } => {
            let text = std::fs::read_to_string(plan).map_err(|e| Error::config(plan.display().to_string(), e.to_string()))?;
            let plan = ExperimentPlan::from_toml(&text)?;
            let report = run_plan(&plan, workers()?)?;
            ctx.emit_report(&report, stdout, stderr)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut full = vec!["monopoly"];
        full.extend_from_slice(args);
        let code = run(full, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn validate_exit_codes() {
        assert_eq!(call(&["validate", "--feedback", "power", "--p", "2"]).0, 0);
        assert_eq!(call(&["validate", "--feedback", "power", "--p", "1"]).0, 2);
        assert_eq!(call(&["validate", "--feedback", "power-log", "--p", "2", "--a", "1"]).0, 0);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(call(&["tail-loser", "--p", "2", "--n", "5", "--samples", "10"]).0, 2, "seed is mandatory");
        assert_eq!(call(&["frobnicate"]).0, 2);
        assert_eq!(call(&["simulate", "--p", "2", "--steps", "3", "--bogus"]).0, 2);
        assert_eq!(call(&["constant", "--p", "1"]).0, 2);
    }

    #[test]
    fn simulate_rows() {
        let (code, out, _) = call(&["simulate", "--p", "2", "--x0", "1", "--y0", "1", "--steps", "100", "--seed", "1"]);
        assert_eq!(code, 0);
        assert_eq!(out.lines().count(), 102);
        assert_eq!(out.lines().next().unwrap(), "step,bin_1,bin_2");
    }
}
