//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints its PASS/FAIL line; exits non-zero if any fails.

use std::collections::HashMap;
use std::time::Instant;

use monopoly::analytics::{limit_constant_c, Predictor};
use monopoly::discrete::{enumerate_paths, UrnState};
use monopoly::embedding::{embedded_discrete_steps, sample_centred_tail, RaceContext};
use monopoly::feedback::{integral_m, FeedbackFunction, SumTable};
use monopoly::fraction::Fraction;
use monopoly::montecarlo::{
    experiment_imbalance, experiment_losing_tail, experiment_loser_fraction, experiment_window, write_csv, QSpec,
    Settings,
};
use monopoly::stream::RandomStream;

const SEED: u64 = 20_240_601;
const BIG: u64 = 10_000_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn sq() -> FeedbackFunction {
    FeedbackFunction::power(2.0).unwrap()
}

fn settings(samples: u64) -> Settings {
    let mut s = Settings::new(samples, SEED);
    s.delta = 1e-9;
    s
}

fn embedding_equivalence() -> Verdict {
    let reps = 1_000_000u64;
    let m = 6;
    let start = UrnState::two(1, 1).unwrap();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for p in [1.5, 2.0, 3.0] {
        let fb = FeedbackFunction::power(p).unwrap();
        let exact = enumerate_paths(&fb, &start, m).unwrap();
        let stream = RandomStream::new(SEED);
        let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
        for i in 0..reps {
            let t = embedded_discrete_steps(&fb, &start, m, &stream.replicate(i)).unwrap();
            *counts.entry(t.terminal().counts().to_vec()).or_default() += 1;
        }
        let mut tv = 0.0;
        for (state, q) in &exact.entries {
            let emp = counts.remove(state.counts()).unwrap_or(0) as f64 / reps as f64;
            tv += (emp - q).abs();
        }
        // states the oracle never produces
        tv += counts.values().map(|&k| k as f64 / reps as f64).sum::<f64>();
        tv /= 2.0;
        worst = worst.max(tv);
        parts.push(format!("p={p}: TV={tv:.5}"));
    }
    verdict(worst < 0.005, parts.join(", "))
}

/// Whether there are values v_n with |v_n - 1| non-increasing in n and
/// |r_n - v_n| <= slack_n for every n.
fn monotone_approach(ratios: &[f64], slack: &[f64]) -> bool {
    let mut d_next = 0.0f64;
    for k in (0..ratios.len()).rev() {
        let dist = (ratios[k] - 1.0).abs();
        let lo = (dist - slack[k]).max(0.0);
        let d = lo.max(d_next);
        if d > dist + slack[k] {
            return false;
        }
        d_next = d;
    }
    true
}

fn losing_tail_law() -> Verdict {
    let fb = sq();
    let coarse = limit_constant_c(&fb, 1, 1, 1e-6).unwrap();
    let fine = limit_constant_c(&fb, 1, 1, 1e-9).unwrap();
    let drift = (coarse.c - fine.c).abs() / fine.c;
    let n_list = [20, 40, 80];
    let report = experiment_losing_tail(&fb, 1, 1, &n_list, &settings(BIG)).unwrap();
    let mut ratios = Vec::new();
    let mut slack = Vec::new();
    for cmp in &report.comparisons {
        let pred = cmp.prediction.unwrap();
        ratios.push(cmp.estimate.p_hat / pred);
        slack.push(3.0 * cmp.estimate.standard_error(cmp.estimate.p_hat) / pred);
    }
    let censored: u64 = report.rows.iter().map(|r| r.censored).sum();
    let r80 = ratios[2];
    let pass = drift < 1e-6 && monotone_approach(&ratios, &slack) && (0.9..=1.1).contains(&r80);
    let detail = format!(
        "c={:.10} (refinement drift {drift:.1e}), ratios {:.4}/{:.4}/{:.4} (3se {:.4}/{:.4}/{:.4}), censored {censored}",
        fine.c, ratios[0], ratios[1], ratios[2], slack[0], slack[1], slack[2]
    );
    verdict(pass, detail)
}

fn loser_fraction_law() -> Verdict {
    let fb = sq();
    let alpha = Fraction::new(1, 4).unwrap();
    let report = experiment_loser_fraction(&fb, 1, 1, alpha, &[32, 64, 128], &settings(BIG)).unwrap();
    let last = report.comparisons.last().unwrap();
    let z = last.z_score.unwrap();
    let predictor = Predictor::new(&fb, 1, 1, 1e-9).unwrap();
    let closed = predictor.c() * (8.0 / 3.0) / 128.0;
    let window_form = predictor.loser_fraction(alpha, 128).unwrap();
    let gap = (closed - window_form).abs() / window_form;
    let ratios: Vec<String> = report.comparisons.iter().map(|c| format!("{:.4}", c.ratio.unwrap())).collect();
    verdict(
        z.abs() <= 3.0 && gap < 0.05,
        format!("ratios {} ; z at n=128 {z:.2} ; closed form vs window {:.2}%", ratios.join("/"), 100.0 * gap),
    )
}

fn window_power_law() -> Verdict {
    let report = experiment_window(&sq(), 1, 1, QSpec::Sqrt(1.0), &[64, 256], &settings(BIG)).unwrap();
    let slope = report.fitted_exponent.unwrap_or(f64::NAN);
    let p_hat: Vec<String> = report.rows.iter().map(|r| format!("{:.3e}", r.p_hat)).collect();
    verdict((slope + 1.5).abs() <= 0.2, format!("fitted exponent {slope:.4} (p_hat {})", p_hat.join(", ")))
}

fn imbalance_stability() -> Verdict {
    let fb = sq();
    let main = experiment_imbalance(
        &fb,
        2000,
        Fraction::new(9, 20).unwrap(),
        Fraction::new(12, 25).unwrap(),
        &settings(10_000),
    )
    .unwrap();
    let control = experiment_imbalance(
        &fb,
        10,
        Fraction::new(3, 10).unwrap(),
        Fraction::new(2, 5).unwrap(),
        &settings(100_000),
    )
    .unwrap();
    let (m, c) = (&main.rows[0], &control.rows[0]);
    verdict(
        m.hits == 0 && m.censored == 0 && c.hits > 0,
        format!(
            "n=2000: {} occurrences / {} ({} censored); control n=10: {} / {}",
            m.hits, m.samples, m.censored, c.hits, c.samples
        ),
    )
}

fn concentration() -> Verdict {
    let fb = sq();
    let ctx = RaceContext::new(&fb, 1e-9, 1 << 20).unwrap();
    let (n, cut) = (256u64, 4096u64);
    let s1 = SumTable::new(&fb, 1.0).unwrap();
    let s2 = SumTable::new(&fb, 2.0).unwrap();
    let scale = s2.tail(n).unwrap().sqrt();
    let s1n = s1.tail(n).unwrap();
    // The unsampled remainder is non-negative with mean S_1(cut); above the
    // mean it is certified to stay within t sqrt(S_2(cut)) at level delta.
    let remainder_up = ctx.deviation_multiplier() * s2.tail(cut).unwrap().sqrt();
    let remainder_down = s1.tail(cut).unwrap();
    let ts = [2.0, 4.0, 6.0, 8.0];
    let mut exceed = [0u64; 4];
    let mut cor = 0u64;
    let samples = 1_000_000u64;
    let stream = RandomStream::new(SEED);
    for i in 0..samples {
        let a = sample_centred_tail(&ctx, n, cut, &stream.replicate(i)).unwrap();
        let high = a + remainder_up;
        for (k, t) in ts.iter().enumerate() {
            if high > t * scale {
                exceed[k] += 1;
            }
        }
        let bound = 5.0 * (n as f64).powf(-0.25) * s1n;
        if high > bound || a - remainder_down < -bound {
            cor += 1;
        }
    }
    let mut pass = cor as f64 / (samples as f64) < 1e-3;
    let mut parts = Vec::new();
    for (k, t) in ts.iter().enumerate() {
        let freq = exceed[k] as f64 / samples as f64;
        let bound = 1.5 * (2.0 - t).exp();
        pass &= freq <= bound;
        parts.push(format!("t={t}: {freq:.2e} <= {bound:.2e}"));
    }
    parts.push(format!("deviation event {:.1e}", cor as f64 / samples as f64));
    verdict(pass, parts.join(", "))
}

fn analytics_self_consistency() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for fb in [sq(), FeedbackFunction::power_times_log(2.0).unwrap()] {
        let table = SumTable::new(&fb, 1.0).unwrap();
        let n = 10_000u64;
        let x = n as f64;
        // h = x f'(x) / f(x) by a central difference of ln f
        let step = 1e-4;
        let h = (fb.ln_value(x * (1.0 + step)).unwrap() - fb.ln_value(x * (1.0 - step)).unwrap())
            / (2.0 * step);
        let ratio = table.tail(n).unwrap() / (x / ((h - 1.0) * fb.value(x).unwrap()));
        pass &= (0.95..=1.05).contains(&ratio);
        let mut worst = 0.0f64;
        let mut grid: Vec<u64> = (1..=100).collect();
        grid.extend((1..=40).map(|k| (1.25f64.powi(k) * 100.0) as u64).filter(|&m| m <= 1_000_000));
        for m in grid {
            let s = table.tail(m).unwrap();
            let integral = integral_m(&fb, 1.0, m as f64).unwrap().value;
            let margin = (s - integral).abs() * fb.value(m as f64).unwrap();
            worst = worst.max(margin);
        }
        pass &= worst <= 1.0;
        parts.push(format!("{}: S/asymptotic={ratio:.5}, max f|M-S|={worst:.4}", fb.label()));
    }
    verdict(pass, parts.join("; "))
}

fn determinism() -> Verdict {
    let fb = sq();
    let mut bodies = Vec::new();
    for workers in [1, 2, 3, 8] {
        let mut s = settings(20_000);
        s.workers = workers;
        let mut report = experiment_losing_tail(&fb, 1, 1, &[5, 50, 500], &s).unwrap();
        report.extend(experiment_window(&fb, 2, 1, QSpec::Sqrt(1.0), &[30, 90], &s).unwrap());
        report.extend(
            experiment_imbalance(&fb, 10, Fraction::new(3, 10).unwrap(), Fraction::new(2, 5).unwrap(), &s).unwrap(),
        );
        let mut body = Vec::new();
        write_csv(&report.rows, &mut body).unwrap();
        bodies.push(body);
    }
    let same = bodies.windows(2).all(|w| w[0] == w[1]);
    verdict(same, format!("workers 1/2/3/8, {} CSV bytes each", bodies[0].len()))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("embedding equivalence", embedding_equivalence),
        ("losing-bin tail law", losing_tail_law),
        ("loser-fraction law", loser_fraction_law),
        ("window power law", window_power_law),
        ("imbalance stability", imbalance_stability),
        ("concentration", concentration),
        ("analytics self-consistency", analytics_self_consistency),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let clock = Instant::now();
        let v = run();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {} {name}: {} [{:.1}s]", k + 1, v.detail, clock.elapsed().as_secs_f64());
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
