//! Exponential embedding of the two-bin process.
//!
//! Bin `i` carries a clock whose `j`-th increment is `X(i, j) ~ Exp(f(j))`.
//! `A_i(c)` denotes the time at which bin `i` receives its `c`-th ball, i.e.
//! the sum of the increments from the initial count up to `c - 1`. Merging
//! the two arrival sequences reproduces the discrete chain exactly.
//!
//! Events at a fixed total are decided exactly from finitely many
//! increments. Events that depend on the whole future (who wins, how many
//! balls the loser ends with) are decided by bounding the unsampled tail
//! `sum_{j >= h} X(i, j)` to confidence `delta`.

use crate::discrete::{Trajectory, UrnState};
use crate::error::{Error, Result};
use crate::feedback::{FeedbackFunction, SumTable};
use crate::fraction::Fraction;
use crate::stream::{IndexedExponentials, Replicate};

/// Default horizon cap per bin.
pub const DEFAULT_CAP: u64 = 1_000_000;

/// Default tail-bound failure probability.
pub const DEFAULT_DELTA: f64 = 1e-9;

/// Explicit constant in the tail bound `Pr[|A| > t sqrt(S_2)] <= C e^(-t)`.
pub const TAIL_BOUND_CONSTANT: f64 = std::f64::consts::E * std::f64::consts::E;

/// Precomputed rates `1 / f(j)`.
#[derive(Debug, Clone)]
pub struct RateTable {
    fb: FeedbackFunction,
    rates: Vec<f64>,
}

impl RateTable {
    /// Tabulates `1 / f(j)` for `j < len`; larger indices are computed on demand.
    pub fn new(fb: &FeedbackFunction, len: u64) -> Self {
        let rates = (0..len)
            .map(|j| if j == 0 { f64::NAN } else { fb.inv_pow(j as f64, 1.0) })
            .collect();
        Self { fb: fb.clone(), rates }
    }

    #[inline]
    pub fn mean(&self, j: u64) -> f64 {
        match self.rates.get(j as usize) {
            Some(r) => *r,
            None => self.fb.inv_pow(j as f64, 1.0),
        }
    }

    pub fn feedback(&self) -> &FeedbackFunction {
        &self.fb
    }
}

/// Arrival times of one bin, extended on demand.
#[derive(Debug, Clone)]
pub struct BinClock {
    bin: usize,
    start: u64,
    /// `arrivals[k] = A(start + k + 1)`.
    arrivals: Vec<f64>,
    source: IndexedExponentials,
}

impl BinClock {
    pub fn new(bin: usize, start: u64, replicate: &Replicate) -> Self {
        Self {
            bin,
            start,
            arrivals: Vec::new(),
            source: replicate.clock(bin),
        }
    }

    pub fn bin(&self) -> usize {
        self.bin
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    /// First index not yet sampled.
    pub fn horizon(&self) -> u64 {
        self.start + self.arrivals.len() as u64
    }

    /// Cumulative arrival times `A(start + 1), ..., A(horizon)`.
    pub fn partial_sums(&self) -> &[f64] {
        &self.arrivals
    }

    /// Samples increments up to index `horizon - 1`.
    pub fn extend_to(&mut self, horizon: u64, rates: &RateTable) {
        let mut acc = self.arrivals.last().copied().unwrap_or(0.0);
        let from = self.horizon();
        if horizon <= from {
            return;
        }
        self.arrivals.reserve((horizon - from) as usize);
        for j in from..horizon {
            acc += self.source.exponential(j) * rates.mean(j);
            self.arrivals.push(acc);
        }
    }

    /// `X(bin, j)` for a sampled index `j`.
    pub fn increment(&self, j: u64) -> f64 {
        let k = (j - self.start) as usize;
        let prev = if k == 0 { 0.0 } else { self.arrivals[k - 1] };
        self.arrivals[k] - prev
    }

    /// `A(count)`; zero when the bin starts with at least `count` balls.
    #[inline]
    pub fn arrival(&self, count: u64) -> f64 {
        if count <= self.start {
            0.0
        } else {
            self.arrivals[(count - self.start - 1) as usize]
        }
    }

    /// Ball count at time `t`, counting only sampled arrivals strictly before `t`.
    pub fn count_before(&self, t: f64) -> u64 {
        self.start + self.arrivals.partition_point(|&a| a < t) as u64
    }

    /// Expected value of the unsampled tail, `S_1(horizon)`.
    pub fn tail_mean(&self, sums: &SumTable) -> Result<f64> {
        sums.tail(self.horizon())
    }
}

/// Samples a clock for `bin` starting at `start`, with increments up to `up_to - 1`.
pub fn sample_clock(
    fb: &FeedbackFunction,
    bin: usize,
    start: u64,
    up_to: u64,
    replicate: &Replicate,
) -> Result<BinClock> {
    if start == 0 || up_to < start {
        return Err(Error::domain(format!("clock range [{start}, {up_to}) is invalid")));
    }
    let mut clock = BinClock::new(bin, start, replicate);
    clock.extend_to(up_to, &RateTable::new(fb, 0));
    Ok(clock)
}

/// The two clocks of one replicate.
#[derive(Debug, Clone)]
pub struct ClockPair {
    clocks: [BinClock; 2],
}

impl ClockPair {
    pub fn new(state: &UrnState, replicate: &Replicate) -> Result<Self> {
        let [x, y] = two_bins(state)?;
        Ok(Self {
            clocks: [BinClock::new(0, x, replicate), BinClock::new(1, y, replicate)],
        })
    }

    pub fn clock(&self, bin: usize) -> &BinClock {
        &self.clocks[bin]
    }

    pub fn initial_total(&self) -> u64 {
        self.clocks[0].start + self.clocks[1].start
    }

    pub fn extend_to(&mut self, horizon: u64, rates: &RateTable) {
        for c in &mut self.clocks {
            c.extend_to(horizon, rates);
        }
    }

    /// Whether `bin` holds at least `b` balls when the total first equals `total`.
    pub fn has_at_least(&mut self, bin: usize, b: u64, total: u64, rates: &RateTable) -> bool {
        let other = 1 - bin;
        if b <= self.clocks[bin].start {
            return true;
        }
        let rival = total + 1 - b;
        if rival <= self.clocks[other].start {
            return false;
        }
        self.clocks[bin].extend_to(b, rates);
        self.clocks[other].extend_to(rival, rates);
        self.clocks[bin].arrival(b) < self.clocks[other].arrival(rival)
    }

    /// Whether `|I_1 - I_2| <= q` when the total first equals `n`.
    pub fn window(&mut self, q: u64, n: u64, rates: &RateTable) -> bool {
        if q >= n {
            return true;
        }
        let a = (n - q).div_ceil(2);
        self.has_at_least(0, a, n, rates) && self.has_at_least(1, a, n, rates)
    }

    /// Counts of both bins when the total equals `n`, read off the merged arrivals.
    pub fn state_at_total(&mut self, n: u64, rates: &RateTable) -> [u64; 2] {
        let steps = n - self.initial_total();
        let [x, y] = [self.clocks[0].start, self.clocks[1].start];
        self.clocks[0].extend_to(x + steps, rates);
        self.clocks[1].extend_to(y + steps, rates);
        let (mut i, mut j) = (x, y);
        while i + j < n {
            if self.clocks[0].arrival(i + 1) < self.clocks[1].arrival(j + 1) {
                i += 1;
            } else {
                j += 1;
            }
        }
        [i, j]
    }

    /// `A_1(n) - A_2(n)`: the difference of the clocks' partial sums up to index `n - 1`.
    pub fn difference(&mut self, n: u64, rates: &RateTable) -> f64 {
        self.extend_to(n, rates);
        self.clocks[0].arrival(n) - self.clocks[1].arrival(n)
    }

    /// The first `m` states of the chain induced by the merged arrivals.
    pub fn embedded_steps(&mut self, m: u64, rates: &RateTable) -> Trajectory {
        let [x, y] = [self.clocks[0].start, self.clocks[1].start];
        self.clocks[0].extend_to(x + m, rates);
        self.clocks[1].extend_to(y + m, rates);
        let mut state = UrnState::two(x, y).expect("clock starts are positive");
        let mut trajectory = Trajectory::new(&state);
        let (mut i, mut j) = (x, y);
        for _ in 0..m {
            let bin = if self.clocks[0].arrival(i + 1) < self.clocks[1].arrival(j + 1) {
                i += 1;
                0
            } else {
                j += 1;
                1
            };
            state.add_ball(bin);
            trajectory.push(&state);
        }
        trajectory
    }
}

fn two_bins(state: &UrnState) -> Result<[u64; 2]> {
    match state.counts() {
        [x, y] => Ok([*x, *y]),
        other => Err(Error::domain(format!(
            "the embedding is two-bin only, got {} bins",
            other.len()
        ))),
    }
}

/// Embedded chain for `m` steps; same law as [`crate::discrete::simulate_steps`].
pub fn embedded_discrete_steps(
    fb: &FeedbackFunction,
    state: &UrnState,
    m: u64,
    replicate: &Replicate,
) -> Result<Trajectory> {
    let mut pair = ClockPair::new(state, replicate)?;
    Ok(pair.embedded_steps(m, &RateTable::new(fb, 0)))
}

/// Tail bound at one horizon.
#[derive(Debug, Clone, Copy)]
struct HorizonBound {
    horizon: u64,
    mean: f64,
    deviation: f64,
}

/// Shared, read-only data for deciding races.
#[derive(Debug, Clone)]
pub struct RaceContext {
    rates: RateTable,
    s1: SumTable,
    delta: f64,
    t: f64,
    cap: u64,
    bounds: Vec<HorizonBound>,
}

impl RaceContext {
    /// Horizons are the powers of two up to `cap` (and `cap` itself) at which
    /// the exponential-moment bound applies, i.e. `1 / sqrt(S_2(h)) <= f(h) / 2`.
    pub fn new(fb: &FeedbackFunction, delta: f64, cap: u64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::domain(format!("delta must be in (0, 1), got {delta}")));
        }
        if cap < 2 {
            return Err(Error::domain(format!("horizon cap must be at least 2, got {cap}")));
        }
        let s1 = SumTable::new(fb, 1.0)?;
        let s2 = SumTable::new(fb, 2.0)?;
        let t = (TAIL_BOUND_CONSTANT / delta).ln();
        let mut horizons: Vec<u64> = (1..64).map(|k| 1u64 << k).take_while(|&h| h < cap).collect();
        horizons.push(cap);
        let mut bounds = Vec::with_capacity(horizons.len());
        for h in horizons {
            let var = s2.tail(h)?;
            let rate = fb.value(h as f64)?;
            if 1.0 / var.sqrt() <= rate / 2.0 {
                bounds.push(HorizonBound {
                    horizon: h,
                    mean: s1.tail(h)?,
                    deviation: t * var.sqrt(),
                });
            }
        }
        let table_len = cap.min(1 << 22) + 1;
        Ok(Self {
            rates: RateTable::new(fb, table_len),
            s1,
            delta,
            t,
            cap,
            bounds,
        })
    }

    pub fn rates(&self) -> &RateTable {
        &self.rates
    }

    pub fn sums(&self) -> &SumTable {
        &self.s1
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Deviation multiplier `t = ln(C / delta)`.
    pub fn deviation_multiplier(&self) -> f64 {
        self.t
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    fn horizons_above(&self, count: u64) -> impl Iterator<Item = &HorizonBound> {
        self.bounds.iter().filter(move |b| b.horizon > count)
    }
}

/// Result of a race between the two bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaceResult {
    /// `winner` is 0-based; `losing_number` counts the balls the loser gains.
    Decided { winner: usize, losing_number: u64 },
    /// The winner is certified but the cap was reached before the loser's
    /// final count was pinned down; it lies in `[losing_low, losing_high]`.
    Bracketed {
        winner: usize,
        losing_low: u64,
        losing_high: u64,
    },
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaceOutcome {
    pub result: RaceResult,
    pub decision_confidence: f64,
    /// Horizon (per bin) at which the race was decided or abandoned.
    pub horizon_used: u64,
}

impl RaceOutcome {
    pub fn winner(&self) -> Option<usize> {
        match self.result {
            RaceResult::Decided { winner, .. } | RaceResult::Bracketed { winner, .. } => Some(winner),
            RaceResult::Censored => None,
        }
    }

    pub fn losing_number(&self) -> Option<u64> {
        match self.result {
            RaceResult::Decided { losing_number, .. } => Some(losing_number),
            _ => None,
        }
    }

    /// Whether `L > n`, or `None` if the outcome does not determine it.
    pub fn losing_exceeds(&self, n: u64) -> Option<bool> {
        match self.result {
            RaceResult::Decided { losing_number, .. } => Some(losing_number > n),
            RaceResult::Bracketed { losing_low, losing_high, .. } => {
                if losing_low > n {
                    Some(true)
                } else if losing_high <= n {
                    Some(false)
                } else {
                    None
                }
            }
            RaceResult::Censored => None,
        }
    }
}

/// Certified enclosure `[lo, hi]` of the explosion time of `bin` at horizon `b`.
fn explosion_bounds(pair: &ClockPair, bin: usize, b: &HorizonBound) -> (f64, f64) {
    let sampled = pair.clocks[bin].arrival(b.horizon);
    (
        sampled + (b.mean - b.deviation).max(0.0),
        sampled + b.mean + b.deviation,
    )
}

impl ClockPair {
    /// Extends both clocks over doubling horizons until one bin's explosion
    /// time is certified to precede the other's sampled arrivals and the
    /// loser's final count is unambiguous.
    pub fn race(&mut self, ctx: &RaceContext) -> RaceOutcome {
        let floor = self.clocks[0].start.max(self.clocks[1].start);
        let mut last = floor;
        let mut bracket = None;
        for b in ctx.horizons_above(floor) {
            last = b.horizon;
            self.extend_to(b.horizon, &ctx.rates);
            let est = |bin: usize| self.clocks[bin].arrival(b.horizon);
            let first = if est(0) <= est(1) { 0 } else { 1 };
            for winner in [first, 1 - first] {
                let loser = 1 - winner;
                let (lo, hi) = explosion_bounds(self, winner, b);
                if hi >= self.clocks[loser].arrival(b.horizon) {
                    continue;
                }
                let k_lo = self.clocks[loser].count_before(lo);
                let k_hi = self.clocks[loser].count_before(hi);
                let start = self.clocks[loser].start;
                bracket = Some(RaceResult::Bracketed {
                    winner,
                    losing_low: k_lo - start,
                    losing_high: k_hi - start,
                });
                if k_lo == k_hi {
                    return RaceOutcome {
                        result: RaceResult::Decided {
                            winner,
                            losing_number: k_lo - self.clocks[loser].start,
                        },
                        decision_confidence: ctx.delta,
                        horizon_used: b.horizon,
                    };
                }
            }
        }
        RaceOutcome {
            result: bracket.unwrap_or(RaceResult::Censored),
            decision_confidence: ctx.delta,
            horizon_used: last,
        }
    }
}

/// Runs one race from `state` on the clocks of `replicate`.
pub fn race_to_monopoly(ctx: &RaceContext, state: &UrnState, replicate: &Replicate) -> Result<RaceOutcome> {
    Ok(ClockPair::new(state, replicate)?.race(ctx))
}

/// `HasMoreThan(beta, N)`: bin 1 holds at least `ceil(beta N)` balls at total `N`.
pub fn has_more_than_event(
    pair: &mut ClockPair,
    beta: Fraction,
    total: u64,
    rates: &RateTable,
) -> Result<bool> {
    if total < pair.initial_total() {
        return Err(Error::domain(format!(
            "total {total} is below the initial total {}",
            pair.initial_total()
        )));
    }
    if !beta.is_open_unit() {
        return Err(Error::domain(format!("beta must be in (0, 1), got {beta}")));
    }
    Ok(pair.has_at_least(0, beta.ceil_mul(total), total, rates))
}

/// `|I_1 - I_2| <= q` at total `n`.
pub fn window_event(pair: &mut ClockPair, q: u64, n: u64, rates: &RateTable) -> Result<bool> {
    if n < pair.initial_total() {
        return Err(Error::domain(format!(
            "total {n} is below the initial total {}",
            pair.initial_total()
        )));
    }
    Ok(pair.window(q, n, rates))
}

/// Outcome of monitoring `HasMoreThan(beta, N)` over all `N >= n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImbalanceOutcome {
    /// The event held at this total (`None` when it is only certified to
    /// happen eventually because bin 1 wins).
    Occurred { total: Option<u64> },
    Avoided,
    Censored,
}

impl ClockPair {
    /// Decides whether bin 1 ever holds at least `ceil(beta N)` balls.
    ///
    /// Arrivals are replayed in time order while both clocks are sampled.
    /// Once bin 2's win is certified, bin 1 can gain at most `K_hi` balls in
    /// total and bin 2 never drops below its current count, which bounds
    /// every future share of bin 1.
    pub fn monitor_imbalance(&mut self, beta: Fraction, ctx: &RaceContext) -> (ImbalanceOutcome, u64) {
        let reaches = |c: u64, y: u64| c >= beta.ceil_mul(c + y);
        let (mut x, mut y) = (self.clocks[0].start, self.clocks[1].start);
        if reaches(x, y) {
            return (ImbalanceOutcome::Occurred { total: Some(x + y) }, 0);
        }
        let mut last = x.max(y);
        for b in ctx.horizons_above(x.max(y)) {
            let h = b.horizon;
            last = h;
            self.extend_to(h, &ctx.rates);
            while x < h && y < h {
                if self.clocks[0].arrival(x + 1) < self.clocks[1].arrival(y + 1) {
                    x += 1;
                    if reaches(x, y) {
                        return (ImbalanceOutcome::Occurred { total: Some(x + y) }, h);
                    }
                } else {
                    y += 1;
                }
            }
            let (_, hi1) = explosion_bounds(self, 0, b);
            if hi1 < self.clocks[1].arrival(h) {
                return (ImbalanceOutcome::Occurred { total: None }, h);
            }
            let (_, hi2) = explosion_bounds(self, 1, b);
            if hi2 < self.clocks[0].arrival(h) {
                let k_hi = self.clocks[0].count_before(hi2);
                if !(x + 1..=k_hi).any(|c| reaches(c, y)) {
                    return (ImbalanceOutcome::Avoided, h);
                }
            }
        }
        (ImbalanceOutcome::Censored, last)
    }
}

/// Samples the centred tail `B_n - S_1(n)`, where `B_n = sum_{j >= n} X(j)`.
///
/// Increments from `n` to `truncate_at - 1` are drawn; the remainder is
/// replaced by its mean `S_1(truncate_at)`.
pub fn sample_centred_tail(
    ctx: &RaceContext,
    n: u64,
    truncate_at: u64,
    replicate: &Replicate,
) -> Result<f64> {
    if truncate_at < n || n == 0 {
        return Err(Error::domain(format!("truncation {truncate_at} below start {n}")));
    }
    let mut clock = BinClock::new(0, n, replicate);
    clock.extend_to(truncate_at, &ctx.rates);
    let sampled = clock.arrival(truncate_at);
    Ok(sampled + ctx.s1.tail(truncate_at)? - ctx.s1.tail(n)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrete::enumerate_paths;
    use crate::stream::RandomStream;

    fn sq() -> FeedbackFunction {
        FeedbackFunction::power(2.0).unwrap()
    }

    #[test]
    fn extension_is_consistent() {
        let rep = RandomStream::new(4).replicate(2);
        let rates = RateTable::new(&sq(), 100);
        let mut a = BinClock::new(0, 3, &rep);
        a.extend_to(10, &rates);
        a.extend_to(50, &rates);
        let mut b = BinClock::new(0, 3, &rep);
        b.extend_to(50, &rates);
        assert_eq!(a.partial_sums(), b.partial_sums());
        assert!(a.partial_sums().windows(2).all(|w| w[1] > w[0]));
        // increments are keyed by index, not by start
        let mut c = BinClock::new(0, 7, &rep);
        c.extend_to(20, &rates);
        assert!((c.increment(12) - a.increment(12)).abs() < 1e-15);
    }

    #[test]
    fn infeasible_has_more_than_is_false() {
        let rep = RandomStream::new(1).replicate(0);
        let rates = RateTable::new(&sq(), 0);
        let mut pair = ClockPair::new(&UrnState::two(40, 60).unwrap(), &rep).unwrap();
        assert!(!has_more_than_event(&mut pair, "0.45".parse().unwrap(), 101, &rates).unwrap());
        assert_eq!(pair.clock(0).horizon(), 40, "no sampling needed");
    }

    #[test]
    fn window_always_holds_for_large_q() {
        let rates = RateTable::new(&sq(), 0);
        for r in 0..50 {
            let mut pair = ClockPair::new(&UrnState::two(1, 1).unwrap(), &RandomStream::new(2).replicate(r)).unwrap();
            assert!(pair.window(20, 20, &rates));
            assert!(pair.window(19, 20, &rates));
        }
    }

    #[test]
    fn window_matches_merged_state() {
        let rates = RateTable::new(&sq(), 0);
        for r in 0..500 {
            let rep = RandomStream::new(3).replicate(r);
            let mut pair = ClockPair::new(&UrnState::two(2, 1).unwrap(), &rep).unwrap();
            for n in 3..30 {
                let [i, j] = pair.state_at_total(n, &rates);
                assert_eq!(i + j, n);
                for q in 0..n {
                    assert_eq!(pair.window(q, n, &rates), i.abs_diff(j) <= q, "r={r} n={n} q={q}");
                }
                for b in 1..=n {
                    assert_eq!(pair.has_at_least(0, b, n, &rates), i >= b);
                }
            }
        }
    }

    #[test]
    fn embedded_two_step_law() {
        let rates = RateTable::new(&sq(), 0);
        let exact = enumerate_paths(&sq(), &UrnState::two(1, 1).unwrap(), 2).unwrap();
        let n = 200_000u64;
        let mut counts = std::collections::HashMap::new();
        for r in 0..n {
            let mut pair = ClockPair::new(&UrnState::two(1, 1).unwrap(), &RandomStream::new(8).replicate(r)).unwrap();
            let t = pair.embedded_steps(2, &rates);
            *counts.entry(t.terminal().counts().to_vec()).or_insert(0u64) += 1;
        }
        for (state, p) in &exact.entries {
            let hat = counts.get(state.counts()).copied().unwrap_or(0) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((hat - p).abs() < 4.0 * se, "{state:?}: {hat} vs {p}");
        }
    }

    #[test]
    fn race_is_deterministic_and_consistent() {
        let ctx = RaceContext::new(&sq(), 1e-9, DEFAULT_CAP).unwrap();
        let state = UrnState::two(1, 1).unwrap();
        for r in 0..2000 {
            let rep = RandomStream::new(21).replicate(r);
            let a = race_to_monopoly(&ctx, &state, &rep).unwrap();
            assert_eq!(a, race_to_monopoly(&ctx, &state, &rep).unwrap());
            assert!(a.winner().is_some(), "censored at replicate {r}");
            if let RaceResult::Decided { winner, losing_number } = a.result {
                let mut pair = ClockPair::new(&state, &rep).unwrap();
                pair.extend_to(a.horizon_used, ctx.rates());
                let loser = pair.clock(1 - winner);
                assert!(loser.horizon() > 1 + losing_number);
            }
        }
    }

    #[test]
    fn close_race_is_bracketed() {
        // a near tie: L is about 8000 and cannot be resolved below the cap
        let ctx = RaceContext::new(&sq(), 1e-9, DEFAULT_CAP).unwrap();
        let rep = RandomStream::new(21).replicate(668);
        let out = race_to_monopoly(&ctx, &UrnState::two(1, 1).unwrap(), &rep).unwrap();
        let RaceResult::Bracketed { losing_low, losing_high, .. } = out.result else {
            panic!("{out:?}");
        };
        assert!(losing_low < losing_high && losing_high - losing_low < 20);
        assert_eq!(out.losing_exceeds(80), Some(true));
        assert_eq!(out.losing_exceeds(losing_low), None);
    }

    #[test]
    fn horizons_respect_moment_condition() {
        let ctx = RaceContext::new(&sq(), 1e-9, DEFAULT_CAP).unwrap();
        // 1/sqrt(S_2(h)) ~ sqrt(3) h^1.5 <= h^2 / 2 needs h >= 12
        assert_eq!(ctx.bounds[0].horizon, 16);
        assert_eq!(ctx.bounds.last().unwrap().horizon, DEFAULT_CAP);
        assert!((ctx.deviation_multiplier() - (2.0 + 1e9f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn small_imbalance_occurs() {
        let ctx = RaceContext::new(&sq(), 1e-9, DEFAULT_CAP).unwrap();
        let state = UrnState::with_fraction(10, "0.3".parse().unwrap()).unwrap();
        let beta: Fraction = "0.4".parse().unwrap();
        let mut hits = 0;
        for r in 0..2000 {
            let mut pair = ClockPair::new(&state, &RandomStream::new(5).replicate(r)).unwrap();
            let (out, _) = pair.monitor_imbalance(beta, &ctx);
            assert_ne!(out, ImbalanceOutcome::Censored);
            if matches!(out, ImbalanceOutcome::Occurred { .. }) {
                hits += 1;
            }
        }
        assert!(hits > 0);
    }

    #[test]
    fn centred_tail_has_small_mean() {
        let ctx = RaceContext::new(&sq(), 1e-9, DEFAULT_CAP).unwrap();
        let n = 20_000u64;
        let mean = (0..n)
            .map(|r| sample_centred_tail(&ctx, 256, 1024, &RandomStream::new(6).replicate(r)).unwrap())
            .sum::<f64>()
            / n as f64;
        let sd = ctx.sums().tail(256).unwrap() * 0.05;
        assert!(mean.abs() < sd, "{mean}");
    }
}
