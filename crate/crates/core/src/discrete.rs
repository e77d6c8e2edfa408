//! The discrete-time chain: a new ball joins bin `i` with probability
//! proportional to `f(count_i)`. Works for any number of bins.

use std::collections::BTreeMap;
use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::feedback::{FeedbackFunction, FeedbackKind};
use crate::fraction::Fraction;

/// Largest number of paths `B^m` the enumeration oracle accepts.
pub const MAX_ENUMERATED_PATHS: u64 = 4096;

/// Ball counts per bin; every count is at least one.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UrnState {
    counts: Vec<u64>,
}

impl UrnState {
    pub fn new(counts: Vec<u64>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::domain("an urn needs at least two bins"));
        }
        if counts.contains(&0) {
            return Err(Error::domain(format!("every bin needs at least one ball: {counts:?}")));
        }
        Ok(Self { counts })
    }

    pub fn two(x: u64, y: u64) -> Result<Self> {
        Self::new(vec![x, y])
    }

    /// The state `[n, alpha] = (ceil(alpha n), n - ceil(alpha n))`.
    pub fn with_fraction(n: u64, alpha: Fraction) -> Result<Self> {
        let first = alpha.ceil_mul(n);
        if first == 0 || first >= n {
            return Err(Error::domain(format!(
                "[{n}, {alpha}] leaves a bin empty (bin 1 gets {first})"
            )));
        }
        Self::two(first, n - first)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add_ball(&mut self, bin: usize) {
        self.counts[bin] += 1;
    }

    fn check_bin(&self, bin: usize) -> Result<()> {
        if bin < self.bins() {
            Ok(())
        } else {
            Err(Error::domain(format!("bin index {bin} out of range for {} bins", self.bins())))
        }
    }
}

/// Normalised probabilities of each bin receiving the next ball, computed
/// from `ln f` so that huge counts do not overflow.
fn step_weights(fb: &FeedbackFunction, state: &UrnState, out: &mut Vec<f64>) {
    out.clear();
    out.extend(state.counts.iter().map(|&c| fb.ln_value(c as f64).unwrap_or(0.0)));
    let top = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for w in out.iter_mut() {
        *w = (*w - top).exp();
        total += *w;
    }
    for w in out.iter_mut() {
        *w /= total;
    }
}

/// Probability `f(c_i) / sum_j f(c_j)` that bin `i` (0-based) gets the next ball.
pub fn step_probability(fb: &FeedbackFunction, state: &UrnState, bin: usize) -> Result<f64> {
    state.check_bin(bin)?;
    let mut w = Vec::with_capacity(state.bins());
    step_weights(fb, state, &mut w);
    Ok(w[bin])
}

/// States visited by the chain, stored flat.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    bins: usize,
    counts: Vec<u64>,
}

impl Trajectory {
    pub fn new(initial: &UrnState) -> Self {
        Self {
            bins: initial.bins(),
            counts: initial.counts.clone(),
        }
    }

    pub fn push(&mut self, state: &UrnState) {
        debug_assert_eq!(state.bins(), self.bins);
        self.counts.extend_from_slice(&state.counts);
    }

    pub fn len(&self) -> usize {
        self.counts.len() / self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn state(&self, step: usize) -> UrnState {
        UrnState {
            counts: self.counts[step * self.bins..(step + 1) * self.bins].to_vec(),
        }
    }

    pub fn terminal(&self) -> UrnState {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> impl Iterator<Item = &[u64]> + '_ {
        self.counts.chunks_exact(self.bins)
    }

    /// CSV with header `step,bin_1,...,bin_B`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["step".to_string()];
        header.extend((1..=self.bins).map(|b| format!("bin_{b}")));
        out.write_record(&header)?;
        for (step, counts) in self.states().enumerate() {
            let mut row = vec![step.to_string()];
            row.extend(counts.iter().map(u64::to_string));
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Runs `m` steps of the chain from `state`.
pub fn simulate_steps<R: Rng + ?Sized>(
    fb: &FeedbackFunction,
    state: &UrnState,
    m: u64,
    rng: &mut R,
) -> Trajectory {
    let mut trajectory = Trajectory::new(state);
    let mut current = state.clone();
    let mut weights = Vec::with_capacity(state.bins());
    for _ in 0..m {
        step_weights(fb, &current, &mut weights);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = weights.len() - 1;
        for (i, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                chosen = i;
                break;
            }
        }
        current.add_ball(chosen);
        trajectory.push(&current);
    }
    trajectory
}

/// Exact law of the state after `horizon` steps.
#[derive(Debug, Clone)]
pub struct PathDistribution {
    pub horizon: u64,
    /// Terminal states with their probabilities, in lexicographic order.
    pub entries: Vec<(UrnState, f64)>,
    /// Rational probabilities, present when `f` is integer-valued.
    pub exact: Option<Vec<BigRational>>,
}

impl PathDistribution {
    pub fn probability(&self, counts: &[u64]) -> f64 {
        self.entries
            .iter()
            .find(|(s, _)| s.counts() == counts)
            .map_or(0.0, |(_, p)| *p)
    }

    pub fn total_mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }
}

fn integer_power(fb: &FeedbackFunction) -> Option<u32> {
    match fb.kind() {
        FeedbackKind::Power { p } if p.fract() == 0.0 && *p >= 1.0 && *p <= 64.0 => Some(*p as u32),
        _ => None,
    }
}

/// Dynamic programme over states. Rational arithmetic is used when `f` is an
/// integer power; otherwise probabilities are merged with compensated sums.
pub fn enumerate_paths(fb: &FeedbackFunction, state: &UrnState, horizon: u64) -> Result<PathDistribution> {
    let bins = state.bins() as u64;
    let paths = (bins as f64).powf(horizon as f64);
    if paths > MAX_ENUMERATED_PATHS as f64 {
        return Err(Error::HorizonTooLarge(format!(
            "{bins}^{horizon} paths exceed the limit of {MAX_ENUMERATED_PATHS}"
        )));
    }
    match integer_power(fb) {
        Some(p) => Ok(enumerate_exact(state, horizon, p)),
        None => Ok(enumerate_float(fb, state, horizon)),
    }
}

fn enumerate_exact(state: &UrnState, horizon: u64, p: u32) -> PathDistribution {
    let mut layer: BTreeMap<UrnState, BigRational> = BTreeMap::new();
    layer.insert(state.clone(), BigRational::from_integer(1.into()));
    for _ in 0..horizon {
        let mut next: BTreeMap<UrnState, BigRational> = BTreeMap::new();
        for (s, prob) in &layer {
            let weights: Vec<BigInt> = s.counts.iter().map(|&c| BigInt::from(c).pow(p)).collect();
            let total: BigInt = weights.iter().sum();
            for (i, w) in weights.into_iter().enumerate() {
                let mut child = s.clone();
                child.add_ball(i);
                let step = BigRational::new(w, total.clone());
                let entry = next.entry(child).or_insert_with(BigRational::zero);
                *entry += prob * step;
            }
        }
        layer = next;
    }
    let entries = layer
        .iter()
        .map(|(s, q)| (s.clone(), q.to_f64().unwrap_or(f64::NAN)))
        .collect();
    PathDistribution {
        horizon,
        entries,
        exact: Some(layer.into_values().collect()),
    }
}

fn enumerate_float(fb: &FeedbackFunction, state: &UrnState, horizon: u64) -> PathDistribution {
    use crate::feedback::Compensated;
    let mut layer: BTreeMap<UrnState, Compensated> = BTreeMap::new();
    let mut one = Compensated::default();
    one.add(1.0);
    layer.insert(state.clone(), one);
    let mut weights = Vec::new();
    for _ in 0..horizon {
        let mut next: BTreeMap<UrnState, Compensated> = BTreeMap::new();
        for (s, prob) in &layer {
            step_weights(fb, s, &mut weights);
            for (i, w) in weights.iter().enumerate() {
                let mut child = s.clone();
                child.add_ball(i);
                next.entry(child).or_default().add(prob.value() * w);
            }
        }
        layer = next;
    }
    PathDistribution {
        horizon,
        entries: layer.into_iter().map(|(s, q)| (s, q.value())).collect(),
        exact: None,
    }
}
