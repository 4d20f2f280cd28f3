//! I.i.d. estimator streams.
//!
//! An [`EstimatorStream`] draws from one of a handful of built-in laws with a
//! declared [`SupportSpec`]. Two transformers sit on top of any [`Stream`]:
//!
//! - [`CoupledStream`] mixes base draws with a fixed fallback value so that the
//!   mean moves from `λ_X` to a chosen `λ_Y` while each emission still equals
//!   the base draw with probability `1 − ε`. It needs the base mean and is a
//!   test harness, not an estimation tool.
//! - [`Coinified`] maps a stream on `[a, b]` to `{0, 1}` coins with mean
//!   `(λ − a) / (b − a)` using one auxiliary uniform per coin.

use std::fmt;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{component_seed, open_unit, rng_from_seed, SimRng};

/// Tolerance on the total mass of a discrete law before it is renormalised.
pub const PROB_SUM_TOLERANCE: f64 = 1e-12;

/// The set a stream's draws are guaranteed to lie in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SupportSpec {
    FullReal,
    LowerBounded { a: f64 },
    UpperBounded { b: f64 },
    Interval { a: f64, b: f64 },
}

impl SupportSpec {
    pub fn interval(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(invalid(format!("interval requires finite a < b, got [{a}, {b}]")));
        }
        Ok(SupportSpec::Interval { a, b })
    }

    pub fn lower_bounded(a: f64) -> Result<Self> {
        if !a.is_finite() {
            return Err(invalid(format!("lower bound must be finite, got {a}")));
        }
        Ok(SupportSpec::LowerBounded { a })
    }

    pub fn upper_bounded(b: f64) -> Result<Self> {
        if !b.is_finite() {
            return Err(invalid(format!("upper bound must be finite, got {b}")));
        }
        Ok(SupportSpec::UpperBounded { b })
    }

    pub fn lower(&self) -> Option<f64> {
        match *self {
            SupportSpec::LowerBounded { a } | SupportSpec::Interval { a, .. } => Some(a),
            _ => None,
        }
    }

    pub fn upper(&self) -> Option<f64> {
        match *self {
            SupportSpec::UpperBounded { b } | SupportSpec::Interval { b, .. } => Some(b),
            _ => None,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        if x.is_nan() {
            return false;
        }
        self.lower().is_none_or(|a| x >= a) && self.upper().is_none_or(|b| x <= b)
    }

    /// Whether every point of `lo..=hi` lies in this set.
    fn covers(&self, lo: f64, hi: f64) -> bool {
        self.lower().is_none_or(|a| lo >= a) && self.upper().is_none_or(|b| hi <= b)
    }

    fn from_bounds(lower: Option<f64>, upper: Option<f64>) -> Self {
        match (lower, upper) {
            (Some(a), Some(b)) if a < b => SupportSpec::Interval { a, b },
            (Some(a), _) => SupportSpec::LowerBounded { a },
            (None, Some(b)) => SupportSpec::UpperBounded { b },
            (None, None) => SupportSpec::FullReal,
        }
    }
}

impl fmt::Display for SupportSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupportSpec::FullReal => write!(f, "(-inf, inf)"),
            SupportSpec::LowerBounded { a } => write!(f, "[{a}, inf)"),
            SupportSpec::UpperBounded { b } => write!(f, "(-inf, {b}]"),
            SupportSpec::Interval { a, b } => write!(f, "[{a}, {b}]"),
        }
    }
}

/// Finite discrete law with cumulative table for inversion sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    values: Vec<f64>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(invalid("discrete law needs equally many values and probs, at least one"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("discrete values must be finite"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(invalid("discrete probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(invalid("discrete probabilities sum to zero"));
        }
        let probs = if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            log::warn!("discrete probabilities sum to {total}; renormalising");
            probs.iter().map(|p| p / total).collect()
        } else {
            probs
        };
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            values,
            probs,
            cumulative,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.values[idx.min(self.values.len() - 1)]
    }
}

/// Built-in input laws.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    PointMass(f64),
    Uniform { a: f64, b: f64 },
    Gaussian { mean: f64, sd: f64 },
    ShiftedExponential { shift: f64, rate: f64 },
    DiscreteFinite(DiscreteLaw),
    Bernoulli(f64),
}

impl Distribution {
    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        DiscreteLaw::new(values, probs).map(Distribution::DiscreteFinite)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Distribution::PointMass(v) if !v.is_finite() => Err(invalid("point mass must be finite")),
            Distribution::Uniform { a, b } if !(a.is_finite() && b.is_finite() && a < b) => {
                Err(invalid(format!("uniform requires a < b, got [{a}, {b}]")))
            }
            Distribution::Gaussian { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd > 0.0) => {
                Err(invalid("gaussian requires finite mean and sd > 0"))
            }
            Distribution::ShiftedExponential { shift, rate }
                if !(shift.is_finite() && rate.is_finite() && rate > 0.0) =>
            {
                Err(invalid("shifted exponential requires finite shift and rate > 0"))
            }
            Distribution::Bernoulli(p) if !(0.0..=1.0).contains(&p) => {
                Err(invalid(format!("bernoulli p must be in [0, 1], got {p}")))
            }
            _ => Ok(()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Distribution::PointMass(v) => *v,
            Distribution::Uniform { a, b } => 0.5 * (a + b),
            Distribution::Gaussian { mean, .. } => *mean,
            Distribution::ShiftedExponential { shift, rate } => shift + 1.0 / rate,
            Distribution::DiscreteFinite(law) => law.mean(),
            Distribution::Bernoulli(p) => *p,
        }
    }

    /// Smallest built-in support the law fits in.
    pub fn natural_support(&self) -> SupportSpec {
        match self {
            Distribution::PointMass(v) => SupportSpec::LowerBounded { a: *v },
            Distribution::Uniform { a, b } => SupportSpec::Interval { a: *a, b: *b },
            Distribution::Gaussian { .. } => SupportSpec::FullReal,
            Distribution::ShiftedExponential { shift, .. } => SupportSpec::LowerBounded { a: *shift },
            Distribution::DiscreteFinite(law) => {
                let (lo, hi) = value_range(law.values());
                SupportSpec::from_bounds(Some(lo), (hi > lo).then_some(hi))
            }
            Distribution::Bernoulli(_) => SupportSpec::Interval { a: 0.0, b: 1.0 },
        }
    }

    /// Range of values the law can produce, as `(lo, hi)`.
    fn range(&self) -> (f64, f64) {
        match self {
            Distribution::PointMass(v) => (*v, *v),
            Distribution::Uniform { a, b } => (*a, *b),
            Distribution::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Distribution::ShiftedExponential { shift, .. } => (*shift, f64::INFINITY),
            Distribution::DiscreteFinite(law) => value_range(law.values()),
            Distribution::Bernoulli(p) => {
                let lo = if *p < 1.0 { 0.0 } else { 1.0 };
                let hi = if *p > 0.0 { 1.0 } else { 0.0 };
                (lo, hi)
            }
        }
    }

    fn sample(&self, rng: &mut SimRng) -> f64 {
        match self {
            Distribution::PointMass(v) => *v,
            Distribution::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            Distribution::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sd * z
            }
            Distribution::ShiftedExponential { shift, rate } => {
                let e: f64 = rng.sample(Exp1);
                shift + e / rate
            }
            Distribution::DiscreteFinite(law) => law.sample(rng),
            Distribution::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn value_range(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// A source of i.i.d. real draws.
pub trait Stream {
    fn sample(&mut self) -> f64;

    fn support(&self) -> SupportSpec;

    /// Analytic mean, when known. Only test oracles read this.
    fn known_mean(&self) -> Option<f64> {
        None
    }

    fn seed(&self) -> u64;

    /// Same law, fresh generator state from `seed`.
    fn fork(&self, seed: u64) -> Self
    where
        Self: Sized;
}

/// Seeded i.i.d. sampler from a built-in [`Distribution`].
#[derive(Debug, Clone)]
pub struct EstimatorStream {
    distribution: Distribution,
    support: SupportSpec,
    known_mean: Option<f64>,
    seed: u64,
    rng: SimRng,
}

impl EstimatorStream {
    /// Stream over `distribution` with its natural support.
    pub fn new(distribution: Distribution, seed: u64) -> Result<Self> {
        distribution.validate()?;
        Ok(Self {
            support: distribution.natural_support(),
            known_mean: Some(distribution.mean()),
            distribution,
            seed,
            rng: rng_from_seed(seed),
        })
    }

    pub fn point_mass(v: f64, seed: u64) -> Result<Self> {
        Self::new(Distribution::PointMass(v), seed)
    }

    pub fn uniform(a: f64, b: f64, seed: u64) -> Result<Self> {
        Self::new(Distribution::Uniform { a, b }, seed)
    }

    pub fn gaussian(mean: f64, sd: f64, seed: u64) -> Result<Self> {
        Self::new(Distribution::Gaussian { mean, sd }, seed)
    }

    pub fn shifted_exponential(shift: f64, rate: f64, seed: u64) -> Result<Self> {
        Self::new(Distribution::ShiftedExponential { shift, rate }, seed)
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>, seed: u64) -> Result<Self> {
        Self::new(Distribution::discrete(values, probs)?, seed)
    }

    pub fn bernoulli(p: f64, seed: u64) -> Result<Self> {
        Self::new(Distribution::Bernoulli(p), seed)
    }

    /// Declare a wider support, e.g. `[a, b]` for a point mass inside it.
    /// The declared set must contain every value the law can produce.
    pub fn with_support(mut self, support: SupportSpec) -> Result<Self> {
        if let SupportSpec::Interval { a, b } = support {
            SupportSpec::interval(a, b)?;
        }
        let (lo, hi) = self.distribution.range();
        if !support.covers(lo, hi) {
            return Err(Error::UnsupportedSupport(format!(
                "declared support {support} does not contain the law's range [{lo}, {hi}]"
            )));
        }
        self.support = support;
        Ok(self)
    }

    /// Drop the analytic mean, as a real user of the stream would not have it.
    pub fn without_known_mean(mut self) -> Self {
        self.known_mean = None;
        self
    }

    pub fn distribution(&self) -> &Distribution {
        &self.distribution
    }
}

impl Stream for EstimatorStream {
    fn sample(&mut self) -> f64 {
        let x = self.distribution.sample(&mut self.rng);
        debug_assert!(self.support.contains(x), "draw {x} outside declared support {}", self.support);
        x
    }

    fn support(&self) -> SupportSpec {
        self.support
    }

    fn known_mean(&self) -> Option<f64> {
        self.known_mean
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            rng: rng_from_seed(seed),
            seed,
            ..self.clone()
        }
    }
}

/// Output of [`CoupledStream::sample_tagged`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaggedDraw {
    pub value: f64,
    /// The base draw this emission was built from (consumed either way).
    pub base: f64,
    pub from_base: bool,
}

/// Emits the base draw with probability `1 − ε`, otherwise the fixed
/// fallback `(λ_Y − λ_X (1 − ε)) / ε`, so the emitted mean is `λ_Y`.
///
/// A base draw is consumed on every emission, so a coupled stream and a fork
/// of its base with the same seed see the same base sequence.
///
/// Test-only in spirit: building it needs the base mean `λ_X`, which a real
/// user of an estimator stream never has.
#[derive(Debug, Clone)]
pub struct CoupledStream<S> {
    base: S,
    base_mean: f64,
    target_mean: f64,
    epsilon: f64,
    fallback: f64,
    support: SupportSpec,
    selector: SimRng,
    fallbacks: u64,
}

/// Builds the coupled stream of `base` shifted to mean `lambda_y`.
pub fn couple<S: Stream>(base: S, lambda_y: f64, epsilon: f64) -> Result<CoupledStream<S>> {
    let base_mean = base.known_mean().ok_or(Error::MissingKnownMean)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange(epsilon));
    }
    if !lambda_y.is_finite() {
        return Err(invalid("target mean must be finite"));
    }
    let fallback = (lambda_y - base_mean * (1.0 - epsilon)) / epsilon;
    let support = coupled_support(base.support(), fallback);
    let selector = rng_from_seed(component_seed(base.seed(), "coupling.selector"));
    Ok(CoupledStream {
        base,
        base_mean,
        target_mean: lambda_y,
        epsilon,
        fallback,
        support,
        selector,
        fallbacks: 0,
    })
}

/// The base support if it already holds the fallback. Otherwise keep the
/// lower bound (widening the top) when the fallback sits above it, and give
/// up on any bound when it does not.
fn coupled_support(base: SupportSpec, fallback: f64) -> SupportSpec {
    if base.contains(fallback) {
        return base;
    }
    match base.lower() {
        Some(a) if fallback >= a => {
            let hi = base.upper().map(|b| b.max(fallback));
            SupportSpec::from_bounds(Some(a), hi)
        }
        _ => SupportSpec::FullReal,
    }
}

impl<S: Stream> CoupledStream<S> {
    pub fn fallback(&self) -> f64 {
        self.fallback
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn base_mean(&self) -> f64 {
        self.base_mean
    }

    pub fn base(&self) -> &S {
        &self.base
    }

    /// Fallback emissions so far.
    pub fn fallbacks(&self) -> u64 {
        self.fallbacks
    }

    pub fn sample_tagged(&mut self) -> TaggedDraw {
        let base = self.base.sample();
        let from_base = self.selector.random::<f64>() >= self.epsilon;
        self.fallbacks += u64::from(!from_base);
        TaggedDraw {
            value: if from_base { base } else { self.fallback },
            base,
            from_base,
        }
    }
}

impl<S: Stream> Stream for CoupledStream<S> {
    fn sample(&mut self) -> f64 {
        self.sample_tagged().value
    }

    fn support(&self) -> SupportSpec {
        self.support
    }

    fn known_mean(&self) -> Option<f64> {
        Some(self.target_mean)
    }

    fn seed(&self) -> u64 {
        self.base.seed()
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            base: self.base.fork(seed),
            base_mean: self.base_mean,
            target_mean: self.target_mean,
            epsilon: self.epsilon,
            fallback: self.fallback,
            support: self.support,
            selector: rng_from_seed(component_seed(seed, "coupling.selector")),
            fallbacks: 0,
        }
    }
}

/// Coins `1{U ≤ (X − a)/(b − a)}` from a stream on `[a, b]`.
#[derive(Debug, Clone)]
pub struct Coinified<S> {
    base: S,
    a: f64,
    b: f64,
    aux: SimRng,
    base_draws: u64,
    aux_draws: u64,
}

pub fn coinify<S: Stream>(stream: S) -> Result<Coinified<S>> {
    let (a, b) = match stream.support() {
        SupportSpec::Interval { a, b } => (a, b),
        other => {
            return Err(Error::UnsupportedSupport(format!(
                "coinify needs a bounded interval support, got {other}"
            )))
        }
    };
    let aux = rng_from_seed(component_seed(stream.seed(), "coinify.aux"));
    Ok(Coinified {
        base: stream,
        a,
        b,
        aux,
        base_draws: 0,
        aux_draws: 0,
    })
}

impl<S: Stream> Coinified<S> {
    /// Base draws and auxiliary uniforms consumed so far.
    pub fn draws(&self) -> (u64, u64) {
        (self.base_draws, self.aux_draws)
    }

    pub fn flip(&mut self) -> bool {
        let x = self.base.sample();
        let u = open_unit(&mut self.aux);
        self.base_draws += 1;
        self.aux_draws += 1;
        u <= (x - self.a) / (self.b - self.a)
    }
}

impl<S: Stream> Stream for Coinified<S> {
    fn sample(&mut self) -> f64 {
        if self.flip() {
            1.0
        } else {
            0.0
        }
    }

    fn support(&self) -> SupportSpec {
        SupportSpec::Interval { a: 0.0, b: 1.0 }
    }

    fn known_mean(&self) -> Option<f64> {
        self.base
            .known_mean()
            .map(|m| (m - self.a) / (self.b - self.a))
    }

    fn seed(&self) -> u64 {
        self.base.seed()
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            base: self.base.fork(seed),
            a: self.a,
            b: self.b,
            aux: rng_from_seed(component_seed(seed, "coinify.aux")),
            base_draws: 0,
            aux_draws: 0,
        }
    }
}

/// Replays a fixed word of values, cycling when exhausted.
///
/// Not i.i.d.: this exists to drive estimators through every input word when
/// computing expectations by exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct ReplayStream {
    values: Vec<f64>,
    support: SupportSpec,
    pos: usize,
}

impl ReplayStream {
    pub fn new(values: Vec<f64>, support: SupportSpec) -> Result<Self> {
        if let Some(x) = values.iter().find(|x| !support.contains(**x)) {
            return Err(Error::UnsupportedSupport(format!("replayed value {x} outside {support}")));
        }
        Ok(Self {
            values,
            support,
            pos: 0,
        })
    }
}

impl Stream for ReplayStream {
    fn sample(&mut self) -> f64 {
        let x = self.values[self.pos % self.values.len()];
        self.pos += 1;
        x
    }

    fn support(&self) -> SupportSpec {
        self.support
    }

    fn seed(&self) -> u64 {
        0
    }

    fn fork(&self, _seed: u64) -> Self {
        Self {
            pos: 0,
            ..self.clone()
        }
    }
}
