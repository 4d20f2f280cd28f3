//! Nonnegative unbiased estimators of `f(λ)` from i.i.d. estimates of `λ`.
//!
//! On `[a, ∞)`, any `f(x) = Σ c_n (x − a)^n` with `c_n ≥ 0` has the factory
//!
//! ```text
//! Y = Σ_{n=0}^{N} w_n c_n Π_{k=1}^{n} (X_k − a)
//! ```
//!
//! which is nonnegative because every factor is, and unbiased by the random
//! truncation argument in [`crate::debias`]. With `c_n = e^a / n!` this is the
//! Poisson estimator of `exp(λ)`. On `[a, b]` with `a > 0`, expanding
//! `1/x = (1/b) Σ ((b − x)/b)^k` gives the inverse factory.
//!
//! Factories compose: sums and products of independent factories, and
//! composition `f ∘ g` when `f` is a series anchored at zero.
//!
//! For bounded inputs, [`BernsteinPoly`] factories turn coins from
//! [`crate::streams::coinify`] into exact estimators of polynomials, and
//! [`condition6_check`] tests the polynomial-envelope condition
//! `f(x) ≥ ε min((x − a)^n, (b − x)^n)` on a grid.

use std::io;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::debias::{rhee_glynn, ApproximationSequence, TruncationLaw};
use crate::error::{invalid, Error, Result};
use crate::replicate::replicate;
use crate::rng::component_seed;
use crate::stats::{CompensatedSum, Estimate, Moments};
use crate::streams::{Coinified, Stream, SupportSpec};

/// Nonnegative coefficient families with closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Coefficients {
    /// `c_n = lead / n!`.
    Exponential { lead: f64 },
    /// `c_n = lead · ratio^n`.
    Geometric { lead: f64, ratio: f64 },
    /// Finitely many coefficients, zero beyond.
    Polynomial { coeffs: Vec<f64> },
}

/// `f(x) = Σ c_n (x − anchor)^n` with `c_n ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    anchor: f64,
    coeffs: Coefficients,
    label: String,
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and nonnegative, got {v}")))
    }
}

impl PowerSeries {
    pub fn new(anchor: f64, coeffs: Coefficients, label: impl Into<String>) -> Result<Self> {
        if !anchor.is_finite() {
            return Err(invalid("series anchor must be finite"));
        }
        match &coeffs {
            Coefficients::Exponential { lead } => nonneg("lead", *lead)?,
            Coefficients::Geometric { lead, ratio } => {
                nonneg("lead", *lead)?;
                nonneg("ratio", *ratio)?;
            }
            Coefficients::Polynomial { coeffs } => {
                for (i, c) in coeffs.iter().enumerate() {
                    nonneg(&format!("c_{i}"), *c)?;
                }
            }
        }
        Ok(Self {
            anchor,
            coeffs,
            label: label.into(),
        })
    }

    /// `exp(x)` expanded at `anchor`: `c_n = exp(anchor) / n!`.
    pub fn exponential(anchor: f64) -> Result<Self> {
        Self::new(anchor, Coefficients::Exponential { lead: anchor.exp() }, "exp")
    }

    /// `lead / (1 − ratio (x − anchor))` for `ratio (x − anchor) < 1`.
    pub fn geometric(anchor: f64, lead: f64, ratio: f64) -> Result<Self> {
        Self::new(anchor, Coefficients::Geometric { lead, ratio }, "geometric")
    }

    pub fn polynomial(anchor: f64, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(anchor, Coefficients::Polynomial { coeffs }, "polynomial")
    }

    pub fn constant(anchor: f64, gamma: f64) -> Result<Self> {
        Self::new(anchor, Coefficients::Polynomial { coeffs: vec![gamma] }, "constant")
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// `c_0, c_1, …`, with factorial-type families computed recursively.
    pub fn coefficient_iter(&self) -> CoefficientIter<'_> {
        CoefficientIter {
            coeffs: &self.coeffs,
            n: 0,
            current: match &self.coeffs {
                Coefficients::Exponential { lead } | Coefficients::Geometric { lead, .. } => *lead,
                Coefficients::Polynomial { coeffs } => coeffs.first().copied().unwrap_or(0.0),
            },
        }
    }

    /// Closed-form `f(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        let h = x - self.anchor;
        match &self.coeffs {
            Coefficients::Exponential { lead } => lead * h.exp(),
            Coefficients::Geometric { lead, ratio } => {
                let r = ratio * h;
                if r.abs() < 1.0 {
                    lead / (1.0 - r)
                } else {
                    f64::INFINITY
                }
            }
            Coefficients::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * h + c),
        }
    }
}

pub struct CoefficientIter<'a> {
    coeffs: &'a Coefficients,
    n: u64,
    current: f64,
}

impl Iterator for CoefficientIter<'_> {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let c = self.current;
        self.n += 1;
        self.current = match self.coeffs {
            Coefficients::Exponential { .. } => self.current / self.n as f64,
            Coefficients::Geometric { ratio, .. } => self.current * ratio,
            Coefficients::Polynomial { coeffs } => coeffs.get(self.n as usize).copied().unwrap_or(0.0),
        };
        Some(c)
    }
}

/// Increments `c_n Π_{k=1}^{n} (X_k − a)` of a power series fed by a stream.
///
/// Inputs are drawn lazily, one per increment after the first.
pub struct PowerSeriesSequence<'a, S: ?Sized> {
    coeffs: CoefficientIter<'a>,
    anchor: f64,
    stream: &'a mut S,
    product: f64,
    started: bool,
    inputs: u64,
    label: &'a str,
}

impl<'a, S: Stream + ?Sized> PowerSeriesSequence<'a, S> {
    pub fn new(series: &'a PowerSeries, stream: &'a mut S) -> Self {
        Self {
            coeffs: series.coefficient_iter(),
            anchor: series.anchor,
            stream,
            product: 1.0,
            started: false,
            inputs: 0,
            label: &series.label,
        }
    }

    pub fn inputs_consumed(&self) -> u64 {
        self.inputs
    }
}

impl<S: Stream + ?Sized> ApproximationSequence for PowerSeriesSequence<'_, S> {
    fn next_increment(&mut self) -> f64 {
        if self.started {
            self.product *= self.stream.sample() - self.anchor;
            self.inputs += 1;
        }
        self.started = true;
        let c = self.coeffs.next().unwrap_or(0.0);
        if c == 0.0 {
            0.0
        } else {
            c * self.product
        }
    }

    fn label(&self) -> &str {
        self.label
    }
}

/// Increments `(1/b) Π_{j=1}^{k} (b − X_j)/b` of the inverse series.
pub struct InverseSeriesSequence<'a, S: ?Sized> {
    upper: f64,
    stream: &'a mut S,
    product: f64,
    started: bool,
    inputs: u64,
}

impl<'a, S: Stream + ?Sized> InverseSeriesSequence<'a, S> {
    pub fn new(upper: f64, stream: &'a mut S) -> Self {
        Self {
            upper,
            stream,
            product: 1.0 / upper,
            started: false,
            inputs: 0,
        }
    }

    pub fn inputs_consumed(&self) -> u64 {
        self.inputs
    }
}

impl<S: Stream + ?Sized> ApproximationSequence for InverseSeriesSequence<'_, S> {
    fn next_increment(&mut self) -> f64 {
        if self.started {
            self.product *= (self.upper - self.stream.sample()) / self.upper;
            self.inputs += 1;
        }
        self.started = true;
        self.product
    }

    fn label(&self) -> &str {
        "inverse"
    }
}

/// One output of a factory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorySample {
    /// Always `≥ 0`.
    pub value: f64,
    /// Input draws (or inner factory draws) consumed.
    pub inputs_consumed: u64,
    /// Realised level of this factory's own truncation draw; for sums and
    /// products, the total over their parts; zero for Bernstein factories.
    pub n_drawn: u64,
}

fn checked(sample: FactorySample) -> FactorySample {
    debug_assert!(sample.value >= 0.0, "factory produced {}", sample.value);
    sample
}

/// Power-series factory. The stream's lower bound must equal the anchor.
pub fn series_factory<S: Stream + ?Sized>(
    series: &PowerSeries,
    stream: &mut S,
    trunc: &mut TruncationLaw,
) -> Result<FactorySample> {
    match stream.support().lower() {
        Some(lower) if lower == series.anchor => {}
        lower => {
            return Err(Error::AnchorMismatch {
                anchor: series.anchor,
                lower: lower.unwrap_or(f64::NEG_INFINITY),
            })
        }
    }
    let mut seq = PowerSeriesSequence::new(series, stream);
    let y = rhee_glynn(&mut seq, trunc)?;
    Ok(checked(FactorySample {
        value: y.value,
        inputs_consumed: seq.inputs_consumed(),
        n_drawn: y.n_drawn,
    }))
}

/// Poisson estimator of `exp(λ)`, anchored at the stream's lower bound.
pub fn poisson_estimator<S: Stream + ?Sized>(stream: &mut S, trunc: &mut TruncationLaw) -> Result<FactorySample> {
    let anchor = stream.support().lower().ok_or_else(|| {
        Error::UnsupportedSupport(format!(
            "poisson estimator needs a lower-bounded stream, got {}",
            stream.support()
        ))
    })?;
    series_factory(&PowerSeries::exponential(anchor)?, stream, trunc)
}

/// The series estimator without any support check. Unbiased for `f(λ)`
/// under integrability, but negative whenever an odd number of factors is.
pub fn signed_series_estimate<S: Stream + ?Sized>(
    series: &PowerSeries,
    stream: &mut S,
    trunc: &mut TruncationLaw,
) -> Result<(f64, u64)> {
    let mut seq = PowerSeriesSequence::new(series, stream);
    let y = rhee_glynn(&mut seq, trunc)?;
    Ok((y.value, y.n_drawn))
}

fn inverse_upper(support: SupportSpec) -> Result<f64> {
    match support {
        SupportSpec::Interval { a, b } if a > 0.0 => Ok(b),
        other => Err(Error::UnsupportedSupport(format!(
            "inverse factory needs support [a, b] with a > 0, got {other}"
        ))),
    }
}

/// Nonnegative unbiased estimator of `1/λ` for a stream on `[a, b]`, `a > 0`.
pub fn inverse_factory<S: Stream + ?Sized>(stream: &mut S, trunc: &mut TruncationLaw) -> Result<FactorySample> {
    let upper = inverse_upper(stream.support())?;
    let mut seq = InverseSeriesSequence::new(upper, stream);
    let y = rhee_glynn(&mut seq, trunc)?;
    Ok(checked(FactorySample {
        value: y.value,
        inputs_consumed: seq.inputs_consumed(),
        n_drawn: y.n_drawn,
    }))
}

/// A repeatable nonnegative unbiased estimator.
pub trait Factory {
    fn draw(&mut self) -> Result<FactorySample>;

    /// Analytic expectation when the inputs' means are known.
    fn target(&self) -> Option<f64>;

    /// Independent copy with generators derived from `seed`.
    fn fork(&self, seed: u64) -> Self
    where
        Self: Sized;
}

/// Object-safe view of a factory, for trees built at runtime.
pub trait DynFactory: Send + Sync {
    fn draw_dyn(&mut self) -> Result<FactorySample>;
    fn target_dyn(&self) -> Option<f64>;
    fn fork_boxed(&self, seed: u64) -> BoxedFactory;
}

impl<F: Factory + Send + Sync + 'static> DynFactory for F {
    fn draw_dyn(&mut self) -> Result<FactorySample> {
        self.draw()
    }

    fn target_dyn(&self) -> Option<f64> {
        self.target()
    }

    fn fork_boxed(&self, seed: u64) -> BoxedFactory {
        BoxedFactory(Box::new(self.fork(seed)))
    }
}

/// A type-erased factory that still forks.
pub struct BoxedFactory(Box<dyn DynFactory>);

impl BoxedFactory {
    pub fn new<F: Factory + Send + Sync + 'static>(f: F) -> Self {
        BoxedFactory(Box::new(f))
    }
}

impl Factory for BoxedFactory {
    fn draw(&mut self) -> Result<FactorySample> {
        self.0.draw_dyn()
    }

    fn target(&self) -> Option<f64> {
        self.0.target_dyn()
    }

    fn fork(&self, seed: u64) -> Self {
        self.0.fork_boxed(seed)
    }
}

/// Always returns `gamma`.
#[derive(Debug, Clone)]
pub struct ConstantFactory {
    gamma: f64,
}

impl ConstantFactory {
    pub fn new(gamma: f64) -> Result<Self> {
        nonneg("gamma", gamma)?;
        Ok(Self { gamma })
    }
}

impl Factory for ConstantFactory {
    fn draw(&mut self) -> Result<FactorySample> {
        Ok(FactorySample {
            value: self.gamma,
            inputs_consumed: 0,
            n_drawn: 0,
        })
    }

    fn target(&self) -> Option<f64> {
        Some(self.gamma)
    }

    fn fork(&self, _seed: u64) -> Self {
        self.clone()
    }
}

/// [`series_factory`] bundled with its stream and truncation law.
#[derive(Debug, Clone)]
pub struct SeriesFactory<S> {
    series: PowerSeries,
    stream: S,
    trunc: TruncationLaw,
}

impl<S: Stream> SeriesFactory<S> {
    pub fn new(series: PowerSeries, stream: S, trunc: TruncationLaw) -> Result<Self> {
        let lower = stream.support().lower();
        if lower != Some(series.anchor) {
            return Err(Error::AnchorMismatch {
                anchor: series.anchor,
                lower: lower.unwrap_or(f64::NEG_INFINITY),
            });
        }
        if !trunc.is_unbounded() {
            return Err(Error::DegenerateTruncation(format!("{:?}", trunc.kind())));
        }
        Ok(Self { series, stream, trunc })
    }

    /// Poisson estimator anchored at the stream's lower bound.
    pub fn poisson(stream: S, trunc: TruncationLaw) -> Result<Self> {
        let anchor = stream.support().lower().ok_or_else(|| {
            Error::UnsupportedSupport(format!(
                "poisson estimator needs a lower-bounded stream, got {}",
                stream.support()
            ))
        })?;
        Self::new(PowerSeries::exponential(anchor)?, stream, trunc)
    }

    pub fn series(&self) -> &PowerSeries {
        &self.series
    }
}

impl<S: Stream> Factory for SeriesFactory<S> {
    fn draw(&mut self) -> Result<FactorySample> {
        series_factory(&self.series, &mut self.stream, &mut self.trunc)
    }

    fn target(&self) -> Option<f64> {
        self.stream.known_mean().map(|m| self.series.eval(m))
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            series: self.series.clone(),
            stream: self.stream.fork(component_seed(seed, "stream")),
            trunc: self.trunc.fork(component_seed(seed, "trunc")),
        }
    }
}

/// [`inverse_factory`] bundled with its stream and truncation law.
#[derive(Debug, Clone)]
pub struct InverseFactory<S> {
    stream: S,
    trunc: TruncationLaw,
}

impl<S: Stream> InverseFactory<S> {
    pub fn new(stream: S, trunc: TruncationLaw) -> Result<Self> {
        inverse_upper(stream.support())?;
        if !trunc.is_unbounded() {
            return Err(Error::DegenerateTruncation(format!("{:?}", trunc.kind())));
        }
        Ok(Self { stream, trunc })
    }
}

impl<S: Stream> Factory for InverseFactory<S> {
    fn draw(&mut self) -> Result<FactorySample> {
        inverse_factory(&mut self.stream, &mut self.trunc)
    }

    fn target(&self) -> Option<f64> {
        self.stream.known_mean().map(|m| 1.0 / m)
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            stream: self.stream.fork(component_seed(seed, "stream")),
            trunc: self.trunc.fork(component_seed(seed, "trunc")),
        }
    }
}

/// `f + g` from one draw of each.
#[derive(Debug, Clone)]
pub struct SumFactory<A, B> {
    left: A,
    right: B,
}

pub fn sum_factory<A: Factory, B: Factory>(left: A, right: B) -> SumFactory<A, B> {
    SumFactory { left, right }
}

impl<A: Factory, B: Factory> Factory for SumFactory<A, B> {
    fn draw(&mut self) -> Result<FactorySample> {
        let l = self.left.draw()?;
        let r = self.right.draw()?;
        Ok(checked(FactorySample {
            value: l.value + r.value,
            inputs_consumed: l.inputs_consumed + r.inputs_consumed,
            n_drawn: l.n_drawn + r.n_drawn,
        }))
    }

    fn target(&self) -> Option<f64> {
        Some(self.left.target()? + self.right.target()?)
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            left: self.left.fork(component_seed(seed, "left")),
            right: self.right.fork(component_seed(seed, "right")),
        }
    }
}

/// `f × g` from one draw of each. The two parts own separate generators, so
/// their draws are independent and `E[XY] = E[X] E[Y]` applies.
#[derive(Debug, Clone)]
pub struct ProductFactory<A, B> {
    left: A,
    right: B,
}

pub fn product_factory<A: Factory, B: Factory>(left: A, right: B) -> ProductFactory<A, B> {
    ProductFactory { left, right }
}

impl<A: Factory, B: Factory> Factory for ProductFactory<A, B> {
    fn draw(&mut self) -> Result<FactorySample> {
        let l = self.left.draw()?;
        let r = self.right.draw()?;
        Ok(checked(FactorySample {
            value: l.value * r.value,
            inputs_consumed: l.inputs_consumed + r.inputs_consumed,
            n_drawn: l.n_drawn + r.n_drawn,
        }))
    }

    fn target(&self) -> Option<f64> {
        Some(self.left.target()? * self.right.target()?)
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            left: self.left.fork(component_seed(seed, "left")),
            right: self.right.fork(component_seed(seed, "right")),
        }
    }
}

/// `f ∘ g`: `Σ_{n=0}^{N} w_n c_n Π_{k=1}^{n} G_k` with a fresh inner draw
/// `G_k` for every factor. Needs `f` anchored at zero.
#[derive(Debug, Clone)]
pub struct ComposeFactory<F> {
    outer: PowerSeries,
    inner: F,
    trunc: TruncationLaw,
}

pub fn compose_factory<F: Factory>(outer: PowerSeries, inner: F, trunc: TruncationLaw) -> Result<ComposeFactory<F>> {
    if outer.anchor != 0.0 {
        return Err(Error::ComposeAnchorNonzero(outer.anchor));
    }
    if !trunc.is_unbounded() {
        return Err(Error::DegenerateTruncation(format!("{:?}", trunc.kind())));
    }
    Ok(ComposeFactory { outer, inner, trunc })
}

impl<F: Factory> Factory for ComposeFactory<F> {
    fn draw(&mut self) -> Result<FactorySample> {
        let level = self.trunc.sample_level()?;
        let mut sum = CompensatedSum::new();
        let mut product = 1.0;
        let mut inputs = 0;
        for (n, c) in (0..=level).zip(self.outer.coefficient_iter()) {
            if n > 0 {
                let g = self.inner.draw()?;
                if g.value < 0.0 {
                    return Err(Error::NegativeInner(g.value));
                }
                product *= g.value;
                inputs += 1;
            }
            if c != 0.0 {
                sum.add(self.trunc.weight(n) * c * product);
            }
        }
        Ok(checked(FactorySample {
            value: sum.value(),
            inputs_consumed: inputs,
            n_drawn: level,
        }))
    }

    fn target(&self) -> Option<f64> {
        self.inner.target().map(|g| self.outer.eval(g))
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            outer: self.outer.clone(),
            inner: self.inner.fork(component_seed(seed, "inner")),
            trunc: self.trunc.fork(component_seed(seed, "trunc")),
        }
    }
}

/// Counts draws of the wrapped factory through a shared counter, so a test
/// can watch how often a combinator samples its parts.
#[derive(Debug, Clone)]
pub struct Tracked<F> {
    inner: F,
    draws: Arc<AtomicU64>,
}

impl<F> Tracked<F> {
    pub fn new(inner: F) -> (Self, Arc<AtomicU64>) {
        let draws = Arc::new(AtomicU64::new(0));
        (
            Self {
                inner,
                draws: Arc::clone(&draws),
            },
            draws,
        )
    }
}

impl<F: Factory> Factory for Tracked<F> {
    fn draw(&mut self) -> Result<FactorySample> {
        self.draws.fetch_add(1, Ordering::Relaxed);
        self.inner.draw()
    }

    fn target(&self) -> Option<f64> {
        self.inner.target()
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            inner: self.inner.fork(seed),
            draws: Arc::new(AtomicU64::new(0)),
        }
    }
}

/// Polynomial in Bernstein form on `[0, 1]` with nonnegative coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinPoly {
    coeffs: Vec<f64>,
}

impl BernsteinPoly {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(invalid("a Bernstein polynomial needs at least one coefficient"));
        }
        for (i, c) in coeffs.iter().enumerate() {
            nonneg(&format!("b_{i}"), *c)?;
        }
        Ok(Self { coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `Σ_k b_k C(D, k) z^k (1 − z)^(D − k)` by de Casteljau's algorithm.
    pub fn eval(&self, z: f64) -> f64 {
        let mut work = self.coeffs.clone();
        for level in (1..work.len()).rev() {
            for k in 0..level {
                work[k] = (1.0 - z) * work[k] + z * work[k + 1];
            }
        }
        work[0]
    }
}

/// Flips `D` coins and returns `gamma · b_k` for `k` heads, an unbiased
/// estimate of `gamma · poly(z)` where `z` is the coin mean.
pub fn bernstein_factory<C: Stream + ?Sized>(poly: &BernsteinPoly, gamma: f64, coins: &mut C) -> Result<FactorySample> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    if let Some((index, &value)) = poly.coeffs.iter().enumerate().find(|(_, &b)| b > 1.0) {
        return Err(Error::CoefficientOutOfRange { index, value });
    }
    let mut heads = 0;
    for _ in 0..poly.degree() {
        let c = coins.sample();
        if c == 1.0 {
            heads += 1;
        } else if c != 0.0 {
            return Err(invalid(format!("coin stream emitted {c}")));
        }
    }
    Ok(checked(FactorySample {
        value: gamma * poly.coeffs[heads],
        inputs_consumed: poly.degree() as u64,
        n_drawn: 0,
    }))
}

/// [`bernstein_factory`] bundled with a coin source.
#[derive(Debug, Clone)]
pub struct BernsteinFactory<C> {
    poly: BernsteinPoly,
    gamma: f64,
    coins: C,
}

impl<C: Stream> BernsteinFactory<C> {
    pub fn new(poly: BernsteinPoly, gamma: f64, coins: C) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gamma must be positive, got {gamma}")));
        }
        if let Some((index, &value)) = poly.coeffs.iter().enumerate().find(|(_, &b)| b > 1.0) {
            return Err(Error::CoefficientOutOfRange { index, value });
        }
        Ok(Self { poly, gamma, coins })
    }
}

impl<S: Stream> BernsteinFactory<Coinified<S>> {
    /// Factory for `f(x) = gamma · poly((x − a)/(b − a))` fed by a stream on
    /// `[a, b]`.
    pub fn on_interval(poly: BernsteinPoly, gamma: f64, stream: S) -> Result<Self> {
        Self::new(poly, gamma, crate::streams::coinify(stream)?)
    }
}

impl<C: Stream> Factory for BernsteinFactory<C> {
    fn draw(&mut self) -> Result<FactorySample> {
        bernstein_factory(&self.poly, self.gamma, &mut self.coins)
    }

    fn target(&self) -> Option<f64> {
        self.coins.known_mean().map(|z| self.gamma * self.poly.eval(z))
    }

    fn fork(&self, seed: u64) -> Self {
        Self {
            poly: self.poly.clone(),
            gamma: self.gamma,
            coins: self.coins.fork(component_seed(seed, "coins")),
        }
    }
}

/// `(x_i, f(x_i))` on `n_points` equally spaced points of `[a, b]`,
/// endpoints included.
pub fn uniform_grid(a: f64, b: f64, n_points: usize, f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    match n_points {
        0 => Vec::new(),
        1 => vec![(a, f(a))],
        _ => (0..n_points)
            .map(|i| {
                let x = if i + 1 == n_points {
                    b
                } else {
                    a + (b - a) * i as f64 / (n_points - 1) as f64
                };
                (x, f(x))
            })
            .collect(),
    }
}

/// Whether `f(x) ≥ ε · min((x − a)^n, (b − x)^n)` at every grid point, where
/// `[a, b]` is spanned by the smallest and largest grid abscissae.
///
/// A grid diagnostic only: passing says nothing about points between nodes.
pub fn condition6_check(f_values: &[(f64, f64)], epsilon: f64, n: u32) -> Result<bool> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let (a, b) = f_values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
    if f_values.is_empty() || a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return Err(Error::EmptyGrid);
    }
    let exp = n as i32;
    Ok(f_values
        .iter()
        .all(|&(x, fx)| fx >= epsilon * (x - a).powi(exp).min((b - x).powi(exp))))
}

/// Outcome of replicating a factory.
#[derive(Debug, Clone)]
pub struct FactoryRun {
    pub samples: Vec<FactorySample>,
    /// Replications dropped because the truncation level hit the cap.
    pub overflows: u64,
}

impl FactoryRun {
    pub fn estimate(&self) -> Estimate {
        self.samples.iter().map(|s| s.value).collect::<Moments>().summary()
    }

    pub fn negatives(&self) -> u64 {
        self.samples.iter().filter(|s| s.value < 0.0).count() as u64
    }

    /// RFC 4180 CSV with columns `rep, value, inputs_consumed, n_drawn`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_samples_csv(&self.samples, out)
    }
}

#[derive(Serialize)]
struct SampleRow {
    rep: usize,
    value: f64,
    inputs_consumed: u64,
    n_drawn: u64,
}

pub fn write_samples_csv<W: io::Write>(samples: &[FactorySample], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (rep, s) in samples.iter().enumerate() {
        w.serialize(SampleRow {
            rep,
            value: s.value,
            inputs_consumed: s.inputs_consumed,
            n_drawn: s.n_drawn,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Draws `reps` samples from independent forks of `factory`. Truncation
/// overflows are excluded and counted; any other error aborts the run.
pub fn replicate_factory<F: Factory + Sync>(factory: &F, reps: u64, seed: u64) -> Result<FactoryRun> {
    let outcomes = replicate(reps, seed, |block| factory.fork(block), |f, _| f.draw());
    let mut samples = Vec::with_capacity(outcomes.len());
    let mut overflows = 0;
    for outcome in outcomes {
        match outcome {
            Ok(s) => samples.push(s),
            Err(Error::TruncationOverflow { .. }) => overflows += 1,
            Err(e) => return Err(e),
        }
    }
    if overflows > 0 {
        log::warn!("{overflows} of {reps} replications exceeded the truncation cap and were excluded");
    }
    Ok(FactoryRun { samples, overflows })
}
