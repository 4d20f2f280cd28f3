//! Pseudo-marginal Metropolis–Hastings on a scalar parameter.
//!
//! The likelihood in the acceptance ratio is replaced by a nonnegative
//! unbiased estimate `ẑ`, drawn afresh at each proposal and cached with the
//! current state. The chain then still targets the exact posterior. A
//! negative estimate has no meaning in the ratio, so [`pm_mh_run`] fails with
//! [`Error::NegativeEstimate`] instead of clipping it; [`negativity_demo`]
//! shows how easily a signed series estimator produces such values.
//!
//! Toy models:
//! - [`GaussianModel`]: conjugate Gaussian mean with exact or noisy
//!   likelihood evaluations.
//! - [`SubsampledModel`]: likelihood `exp(ℓ(θ))` estimated by feeding
//!   subsampled log-likelihoods into the Poisson estimator.
//! - [`DoublyIntractableModel`]: a truncated exponential family whose
//!   normaliser is only available through importance sampling, with `1/Z`
//!   estimated by the inverse factory.

use std::f64::consts::PI;
use std::io;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::debias::TruncationLaw;
use crate::error::{invalid, Error, Result};
use crate::factories::{inverse_factory, poisson_estimator, signed_series_estimate, FactorySample, PowerSeries};
use crate::replicate::replicate;
use crate::rng::{component_seed, rng_from_seed, SimRng};
use crate::stats::{chain_estimate, wilson_interval, Estimate, Moments, Z99};
use crate::streams::{couple, Stream, SupportSpec};

/// Posterior ingredients for a scalar parameter.
pub trait TargetModel {
    fn prior_logdensity(&self, theta: f64) -> f64;

    /// A nonnegative unbiased estimate of `L(θ)`.
    fn estimate_likelihood(&mut self, theta: f64) -> Result<f64>;

    /// `L(θ)` itself, when available. Reference only.
    fn exact_likelihood(&self, _theta: f64) -> Option<f64> {
        None
    }
}

impl<M: TargetModel + ?Sized> TargetModel for Box<M> {
    fn prior_logdensity(&self, theta: f64) -> f64 {
        (**self).prior_logdensity(theta)
    }

    fn estimate_likelihood(&mut self, theta: f64) -> Result<f64> {
        (**self).estimate_likelihood(theta)
    }

    fn exact_likelihood(&self, theta: f64) -> Option<f64> {
        (**self).exact_likelihood(theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MHConfig {
    pub proposal_sd: f64,
    pub iterations: u64,
    pub burn_in: u64,
    pub seed: u64,
    #[serde(default)]
    pub initial_theta: f64,
}

impl MHConfig {
    pub fn new(proposal_sd: f64, iterations: u64, burn_in: u64, seed: u64) -> Self {
        Self {
            proposal_sd,
            iterations,
            burn_in,
            seed,
            initial_theta: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.proposal_sd > 0.0 && self.proposal_sd.is_finite()) {
            return Err(invalid(format!("proposal_sd must be positive, got {}", self.proposal_sd)));
        }
        if self.burn_in >= self.iterations {
            return Err(invalid(format!(
                "burn_in ({}) must be below iterations ({})",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }
}

/// Current parameter and the likelihood estimate drawn when it was accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainState {
    pub theta: f64,
    pub z_hat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainStep {
    pub iter: u64,
    pub theta: f64,
    pub z_hat: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone)]
pub struct ChainRecord {
    /// Post-burn-in steps.
    pub steps: Vec<ChainStep>,
    /// Over all iterations, burn-in included.
    pub acceptance_rate: f64,
    pub negative_estimate_count: u64,
}

impl ChainRecord {
    pub fn thetas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.theta).collect()
    }

    /// Posterior mean with an ESS-adjusted standard error.
    pub fn posterior_mean(&self) -> Estimate {
        chain_estimate(&self.thetas())
    }

    /// Posterior variance with an ESS-adjusted standard error.
    pub fn posterior_variance(&self) -> Estimate {
        let thetas = self.thetas();
        let mean = thetas.iter().sum::<f64>() / thetas.len() as f64;
        let sq: Vec<f64> = thetas.iter().map(|t| (t - mean).powi(2)).collect();
        chain_estimate(&sq)
    }

    /// CSV with columns `iter, theta, z_hat, accepted`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for step in &self.steps {
            w.serialize(step)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn checked_estimate<M: TargetModel + ?Sized>(model: &mut M, theta: f64) -> Result<f64> {
    let z = model.estimate_likelihood(theta)?;
    if z < 0.0 || z.is_nan() {
        return Err(Error::NegativeEstimate { theta, value: z });
    }
    Ok(z)
}

/// Random-walk pseudo-marginal Metropolis–Hastings.
pub fn pm_mh_run<M: TargetModel + ?Sized>(model: &mut M, config: &MHConfig) -> Result<ChainRecord> {
    config.validate()?;
    let mut rng = rng_from_seed(component_seed(config.seed, "mh"));
    let mut state = ChainState {
        theta: config.initial_theta,
        z_hat: checked_estimate(model, config.initial_theta)?,
    };
    let mut log_target = model.prior_logdensity(state.theta) + state.z_hat.ln();
    let mut steps = Vec::with_capacity((config.iterations - config.burn_in) as usize);
    let mut accepted_total = 0u64;

    for iter in 0..config.iterations {
        let z: f64 = rng.sample(StandardNormal);
        let proposal = state.theta + config.proposal_sd * z;
        let z_prop = checked_estimate(model, proposal)?;
        let log_prop = model.prior_logdensity(proposal) + z_prop.ln();
        let u: f64 = rng.random();
        let accept = z_prop > 0.0 && (log_target == f64::NEG_INFINITY || u.ln() < log_prop - log_target);
        if accept {
            state = ChainState {
                theta: proposal,
                z_hat: z_prop,
            };
            log_target = log_prop;
            accepted_total += 1;
        }
        if iter >= config.burn_in {
            steps.push(ChainStep {
                iter,
                theta: state.theta,
                z_hat: state.z_hat,
                accepted: accept,
            });
        }
    }

    Ok(ChainRecord {
        steps,
        acceptance_rate: accepted_total as f64 / config.iterations as f64,
        negative_estimate_count: 0,
    })
}

fn gaussian_logpdf(x: f64, mean: f64, sd: f64) -> f64 {
    -0.5 * (2.0 * PI * sd * sd).ln() - (x - mean).powi(2) / (2.0 * sd * sd)
}

/// Gaussian observations with known sd and a Gaussian prior on the mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianToy {
    pub data: Vec<f64>,
    pub obs_sd: f64,
    pub prior_mean: f64,
    pub prior_sd: f64,
}

impl GaussianToy {
    pub fn new(data: Vec<f64>, obs_sd: f64, prior_mean: f64, prior_sd: f64) -> Result<Self> {
        if !(obs_sd > 0.0 && prior_sd > 0.0) {
            return Err(invalid("gaussian toy needs positive obs_sd and prior_sd"));
        }
        Ok(Self {
            data,
            obs_sd,
            prior_mean,
            prior_sd,
        })
    }

    /// `n` observations from `N(theta_true, obs_sd²)` under a `N(0, 1)` prior.
    pub fn synthetic(n: usize, theta_true: f64, obs_sd: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let data = (0..n)
            .map(|_| theta_true + obs_sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(data, obs_sd, 0.0, 1.0)
    }

    pub fn log_likelihood(&self, theta: f64) -> f64 {
        self.data.iter().map(|y| gaussian_logpdf(*y, theta, self.obs_sd)).sum()
    }

    /// Analytic posterior `(mean, sd)`.
    pub fn posterior(&self) -> (f64, f64) {
        let precision = self.prior_sd.powi(-2) + self.data.len() as f64 * self.obs_sd.powi(-2);
        let sum: f64 = self.data.iter().sum();
        let mean = (self.prior_mean * self.prior_sd.powi(-2) + sum * self.obs_sd.powi(-2)) / precision;
        (mean, precision.sqrt().recip())
    }
}

/// How [`GaussianModel`] perturbs its exact likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "noise", rename_all = "snake_case")]
pub enum LikelihoodNoise {
    Exact,
    /// Multiply by `exp(σ Z − σ²/2)`, a positive mean-one factor.
    LogNormal { sigma: f64 },
}

#[derive(Debug, Clone)]
pub struct GaussianModel {
    toy: GaussianToy,
    noise: LikelihoodNoise,
    rng: SimRng,
}

impl GaussianModel {
    pub fn new(toy: GaussianToy, noise: LikelihoodNoise, seed: u64) -> Self {
        Self {
            toy,
            noise,
            rng: rng_from_seed(seed),
        }
    }

    pub fn toy(&self) -> &GaussianToy {
        &self.toy
    }
}

impl TargetModel for GaussianModel {
    fn prior_logdensity(&self, theta: f64) -> f64 {
        gaussian_logpdf(theta, self.toy.prior_mean, self.toy.prior_sd)
    }

    fn estimate_likelihood(&mut self, theta: f64) -> Result<f64> {
        let exact = self.toy.log_likelihood(theta).exp();
        Ok(match self.noise {
            LikelihoodNoise::Exact => exact,
            LikelihoodNoise::LogNormal { sigma } => {
                let z: f64 = self.rng.sample(StandardNormal);
                exact * (sigma * z - 0.5 * sigma * sigma).exp()
            }
        })
    }

    fn exact_likelihood(&self, theta: f64) -> Option<f64> {
        Some(self.toy.log_likelihood(theta).exp())
    }
}

/// `(n/m) Σ_{i=1}^{m} terms[σ_i]` with `σ_i` uniform on `0..n`, with
/// replacement: unbiased for `Σ terms`.
pub fn subsampled_loglik<R: Rng + ?Sized>(terms: &[f64], m: usize, rng: &mut R) -> Result<f64> {
    if terms.is_empty() {
        return Err(Error::EmptyData);
    }
    if m == 0 {
        return Err(invalid("subsample size must be at least 1"));
    }
    let n = terms.len();
    let sum: f64 = (0..m).map(|_| terms[rng.random_range(0..n)]).sum();
    Ok(n as f64 / m as f64 * sum)
}

/// Stream of subsampled log-likelihood estimates at a fixed `θ`.
///
/// The estimate is a sum of `m` terms scaled by `n/m`, so it never drops
/// below `n · min_i terms_i`; that is the declared lower bound.
#[derive(Debug, Clone)]
pub struct SubsampleStream {
    terms: Vec<f64>,
    m: usize,
    lower: f64,
    seed: u64,
    rng: SimRng,
}

impl SubsampleStream {
    pub fn new(terms: Vec<f64>, m: usize, seed: u64) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::EmptyData);
        }
        if m == 0 {
            return Err(invalid("subsample size must be at least 1"));
        }
        let min = terms.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Self {
            lower: terms.len() as f64 * min,
            terms,
            m,
            seed,
            rng: rng_from_seed(seed),
        })
    }
}

impl Stream for SubsampleStream {
    fn sample(&mut self) -> f64 {
        subsampled_loglik(&self.terms, self.m, &mut self.rng)
            .expect("validated at construction")
            .max(self.lower)
    }

    fn support(&self) -> SupportSpec {
        SupportSpec::LowerBounded { a: self.lower }
    }

    fn known_mean(&self) -> Option<f64> {
        Some(self.terms.iter().sum())
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

/// Gaussian toy whose likelihood is estimated from data subsamples through
/// the Poisson estimator of `exp(ℓ̂)`.
#[derive(Debug, Clone)]
pub struct SubsampledModel {
    toy: GaussianToy,
    m: usize,
    trunc: TruncationLaw,
    rng: SimRng,
}

impl SubsampledModel {
    pub fn new(toy: GaussianToy, m: usize, trunc: TruncationLaw, seed: u64) -> Result<Self> {
        if toy.data.is_empty() {
            return Err(Error::EmptyData);
        }
        Ok(Self {
            toy,
            m,
            trunc,
            rng: rng_from_seed(seed),
        })
    }

    pub fn toy(&self) -> &GaussianToy {
        &self.toy
    }

    fn terms(&self, theta: f64) -> Vec<f64> {
        self.toy
            .data
            .iter()
            .map(|y| gaussian_logpdf(*y, theta, self.toy.obs_sd))
            .collect()
    }
}

impl TargetModel for SubsampledModel {
    fn prior_logdensity(&self, theta: f64) -> f64 {
        gaussian_logpdf(theta, self.toy.prior_mean, self.toy.prior_sd)
    }

    fn estimate_likelihood(&mut self, theta: f64) -> Result<f64> {
        let mut stream = SubsampleStream::new(self.terms(theta), self.m, self.rng.random())?;
        Ok(poisson_estimator(&mut stream, &mut self.trunc)?.value)
    }

    fn exact_likelihood(&self, theta: f64) -> Option<f64> {
        Some(self.toy.log_likelihood(theta).exp())
    }
}

/// Unnormalised density `g(s, θ) = exp(κ(θ) s)` on `s ∈ [0, 1]`, with
/// `κ(θ) = kappa_scale · tanh(θ)`, so `g` stays inside
/// `[exp(−kappa_scale), exp(kappa_scale)]` for every `θ`.
#[derive(Debug, Clone)]
pub struct DoublyIntractableToy {
    kappa_scale: f64,
    is_samples: usize,
    bounds: (f64, f64),
    trunc: TruncationLaw,
    rng: SimRng,
}

/// Averages of `m` importance weights `g(U, θ)` with `U ~ U(0, 1)`, declared
/// to lie in `[a, b]`. Records the first weight that does not.
struct WeightStream<'a> {
    kappa: f64,
    m: usize,
    a: f64,
    b: f64,
    rng: &'a mut SimRng,
    violation: Option<f64>,
}

impl Stream for WeightStream<'_> {
    fn sample(&mut self) -> f64 {
        let mut sum = 0.0;
        for _ in 0..self.m {
            let w = (self.kappa * self.rng.random::<f64>()).exp();
            if !(self.a..=self.b).contains(&w) && self.violation.is_none() {
                self.violation = Some(w);
            }
            sum += w;
        }
        (sum / self.m as f64).clamp(self.a, self.b)
    }

    fn support(&self) -> SupportSpec {
        SupportSpec::Interval { a: self.a, b: self.b }
    }

    fn seed(&self) -> u64 {
        0
    }

    fn fork(&self, _seed: u64) -> Self {
        unreachable!("weight streams live for a single estimate")
    }
}

impl DoublyIntractableToy {
    pub fn new(kappa_scale: f64, is_samples: usize, trunc: TruncationLaw, seed: u64) -> Result<Self> {
        if !(kappa_scale > 0.0 && kappa_scale.is_finite()) || is_samples == 0 {
            return Err(invalid("doubly intractable toy needs kappa_scale > 0 and at least one IS sample"));
        }
        Ok(Self {
            kappa_scale,
            is_samples,
            bounds: ((-kappa_scale).exp(), kappa_scale.exp()),
            trunc,
            rng: rng_from_seed(seed),
        })
    }

    /// Override the declared weight bounds; weights outside them raise
    /// [`Error::BoundViolation`].
    pub fn with_bounds(mut self, a: f64, b: f64) -> Result<Self> {
        SupportSpec::interval(a, b)?;
        if a <= 0.0 {
            return Err(invalid("weight bounds must be positive"));
        }
        self.bounds = (a, b);
        Ok(self)
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn kappa(&self, theta: f64) -> f64 {
        self.kappa_scale * theta.tanh()
    }

    /// `log g(s, θ)`.
    pub fn log_g(&self, s: f64, theta: f64) -> f64 {
        self.kappa(theta) * s
    }

    /// `Z(θ) = ∫_0^1 exp(κ s) ds = expm1(κ)/κ`.
    pub fn normalizer(&self, theta: f64) -> f64 {
        let k = self.kappa(theta);
        if k == 0.0 {
            1.0
        } else {
            k.exp_m1() / k
        }
    }

    /// Nonnegative unbiased estimate of `1/Z(θ)`: importance-sampling
    /// estimates of `Z` fed to the inverse factory on the weight bounds.
    pub fn inverse_normalizer(&mut self, theta: f64) -> Result<FactorySample> {
        let (a, b) = self.bounds;
        let mut weights = WeightStream {
            kappa: self.kappa(theta),
            m: self.is_samples,
            a,
            b,
            rng: &mut self.rng,
            violation: None,
        };
        let sample = inverse_factory(&mut weights, &mut self.trunc)?;
        match weights.violation {
            Some(weight) => Err(Error::BoundViolation { weight, a, b }),
            None => Ok(sample),
        }
    }
}

/// Observations `y_i ∈ [0, 1]` with density `g(y, θ)/Z(θ)` and a Gaussian
/// prior. Each likelihood estimate multiplies one independent `1/Z`
/// estimate per observation.
#[derive(Debug, Clone)]
pub struct DoublyIntractableModel {
    toy: DoublyIntractableToy,
    data: Vec<f64>,
    prior_sd: f64,
}

impl DoublyIntractableModel {
    pub fn new(toy: DoublyIntractableToy, data: Vec<f64>, prior_sd: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        if data.iter().any(|y| !(0.0..=1.0).contains(y)) {
            return Err(invalid("observations must lie in [0, 1]"));
        }
        if prior_sd.is_nan() || prior_sd <= 0.0 {
            return Err(invalid("prior_sd must be positive"));
        }
        Ok(Self { toy, data, prior_sd })
    }

    pub fn toy(&self) -> &DoublyIntractableToy {
        &self.toy
    }
}

impl TargetModel for DoublyIntractableModel {
    fn prior_logdensity(&self, theta: f64) -> f64 {
        gaussian_logpdf(theta, 0.0, self.prior_sd)
    }

    fn estimate_likelihood(&mut self, theta: f64) -> Result<f64> {
        let log_g: f64 = self.data.iter().map(|y| self.toy.log_g(*y, theta)).sum();
        let mut estimate = log_g.exp();
        for _ in 0..self.data.len() {
            estimate *= self.toy.inverse_normalizer(theta)?.value;
        }
        Ok(estimate)
    }

    fn exact_likelihood(&self, theta: f64) -> Option<f64> {
        let log_g: f64 = self.data.iter().map(|y| self.toy.log_g(*y, theta)).sum();
        Some((log_g - self.data.len() as f64 * self.toy.normalizer(theta).ln()).exp())
    }
}

/// Wraps a model so its exact likelihood is used as the estimate.
pub struct ExactLikelihood<M>(pub M);

impl<M: TargetModel> TargetModel for ExactLikelihood<M> {
    fn prior_logdensity(&self, theta: f64) -> f64 {
        self.0.prior_logdensity(theta)
    }

    fn estimate_likelihood(&mut self, theta: f64) -> Result<f64> {
        self.0
            .exact_likelihood(theta)
            .ok_or_else(|| invalid("model has no exact likelihood"))
    }

    fn exact_likelihood(&self, theta: f64) -> Option<f64> {
        self.0.exact_likelihood(theta)
    }
}

/// Which estimator [`negativity_demo`] ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorRoute {
    /// Exp series anchored at 0 on unbounded inputs; can go negative.
    Signed,
    /// Poisson estimator anchored at the stream's lower bound.
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativityReport {
    pub route: EstimatorRoute,
    pub negatives: u64,
    pub reps: u64,
    pub fraction_negative: f64,
    /// 99% Wilson interval for the negative fraction.
    pub ci99: (f64, f64),
    pub mean: Estimate,
    pub overflows: u64,
}

/// Estimates `exp(λ)` `reps` times and counts negative outputs.
///
/// A stream without a lower bound gets the signed exp series anchored at 0.
/// A lower-bounded stream is routed through the Poisson estimator, which
/// cannot go negative.
pub fn negativity_demo<S: Stream + Sync>(stream: &S, trunc: &TruncationLaw, reps: u64, seed: u64) -> Result<(NegativityReport, Vec<f64>)> {
    if reps == 0 {
        return Err(invalid("reps must be at least 1"));
    }
    let route = match stream.support().lower() {
        Some(_) => EstimatorRoute::NonNegative,
        None => EstimatorRoute::Signed,
    };
    let series = PowerSeries::exponential(0.0)?;
    let outcomes = replicate(
        reps,
        seed,
        |block| {
            (
                stream.fork(component_seed(block, "stream")),
                trunc.fork(component_seed(block, "trunc")),
            )
        },
        |(s, t), _| match route {
            EstimatorRoute::Signed => signed_series_estimate(&series, s, t).map(|(v, _)| v),
            EstimatorRoute::NonNegative => poisson_estimator(s, t).map(|y| y.value),
        },
    );
    let (values, overflows) = split_overflows(outcomes)?;
    let negatives = values.iter().filter(|v| **v < 0.0).count() as u64;
    let kept = values.len() as u64;
    let report = NegativityReport {
        route,
        negatives,
        reps: kept,
        fraction_negative: negatives as f64 / kept.max(1) as f64,
        ci99: wilson_interval(negatives, kept, Z99),
        mean: values.iter().copied().collect::<Moments>().summary(),
        overflows,
    };
    Ok((report, values))
}

fn split_overflows<T>(outcomes: Vec<Result<T>>) -> Result<(Vec<T>, u64)> {
    let mut kept = Vec::with_capacity(outcomes.len());
    let mut overflows = 0;
    for o in outcomes {
        match o {
            Ok(v) => kept.push(v),
            Err(Error::TruncationOverflow { .. }) => overflows += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((kept, overflows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingShiftReport {
    /// Signed estimator fed the base stream; targets `exp(λ_X)`.
    pub base: Estimate,
    /// Same randomness, fed the coupled stream; targets `exp(λ_Y)`.
    pub coupled: Estimate,
    pub base_target: f64,
    pub coupled_target: f64,
    /// Replications in which at least one input differed between the runs.
    pub differing: u64,
    pub reps: u64,
    pub overflows: u64,
}

/// Paired runs of the signed exp-series estimator on a base stream and on
/// its coupling to mean `lambda_y`. Both runs see the same truncation level
/// and the same base draws, so their outputs differ only when a fallback
/// was emitted, yet their means are `exp(λ_X)` and `exp(λ_Y)`.
pub fn coupling_shift_demo<S: Stream + Clone + Sync>(
    base: &S,
    lambda_y: f64,
    epsilon: f64,
    trunc: &TruncationLaw,
    reps: u64,
    seed: u64,
) -> Result<CouplingShiftReport> {
    let lambda_x = base.known_mean().ok_or(Error::MissingKnownMean)?;
    couple(base.clone(), lambda_y, epsilon)?;
    let series = PowerSeries::exponential(0.0)?;
    let outcomes = replicate(
        reps,
        seed,
        rng_from_seed,
        |rng, _| -> Result<(f64, f64, bool)> {
            let (stream_seed, trunc_seed) = (rng.random::<u64>(), rng.random::<u64>());
            let mut plain = base.fork(stream_seed);
            let mut coupled = couple(base.fork(stream_seed), lambda_y, epsilon)?;
            let (x, _) = signed_series_estimate(&series, &mut plain, &mut trunc.fork(trunc_seed))?;
            let (y, _) = signed_series_estimate(&series, &mut coupled, &mut trunc.fork(trunc_seed))?;
            Ok((x, y, coupled.fallbacks() > 0))
        },
    );
    let (pairs, overflows) = split_overflows(outcomes)?;
    Ok(CouplingShiftReport {
        base: pairs.iter().map(|p| p.0).collect::<Moments>().summary(),
        coupled: pairs.iter().map(|p| p.1).collect::<Moments>().summary(),
        base_target: lambda_x.exp(),
        coupled_target: lambda_y.exp(),
        differing: pairs.iter().filter(|p| p.2).count() as u64,
        reps: pairs.len() as u64,
        overflows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::debias::estimate_at_level;
    use crate::factories::InverseSeriesSequence;
    use crate::stats::CompensatedSum;
    use crate::streams::EstimatorStream;

    fn geo(seed: u64) -> TruncationLaw {
        TruncationLaw::geometric(0.5, seed).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(MHConfig::new(0.0, 10, 1, 0).validate().is_err());
        assert!(MHConfig::new(1.0, 10, 10, 0).validate().is_err());
        assert!(MHConfig::new(1.0, 10, 9, 0).validate().is_ok());
    }

    #[test]
    fn subsample_exhaustive_m1() {
        // Each index with probability 1/3; outputs 3·t_i.
        let terms = [1.0, 2.0, 3.0];
        let mut rng = rng_from_seed(1);
        let mut seen = [0u32; 3];
        for _ in 0..3000 {
            let v = subsampled_loglik(&terms, 1, &mut rng).unwrap();
            let idx = [3.0, 6.0, 9.0].iter().position(|x| *x == v).expect("value in {3, 6, 9}");
            seen[idx] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800));
        let mean: f64 = [3.0, 6.0, 9.0].iter().sum::<f64>() / 3.0;
        assert_eq!(mean, 6.0);
    }

    #[test]
    fn subsample_enumeration_is_exact() {
        // Every ordered index tuple is equally likely; the average of the
        // estimator over all of them is the full sum.
        for terms in [vec![0.5], vec![1.0, -2.0], vec![1.0, 2.0, 4.0, -8.0, 0.25]] {
            let n = terms.len();
            let full: f64 = terms.iter().sum();
            for m in 1..=2usize {
                let tuples = n.pow(m as u32);
                let total: f64 = (0..tuples)
                    .map(|code| {
                        let (mut c, mut s) = (code, 0.0);
                        for _ in 0..m {
                            s += terms[c % n];
                            c /= n;
                        }
                        n as f64 / m as f64 * s
                    })
                    .sum();
                assert!((total / tuples as f64 - full).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn subsample_constant_terms() {
        let mut rng = rng_from_seed(2);
        assert_eq!(subsampled_loglik(&[1.5; 8], 3, &mut rng).unwrap(), 12.0);
        assert_eq!(subsampled_loglik(&[], 3, &mut rng).unwrap_err(), Error::EmptyData);
    }

    #[test]
    fn subsample_unbiased_gaussian_logliks() {
        let mut rng = rng_from_seed(3);
        let terms: Vec<f64> = (0..1000)
            .map(|_| gaussian_logpdf(rng.sample::<f64, _>(StandardNormal), 0.3, 1.0))
            .collect();
        let full: f64 = terms.iter().sum();
        let e = (0..100_000)
            .map(|_| subsampled_loglik(&terms, 10, &mut rng).unwrap())
            .collect::<Moments>()
            .summary();
        assert!(e.within(full, 4.0), "{e:?} vs {full}");
    }

    #[test]
    fn subsample_stream_respects_lower_bound() {
        let mut s = SubsampleStream::new(vec![-3.0, -1.0, -0.5, -2.0], 2, 4).unwrap();
        assert_eq!(s.support(), SupportSpec::LowerBounded { a: -12.0 });
        for _ in 0..10_000 {
            assert!(s.sample() >= -12.0);
        }
    }

    #[test]
    fn subsampled_likelihood_is_unbiased() {
        let toy = GaussianToy::synthetic(8, 0.2, 1.0, 5).unwrap();
        let theta = 0.1;
        let exact = toy.log_likelihood(theta).exp();
        let mut model = SubsampledModel::new(toy, 2, geo(6), 7).unwrap();
        let e = (0..200_000)
            .map(|_| model.estimate_likelihood(theta).unwrap() / exact)
            .collect::<Moments>()
            .summary();
        assert!(e.within(1.0, 4.0), "{e:?}");
    }

    #[test]
    fn negative_estimates_are_fatal() {
        struct Bad;
        impl TargetModel for Bad {
            fn prior_logdensity(&self, _: f64) -> f64 {
                0.0
            }
            fn estimate_likelihood(&mut self, theta: f64) -> Result<f64> {
                Ok(if theta > 0.5 { -1.0 } else { 1.0 })
            }
        }
        let err = pm_mh_run(&mut Bad, &MHConfig::new(1.0, 10_000, 10, 1)).unwrap_err();
        assert!(matches!(err, Error::NegativeEstimate { value, .. } if value == -1.0));
    }

    #[test]
    fn constant_likelihood_samples_prior() {
        let toy = GaussianToy::new(vec![], 1.0, 0.0, 1.0).unwrap();
        let mut model = GaussianModel::new(toy, LikelihoodNoise::Exact, 1);
        let chain = pm_mh_run(&mut model, &MHConfig::new(2.4, 100_000, 1_000, 8)).unwrap();
        let mean = chain.posterior_mean();
        assert!(mean.within(0.0, 4.0), "{mean:?}");
        let var = chain.posterior_variance();
        assert!(var.within(1.0, 4.0), "{var:?}");
        assert_eq!(chain.negative_estimate_count, 0);
        assert_eq!(chain.steps.len(), 99_000);
    }

    #[test]
    fn exact_chain_matches_conjugate_posterior() {
        let toy = GaussianToy::synthetic(20, 1.0, 1.0, 11).unwrap();
        let (m, sd) = toy.posterior();
        let mut model = GaussianModel::new(toy, LikelihoodNoise::Exact, 2);
        let chain = pm_mh_run(&mut model, &MHConfig::new(0.5, 100_000, 2_000, 3)).unwrap();
        let mean = chain.posterior_mean();
        assert!((mean.mean - m).abs() < 0.05);
        assert!(mean.within(m, 4.0), "{mean:?} vs {m}");
        assert!(chain.posterior_variance().within(sd * sd, 4.0));
    }

    #[test]
    fn chain_is_reproducible() {
        let toy = GaussianToy::synthetic(5, 0.0, 1.0, 1).unwrap();
        let run = || {
            let mut model = GaussianModel::new(toy.clone(), LikelihoodNoise::LogNormal { sigma: 0.5 }, 9);
            pm_mh_run(&mut model, &MHConfig::new(0.5, 2_000, 100, 4)).unwrap().steps
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn chain_csv_columns() {
        let toy = GaussianToy::new(vec![0.0], 1.0, 0.0, 1.0).unwrap();
        let mut model = GaussianModel::new(toy, LikelihoodNoise::Exact, 1);
        let chain = pm_mh_run(&mut model, &MHConfig::new(0.5, 5, 2, 4)).unwrap();
        let mut buf = Vec::new();
        chain.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iter,theta,z_hat,accepted\n2,"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn inverse_normalizer_constant_integrand() {
        // θ = 0 gives κ = 0, g ≡ 1 and Z = 1.
        let mut toy = DoublyIntractableToy::new(0.5, 4, geo(1), 2).unwrap();
        assert_eq!(toy.normalizer(0.0), 1.0);
        let e = (0..1_000_000)
            .map(|_| toy.inverse_normalizer(0.0).unwrap().value)
            .collect::<Moments>()
            .summary();
        assert!(e.within(1.0, 4.0), "{e:?}");
    }

    #[test]
    fn inverse_normalizer_point_mass_enumeration() {
        let toy = DoublyIntractableToy::new(0.5, 4, geo(1), 2).unwrap();
        let (a, b) = toy.bounds();
        let law = geo(0);
        for c in [a, 1.0, 0.5 * (a + b), b] {
            let mut e = CompensatedSum::new();
            for n in 0..400 {
                let mut s = EstimatorStream::point_mass(c, 0)
                    .unwrap()
                    .with_support(SupportSpec::Interval { a, b })
                    .unwrap();
                let mut seq = InverseSeriesSequence::new(b, &mut s);
                e.add(law.mass(n) * estimate_at_level(&mut seq, &law, n).value);
            }
            assert!((e.value() - 1.0 / c).abs() < 1e-12);
        }
    }

    #[test]
    fn inverse_normalizer_theta_dependent() {
        let mut toy = DoublyIntractableToy::new(0.5, 4, geo(3), 4).unwrap();
        for theta in [-2.0, 0.7] {
            let target = 1.0 / toy.normalizer(theta);
            let e = (0..400_000)
                .map(|_| toy.inverse_normalizer(theta).unwrap().value)
                .collect::<Moments>()
                .summary();
            assert!(e.within(target, 4.0), "θ={theta}: {e:?} vs {target}");
        }
    }

    #[test]
    fn tight_bounds_are_reported() {
        let mut toy = DoublyIntractableToy::new(0.5, 4, geo(3), 4)
            .unwrap()
            .with_bounds(0.9, 1.1)
            .unwrap();
        let err = (0..100)
            .find_map(|_| toy.inverse_normalizer(2.0).err())
            .expect("a weight leaves [0.9, 1.1]");
        assert!(matches!(err, Error::BoundViolation { a, b, .. } if a == 0.9 && b == 1.1));
    }

    #[test]
    fn negativity_signed_vs_nonnegative() {
        let g = EstimatorStream::gaussian(0.0, 1.0, 1).unwrap();
        let (signed, _) = negativity_demo(&g, &geo(2), 100_000, 3).unwrap();
        assert_eq!(signed.route, EstimatorRoute::Signed);
        assert!(signed.ci99.0 > 0.0);
        assert!(signed.mean.within(1.0, 4.0), "{:?}", signed.mean);
        let e = EstimatorStream::shifted_exponential(-1.0, 1.0, 1).unwrap();
        let (nonneg, values) = negativity_demo(&e, &geo(2), 100_000, 3).unwrap();
        assert_eq!(nonneg.route, EstimatorRoute::NonNegative);
        assert_eq!(nonneg.negatives, 0);
        assert!(values.iter().all(|v| *v >= 0.0));
        assert!(nonneg.mean.within(1.0, 4.0), "{:?}", nonneg.mean);
    }
}
