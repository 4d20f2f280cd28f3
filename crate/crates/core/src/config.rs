//! Serde descriptions of streams, truncation laws, factories and models.
//!
//! Each config builds its component from an experiment seed and a dotted
//! component path. The component's generator is seeded with
//! `component_seed(split_seed(seed, own_seed), path)`, where `own_seed` is
//! the optional `seed` field of the config. Adding a component elsewhere in
//! the tree leaves every other component's stream untouched.

use serde::{Deserialize, Serialize};

use crate::debias::{TruncationKind, TruncationLaw};
use crate::error::{Error, Result};
use crate::factories::{
    compose_factory, product_factory, sum_factory, BernsteinFactory, BernsteinPoly, BoxedFactory, Coefficients,
    ConstantFactory, InverseFactory, PowerSeries, SeriesFactory,
};
use crate::pm_mcmc::{
    DoublyIntractableModel, DoublyIntractableToy, GaussianModel, GaussianToy, LikelihoodNoise, SubsampledModel,
    TargetModel,
};
use crate::rng::{component_seed, split_seed};
use crate::streams::{Distribution, EstimatorStream, SupportSpec};

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::ConfigInvalid {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Re-labels a module error with the config field it came from.
fn at<T>(field: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::ConfigInvalid { .. } => e,
        other => config_err(field, other.to_string()),
    })
}

fn require<T: Copy>(path: &str, name: &str, v: Option<T>, dist: &str) -> Result<T> {
    v.ok_or_else(|| config_err(&format!("{path}.{name}"), format!("required for dist `{dist}`")))
}

fn sub(path: &str, child: &str) -> String {
    if path.is_empty() {
        child.to_string()
    } else {
        format!("{path}.{child}")
    }
}

fn derive_seed(seed: u64, own: u64, path: &str) -> u64 {
    component_seed(split_seed(seed, own), path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    PointMass,
    Uniform,
    Gaussian,
    ShiftedExponential,
    Discrete,
    Bernoulli,
}

/// An [`EstimatorStream`]. Law parameters by `dist`:
///
/// | dist | fields |
/// |---|---|
/// | `point_mass` | `mean` |
/// | `uniform` | `a`, `b` |
/// | `gaussian` | `mean`, `sd` |
/// | `shifted_exponential` | `shift`, `rate` |
/// | `discrete` | `values`, `probs` |
/// | `bernoulli` | `p` |
///
/// For every law but `uniform`, `a` and/or `b` declare a wider support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamConfig {
    pub dist: DistKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl StreamConfig {
    pub fn distribution(&self, path: &str) -> Result<Distribution> {
        let name = serde_json::to_value(self.dist)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let d = name.as_str();
        let dist = match self.dist {
            DistKind::PointMass => Distribution::PointMass(require(path, "mean", self.mean, d)?),
            DistKind::Uniform => Distribution::Uniform {
                a: require(path, "a", self.a, d)?,
                b: require(path, "b", self.b, d)?,
            },
            DistKind::Gaussian => Distribution::Gaussian {
                mean: require(path, "mean", self.mean, d)?,
                sd: require(path, "sd", self.sd, d)?,
            },
            DistKind::ShiftedExponential => Distribution::ShiftedExponential {
                shift: require(path, "shift", self.shift, d)?,
                rate: require(path, "rate", self.rate, d)?,
            },
            DistKind::Discrete => {
                let values = self
                    .values
                    .clone()
                    .ok_or_else(|| config_err(&sub(path, "values"), "required for dist `discrete`"))?;
                let probs = self
                    .probs
                    .clone()
                    .ok_or_else(|| config_err(&sub(path, "probs"), "required for dist `discrete`"))?;
                at(path, Distribution::discrete(values, probs))?
            }
            DistKind::Bernoulli => Distribution::Bernoulli(require(path, "p", self.p, d)?),
        };
        Ok(dist)
    }

    fn declared_support(&self) -> Option<SupportSpec> {
        if self.dist == DistKind::Uniform {
            return None;
        }
        match (self.a, self.b) {
            (Some(a), Some(b)) => Some(SupportSpec::Interval { a, b }),
            (Some(a), None) => Some(SupportSpec::LowerBounded { a }),
            (None, Some(b)) => Some(SupportSpec::UpperBounded { b }),
            (None, None) => None,
        }
    }

    pub fn build(&self, seed: u64, path: &str) -> Result<EstimatorStream> {
        let dist = self.distribution(path)?;
        let stream = at(path, EstimatorStream::new(dist, derive_seed(seed, self.seed, path)))?;
        match self.declared_support() {
            Some(s) => at(path, stream.with_support(s)),
            None => Ok(stream),
        }
    }
}

/// A [`TruncationLaw`], e.g. `{"trunc": "geometric", "rho": 0.5}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncConfig {
    #[serde(flatten)]
    pub kind: TruncationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<u64>,
    #[serde(default)]
    pub seed: u64,
}

impl TruncConfig {
    pub fn build(&self, seed: u64, path: &str) -> Result<TruncationLaw> {
        let law = at(path, TruncationLaw::new(self.kind, derive_seed(seed, self.seed, path)))?;
        Ok(match self.cap {
            Some(cap) => law.with_cap(cap),
            None => law,
        })
    }
}

/// `Σ c_n (x − anchor)^n`, e.g. `{"anchor": 0, "family": "exponential", "lead": 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub anchor: f64,
    #[serde(flatten)]
    pub coefficients: Coefficients,
}

impl SeriesConfig {
    pub fn build(&self, path: &str) -> Result<PowerSeries> {
        at(path, PowerSeries::new(self.anchor, self.coefficients.clone(), "config"))
    }
}

/// A factory tree, tagged by `factory`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "factory", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactoryConfig {
    Constant {
        gamma: f64,
    },
    /// Anchored at the stream's lower bound unless `anchor` is given, in
    /// which case the two must agree.
    Poisson {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        anchor: Option<f64>,
        stream: StreamConfig,
        trunc: TruncConfig,
    },
    Series {
        series: SeriesConfig,
        stream: StreamConfig,
        trunc: TruncConfig,
    },
    Inverse {
        stream: StreamConfig,
        trunc: TruncConfig,
    },
    Sum {
        left: Box<FactoryConfig>,
        right: Box<FactoryConfig>,
    },
    Product {
        left: Box<FactoryConfig>,
        right: Box<FactoryConfig>,
    },
    Compose {
        outer: SeriesConfig,
        inner: Box<FactoryConfig>,
        trunc: TruncConfig,
    },
    /// `gamma · Σ_k coeffs[k] C(D,k) z^k (1−z)^(D−k)` with
    /// `z = (x − a)/(b − a)`; the stream must have interval support.
    Bernstein {
        coeffs: Vec<f64>,
        #[serde(default = "one")]
        gamma: f64,
        stream: StreamConfig,
    },
}

fn one() -> f64 {
    1.0
}

impl FactoryConfig {
    pub fn build(&self, seed: u64, path: &str) -> Result<BoxedFactory> {
        let stream_path = sub(path, "stream");
        let trunc_path = sub(path, "trunc");
        Ok(match self {
            FactoryConfig::Constant { gamma } => BoxedFactory::new(at(path, ConstantFactory::new(*gamma))?),
            FactoryConfig::Poisson { anchor, stream, trunc } => {
                let s = stream.build(seed, &stream_path)?;
                let t = trunc.build(seed, &trunc_path)?;
                let f = match anchor {
                    Some(a) => SeriesFactory::new(at(path, PowerSeries::exponential(*a))?, s, t),
                    None => SeriesFactory::poisson(s, t),
                };
                BoxedFactory::new(at(path, f)?)
            }
            FactoryConfig::Series { series, stream, trunc } => BoxedFactory::new(at(
                path,
                SeriesFactory::new(
                    series.build(&sub(path, "series"))?,
                    stream.build(seed, &stream_path)?,
                    trunc.build(seed, &trunc_path)?,
                ),
            )?),
            FactoryConfig::Inverse { stream, trunc } => BoxedFactory::new(at(
                path,
                InverseFactory::new(stream.build(seed, &stream_path)?, trunc.build(seed, &trunc_path)?),
            )?),
            FactoryConfig::Sum { left, right } => BoxedFactory::new(sum_factory(
                left.build(seed, &sub(path, "left"))?,
                right.build(seed, &sub(path, "right"))?,
            )),
            FactoryConfig::Product { left, right } => BoxedFactory::new(product_factory(
                left.build(seed, &sub(path, "left"))?,
                right.build(seed, &sub(path, "right"))?,
            )),
            FactoryConfig::Compose { outer, inner, trunc } => BoxedFactory::new(at(
                path,
                compose_factory(
                    outer.build(&sub(path, "outer"))?,
                    inner.build(seed, &sub(path, "inner"))?,
                    trunc.build(seed, &trunc_path)?,
                ),
            )?),
            FactoryConfig::Bernstein { coeffs, gamma, stream } => {
                let poly = at(&sub(path, "coeffs"), BernsteinPoly::new(coeffs.clone()))?;
                BoxedFactory::new(at(
                    path,
                    BernsteinFactory::on_interval(poly, *gamma, stream.build(seed, &stream_path)?),
                )?)
            }
        })
    }
}

fn default_n() -> usize {
    20
}

fn default_theta_true() -> f64 {
    1.0
}

fn default_sd() -> f64 {
    1.0
}

fn default_noise() -> LikelihoodNoise {
    LikelihoodNoise::Exact
}

/// Gaussian toy data: explicit `data`, or `n` synthetic draws around
/// `theta_true` from `data_seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianToyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<f64>>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_theta_true")]
    pub theta_true: f64,
    #[serde(default = "default_sd")]
    pub obs_sd: f64,
    #[serde(default)]
    pub prior_mean: f64,
    #[serde(default = "default_sd")]
    pub prior_sd: f64,
    #[serde(default)]
    pub data_seed: u64,
}

impl GaussianToyConfig {
    pub fn build(&self, path: &str) -> Result<GaussianToy> {
        let toy = match &self.data {
            Some(data) => GaussianToy::new(data.clone(), self.obs_sd, self.prior_mean, self.prior_sd),
            None => GaussianToy::synthetic(self.n, self.theta_true, self.obs_sd, self.data_seed).map(|t| GaussianToy {
                prior_mean: self.prior_mean,
                prior_sd: self.prior_sd,
                ..t
            }),
        };
        at(path, toy)
    }
}

/// A pseudo-marginal target, tagged by `model`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    Gaussian {
        #[serde(flatten)]
        toy: GaussianToyConfig,
        #[serde(default = "default_noise")]
        noise: LikelihoodNoise,
    },
    Subsampled {
        #[serde(flatten)]
        toy: GaussianToyConfig,
        m: usize,
        trunc: TruncConfig,
    },
    DoublyIntractable {
        kappa_scale: f64,
        is_samples: usize,
        data: Vec<f64>,
        #[serde(default = "default_sd")]
        prior_sd: f64,
        trunc: TruncConfig,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bounds: Option<(f64, f64)>,
    },
}

impl ModelConfig {
    /// Analytic posterior `(mean, sd)`, where one exists.
    pub fn analytic_posterior(&self) -> Result<Option<(f64, f64)>> {
        Ok(match self {
            ModelConfig::Gaussian { toy, .. } | ModelConfig::Subsampled { toy, .. } => Some(toy.build("model")?.posterior()),
            ModelConfig::DoublyIntractable { .. } => None,
        })
    }

    pub fn build(&self, seed: u64, path: &str) -> Result<Box<dyn TargetModel + Send>> {
        let model_seed = component_seed(seed, &sub(path, "estimator"));
        Ok(match self {
            ModelConfig::Gaussian { toy, noise } => Box::new(GaussianModel::new(toy.build(path)?, *noise, model_seed)),
            ModelConfig::Subsampled { toy, m, trunc } => Box::new(at(
                path,
                SubsampledModel::new(toy.build(path)?, *m, trunc.build(seed, &sub(path, "trunc"))?, model_seed),
            )?),
            ModelConfig::DoublyIntractable {
                kappa_scale,
                is_samples,
                data,
                prior_sd,
                trunc,
                bounds,
            } => {
                let mut toy = at(
                    path,
                    DoublyIntractableToy::new(*kappa_scale, *is_samples, trunc.build(seed, &sub(path, "trunc"))?, model_seed),
                )?;
                if let Some((a, b)) = bounds {
                    toy = at(&sub(path, "bounds"), toy.with_bounds(*a, *b))?;
                }
                Box::new(at(path, DoublyIntractableModel::new(toy, data.clone(), *prior_sd))?)
            }
        })
    }
}
