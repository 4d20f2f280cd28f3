//! Executes an [`ExperimentSpec`] and writes its reports.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use nonneg_core::debias::{second_moment_identity, IncrementSequence, TruncationLaw};
use nonneg_core::factories::{condition6_check, replicate_factory, uniform_grid, Factory};
use nonneg_core::pm_mcmc::{coupling_shift_demo, negativity_demo, pm_mh_run, EstimatorRoute, ExactLikelihood, MHConfig};
use nonneg_core::replicate::replicate;
use nonneg_core::rng::component_seed;
use nonneg_core::stats::{wilson_interval, CompensatedSum, Estimate, Moments, Z99};
use nonneg_core::streams::{couple, Stream};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{in_experiment, CliError, Result};
use crate::spec::{ExperimentKind, ExperimentSpec, SequenceConfig};

/// Contents of `<name>.summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub reps: u64,
    pub estimate: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub target: Option<f64>,
    /// Kind-specific figures.
    pub details: Value,
}

/// A finished experiment: the summary and the samples CSV bytes.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub samples_csv: Vec<u8>,
}

impl Outcome {
    /// Writes `<name>.summary.json` and `<name>.samples.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        let summary_path = dir.join(format!("{}.summary.json", self.summary.name));
        let samples_path = dir.join(format!("{}.samples.csv", self.summary.name));
        let mut json = serde_json::to_vec_pretty(&self.summary)?;
        json.push(b'\n');
        for (path, bytes) in [(&summary_path, &json), (&samples_path, &self.samples_csv)] {
            fs::File::create(path)
                .and_then(|mut f| f.write_all(bytes))
                .map_err(|source| CliError::Write {
                    path: path.clone(),
                    source,
                })?;
        }
        Ok((summary_path, samples_path))
    }
}

/// Runs `spec`. The result depends only on the spec, never on thread count.
pub fn run(spec: &ExperimentSpec) -> Result<Outcome> {
    spec.validate()?;
    log::info!("running `{}` ({}, {} reps, seed {})", spec.name, spec.kind.as_str(), spec.reps, spec.seed);
    match spec.kind {
        ExperimentKind::Unbiasedness => unbiasedness(spec),
        ExperimentKind::Negativity => negativity(spec),
        ExperimentKind::VarianceIdentity => variance_identity(spec),
        ExperimentKind::Condition6 => condition6(spec),
        ExperimentKind::PmMh => pm_mh(spec),
        ExperimentKind::Coupling => coupling(spec),
    }
}

fn summary(spec: &ExperimentSpec, estimate: Estimate, pass: bool, target: Option<f64>, details: Value) -> Summary {
    Summary {
        name: spec.name.clone(),
        kind: spec.kind,
        seed: spec.seed,
        reps: spec.reps,
        estimate: estimate.mean,
        stderr: estimate.stderr,
        tolerance: spec.tolerance(),
        pass,
        target,
        details,
    }
}

fn csv_rows<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

fn unbiasedness(spec: &ExperimentSpec) -> Result<Outcome> {
    let ctx = in_experiment(&spec.name);
    let factory = spec.factory.as_ref().expect("validated").build(spec.seed, "factory").map_err(&ctx)?;
    let target = spec.target.or_else(|| factory.target()).ok_or_else(|| CliError::ConfigInvalid {
        field: "target".into(),
        message: "no analytic target for this factory; give one explicitly".into(),
    })?;
    let run = replicate_factory(&factory, spec.reps, component_seed(spec.seed, "replicate")).map_err(&ctx)?;
    let est = run.estimate();
    let negatives = run.negatives();
    let pass = negatives == 0 && est.within(target, spec.tolerance());
    let mut samples_csv = Vec::new();
    run.write_csv(&mut samples_csv)?;
    let details = json!({
        "negatives": negatives,
        "overflows": run.overflows,
        "z_score": est.z_score(target),
    });
    Ok(Outcome {
        summary: summary(spec, est, pass, Some(target), details),
        samples_csv,
    })
}

#[derive(Serialize)]
struct ValueRow {
    rep: u64,
    value: f64,
}

fn negativity(spec: &ExperimentSpec) -> Result<Outcome> {
    let ctx = in_experiment(&spec.name);
    let stream = spec.stream.as_ref().expect("validated").build(spec.seed, "stream").map_err(&ctx)?;
    let trunc = spec.trunc.as_ref().expect("validated").build(spec.seed, "trunc").map_err(&ctx)?;
    let (report, values) =
        negativity_demo(&stream, &trunc, spec.reps, component_seed(spec.seed, "replicate")).map_err(&ctx)?;
    let p = report.fraction_negative;
    let n = report.reps.max(1) as f64;
    let est = Estimate {
        mean: p,
        stderr: (p * (1.0 - p) / n).sqrt(),
        n: report.reps,
    };
    let pass = match report.route {
        EstimatorRoute::Signed => report.ci99.0 > 0.0,
        EstimatorRoute::NonNegative => report.negatives == 0,
    };
    let details = json!({
        "route": report.route,
        "negatives": report.negatives,
        "fraction_negative": p,
        "ci99": [report.ci99.0, report.ci99.1],
        "mean_estimate": report.mean.mean,
        "mean_stderr": report.mean.stderr,
        "overflows": report.overflows,
    });
    let samples_csv = csv_rows(values.iter().enumerate().map(|(i, v)| ValueRow {
        rep: i as u64,
        value: *v,
    }))?;
    Ok(Outcome {
        summary: summary(spec, est, pass, None, details),
        samples_csv,
    })
}

fn increment(seq: &SequenceConfig, n: u64) -> f64 {
    if n == 0 {
        seq.limit - seq.scale * seq.ratio
    } else {
        seq.scale * seq.ratio.powi(n as i32) * (1.0 - seq.ratio)
    }
}

/// `E(Y²)` by summing over levels; `S_n` deterministic, so `Y` depends on
/// `N` alone.
fn closed_form_lhs(seq: &SequenceConfig, trunc: &TruncationLaw) -> f64 {
    let (mut y, mut total) = (CompensatedSum::new(), CompensatedSum::new());
    for n in 0..100_000u64 {
        y.add(trunc.weight(n) * increment(seq, n));
        total.add(trunc.mass(n) * y.value().powi(2));
        if trunc.survival(n + 1) < 1e-30 {
            break;
        }
    }
    total.value()
}

/// `Σ_{n ≤ n_max} w_n ((S − S_{n−1})² − (S − S_n)²)` with `S − S_n =
/// scale · ratio^(n+1)`.
fn closed_form_rhs(seq: &SequenceConfig, trunc: &TruncationLaw) -> f64 {
    let gap = |n: i64| if n < 0 { seq.limit } else { seq.scale * seq.ratio.powi(n as i32 + 1) };
    (0..=seq.n_max as i64)
        .map(|n| trunc.weight(n as u64) * (gap(n - 1).powi(2) - gap(n).powi(2)))
        .collect::<CompensatedSum>()
        .value()
}

fn variance_identity(spec: &ExperimentSpec) -> Result<Outcome> {
    let ctx = in_experiment(&spec.name);
    let seq = spec.sequence.as_ref().expect("validated");
    let trunc = spec.trunc.as_ref().expect("validated").build(spec.seed, "trunc").map_err(&ctx)?;
    let lhs_exact = closed_form_lhs(seq, &trunc);
    let rhs_exact = closed_form_rhs(seq, &trunc);
    let report = second_moment_identity(
        |_| IncrementSequence::new("deterministic", move |n| increment(seq, n)),
        &trunc,
        |_| seq.limit,
        seq.n_max,
        spec.reps,
        component_seed(spec.seed, "replicate"),
    )
    .map_err(&ctx)?;
    let target = spec.target.unwrap_or(rhs_exact);
    let closed_agree = (lhs_exact - rhs_exact).abs() <= 1e-9 * rhs_exact.abs().max(1.0);
    let pass = closed_agree && report.lhs.within(target, spec.tolerance());
    let details = json!({
        "lhs_closed_form": lhs_exact,
        "rhs_closed_form": rhs_exact,
        "lhs_mc": report.lhs.mean,
        "lhs_mc_stderr": report.lhs.stderr,
        "rhs_mc": report.rhs.mean,
        "rhs_mc_stderr": report.rhs.stderr,
        "overflows": report.overflows,
    });
    let mut samples_csv = Vec::new();
    report.write_csv(&mut samples_csv)?;
    Ok(Outcome {
        summary: summary(spec, report.lhs, pass, Some(target), details),
        samples_csv,
    })
}

#[derive(Serialize)]
struct Condition6Row {
    epsilon: f64,
    n: u32,
    holds: bool,
}

fn condition6(spec: &ExperimentSpec) -> Result<Outcome> {
    let ctx = in_experiment(&spec.name);
    let c = spec.condition6.as_ref().expect("validated");
    let grid = uniform_grid(c.a, c.b, c.points, |x| c.function.eval(c.a, x));
    let mut rows = Vec::new();
    for &epsilon in &c.epsilons {
        for &n in &c.degrees {
            let holds = condition6_check(&grid, epsilon, n).map_err(&ctx)?;
            rows.push(Condition6Row { epsilon, n, holds });
        }
    }
    let held = rows.iter().filter(|r| r.holds).count();
    let pass = rows.iter().all(|r| r.holds == c.expect);
    let est = Estimate {
        mean: held as f64 / rows.len() as f64,
        stderr: 0.0,
        n: rows.len() as u64,
    };
    let details = json!({
        "function": c.function,
        "interval": [c.a, c.b],
        "points": c.points,
        "pairs_checked": rows.len(),
        "pairs_holding": held,
        "expect": c.expect,
    });
    let target = Some(if c.expect { 1.0 } else { 0.0 });
    Ok(Outcome {
        summary: summary(spec, est, pass, target, details),
        samples_csv: csv_rows(rows)?,
    })
}

fn pm_mh(spec: &ExperimentSpec) -> Result<Outcome> {
    let ctx = in_experiment(&spec.name);
    let model_cfg = spec.model.as_ref().expect("validated");
    let chain = spec.chain.as_ref().expect("validated");
    let mh = |path: &str| MHConfig {
        proposal_sd: chain.proposal_sd,
        iterations: spec.reps,
        burn_in: chain.burn_in,
        seed: component_seed(spec.seed, path),
        initial_theta: chain.initial_theta,
    };
    let mut model = model_cfg.build(spec.seed, "model").map_err(&ctx)?;
    let record = pm_mh_run(&mut model, &mh("chain")).map_err(&ctx)?;
    let mean = record.posterior_mean();
    let variance = record.posterior_variance();
    let analytic = model_cfg.analytic_posterior().map_err(&ctx)?;
    let target = spec.target.or(analytic.map(|(m, _)| m));
    let tol = spec.tolerance();

    let mut pass = true;
    if let Some(t) = target {
        pass &= match chain.abs_tolerance {
            Some(abs) => (mean.mean - t).abs() <= abs,
            None => mean.within(t, tol),
        };
    }
    let mut details = json!({
        "acceptance_rate": record.acceptance_rate,
        "negative_estimates": record.negative_estimate_count,
        "posterior_variance": variance.mean,
        "posterior_variance_stderr": variance.stderr,
        "analytic_posterior_sd": analytic.map(|(_, sd)| sd),
        "abs_tolerance": chain.abs_tolerance,
    });
    if chain.compare_exact {
        let mut exact_model = ExactLikelihood(model_cfg.build(spec.seed, "model").map_err(&ctx)?);
        let exact = pm_mh_run(&mut exact_model, &mh("chain.exact")).map_err(&ctx)?;
        let exact_mean = exact.posterior_mean();
        let combined = mean.stderr.hypot(exact_mean.stderr);
        let agree = (mean.mean - exact_mean.mean).abs() <= tol * combined;
        if let Some((t, abs)) = target.zip(chain.abs_tolerance) {
            pass &= (exact_mean.mean - t).abs() <= abs;
        }
        pass &= agree;
        details["exact_chain_mean"] = json!(exact_mean.mean);
        details["exact_chain_stderr"] = json!(exact_mean.stderr);
        details["exact_chain_acceptance_rate"] = json!(exact.acceptance_rate);
        details["chains_agree"] = json!(agree);
    }
    let mut samples_csv = Vec::new();
    record.write_csv(&mut samples_csv)?;
    Ok(Outcome {
        summary: summary(spec, mean, pass, target, details),
        samples_csv,
    })
}

#[derive(Serialize)]
struct CoupledRow {
    rep: u64,
    value: f64,
    from_base: bool,
}

fn coupling(spec: &ExperimentSpec) -> Result<Outcome> {
    let ctx = in_experiment(&spec.name);
    let cfg = spec.coupling.as_ref().expect("validated");
    let base = spec.stream.as_ref().expect("validated").build(spec.seed, "stream").map_err(&ctx)?;
    let template = couple(base.clone(), cfg.lambda_y, cfg.epsilon).map_err(&ctx)?;
    let draws = replicate(
        spec.reps,
        component_seed(spec.seed, "replicate"),
        |block| couple(base.fork(block), cfg.lambda_y, cfg.epsilon).expect("validated above"),
        |c, _| c.sample_tagged(),
    );
    let est = draws.iter().map(|d| d.value).collect::<Moments>().summary();
    let fallbacks = draws.iter().filter(|d| !d.from_base).count() as u64;
    let ci = wilson_interval(fallbacks, spec.reps, Z99);
    let target = spec.target.unwrap_or(cfg.lambda_y);
    let tol = spec.tolerance();
    let mut pass = est.within(target, tol) && ci.0 <= cfg.epsilon && cfg.epsilon <= ci.1;
    let mut details = json!({
        "fallback": template.fallback(),
        "fallbacks": fallbacks,
        "fallback_rate": fallbacks as f64 / spec.reps as f64,
        "fallback_ci99": [ci.0, ci.1],
        "epsilon": cfg.epsilon,
        "support": template.support().to_string(),
    });
    if let Some(trunc_cfg) = &spec.trunc {
        let trunc = trunc_cfg.build(spec.seed, "trunc").map_err(&ctx)?;
        let shift = coupling_shift_demo(
            &base,
            cfg.lambda_y,
            cfg.epsilon,
            &trunc,
            spec.reps,
            component_seed(spec.seed, "paired"),
        )
        .map_err(&ctx)?;
        pass &= shift.base.within(shift.base_target, tol) && shift.coupled.within(shift.coupled_target, tol);
        details["paired"] = json!({
            "base_mean": shift.base.mean,
            "base_stderr": shift.base.stderr,
            "base_target": shift.base_target,
            "coupled_mean": shift.coupled.mean,
            "coupled_stderr": shift.coupled.stderr,
            "coupled_target": shift.coupled_target,
            "differing_fraction": shift.differing as f64 / shift.reps.max(1) as f64,
            "overflows": shift.overflows,
        });
    }
    let samples_csv = csv_rows(draws.iter().enumerate().map(|(i, d)| CoupledRow {
        rep: i as u64,
        value: d.value,
        from_base: d.from_base,
    }))?;
    Ok(Outcome {
        summary: summary(spec, est, pass, Some(target), details),
        samples_csv,
    })
}
