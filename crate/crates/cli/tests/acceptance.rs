//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use nonneg_core::debias::{estimate_at_level, second_moment_identity, IncrementSequence, TruncationLaw};
use nonneg_core::factories::{
    bernstein_factory, compose_factory, condition6_check, product_factory, replicate_factory, uniform_grid,
    BernsteinPoly, InverseFactory, InverseSeriesSequence, PowerSeries, PowerSeriesSequence, SeriesFactory,
};
use nonneg_core::pm_mcmc::{negativity_demo, pm_mh_run, GaussianModel, GaussianToy, LikelihoodNoise, MHConfig};
use nonneg_core::replicate::replicate;
use nonneg_core::stats::{wilson_interval, CompensatedSum, Moments, Z99};
use nonneg_core::streams::{couple, EstimatorStream, ReplayStream, Stream, SupportSpec};
use nonneg_factory::{registry, run};

type Check = fn() -> Verdict;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn geo() -> TruncationLaw {
    TruncationLaw::geometric(0.5, 0).unwrap()
}

fn within_budget(elapsed: Duration, secs: u64) -> bool {
    elapsed <= Duration::from_secs(secs)
}

fn poisson_unbiasedness() -> Verdict {
    let start = Instant::now();
    let f = SeriesFactory::poisson(EstimatorStream::shifted_exponential(0.0, 1.0, 1).unwrap(), geo()).unwrap();
    let run = replicate_factory(&f, 1_000_000, 101).unwrap();
    let est = run.estimate();
    let e = std::f64::consts::E;
    let elapsed = start.elapsed();
    verdict(
        est.within(e, 4.0) && run.negatives() == 0 && run.overflows == 0 && within_budget(elapsed, 30),
        format!(
            "mean {:.5} se {:.5} z {:+.2}, negatives {}, {:.2?}",
            est.mean,
            est.stderr,
            est.z_score(e),
            run.negatives(),
            elapsed
        ),
    )
}

fn exhaustive_enumeration() -> Verdict {
    let start = Instant::now();
    let series = PowerSeries::exponential(0.0).unwrap();
    let law = geo();
    let cap = 20u32;
    let support = SupportSpec::LowerBounded { a: 0.0 };
    let mut e = CompensatedSum::new();
    for n in 0..=cap {
        // Level `cap` absorbs the tail mass of N.
        let p_n = if n == cap { law.survival(n as u64) } else { law.mass(n as u64) };
        let p_word = 0.5f64.powi(n as i32);
        for code in 0..1u32 << n {
            let word: Vec<f64> = (0..n).map(|i| 2.0 * ((code >> i) & 1) as f64).collect();
            let mut stream = ReplayStream::new(word, support).unwrap();
            let mut seq = PowerSeriesSequence::new(&series, &mut stream);
            e.add(p_n * p_word * estimate_at_level(&mut seq, &law, n as u64).value);
        }
    }
    // With inputs on {0, 2} and λ = 1 the capped series is Σ_{k ≤ 20} 1/k!.
    let capped: f64 = (0..=cap).map(|k| 1.0 / (1..=k).map(f64::from).product::<f64>()).sum();
    let err = (e.value() - capped).abs();
    let elapsed = start.elapsed();
    verdict(
        err < 1e-10 && within_budget(elapsed, 5),
        format!("enumerated {:.15} vs {:.15}, |diff| {err:.1e}, {elapsed:.2?}", e.value(), capped),
    )
}

fn second_moment_identity_check() -> Verdict {
    let start = Instant::now();
    let law = geo();
    // S_n = 1 − 2^-(n+1): increments 2^-(n+1), Y = (N + 1)/2.
    let inc = |n: u64| 0.5f64.powi(n as i32 + 1);
    let lhs_closed: f64 = (0..2000u64)
        .map(|n| law.mass(n) * ((n as f64 + 1.0) / 2.0).powi(2))
        .collect::<CompensatedSum>()
        .value();
    let rhs_partials: Vec<f64> = (0..=200u64)
        .scan(CompensatedSum::new(), |acc, n| {
            let gap = |k: i64| if k < 0 { 1.0 } else { 0.5f64.powi(k as i32 + 1) };
            let k = n as i64;
            acc.add(law.weight(n) * (gap(k - 1).powi(2) - gap(k).powi(2)));
            Some(acc.value())
        })
        .collect();
    let rhs = *rhs_partials.last().unwrap();
    let report = second_moment_identity(|_| IncrementSequence::new("halving", inc), &law, |_| 1.0, 200, 1_000_000, 7).unwrap();
    let elapsed = start.elapsed();
    let closed_ok = (lhs_closed - 1.5).abs() < 1e-12 && (rhs - 1.5).abs() < 1e-12;
    verdict(
        closed_ok && report.lhs.within(lhs_closed, 3.0) && within_budget(elapsed, 10),
        format!(
            "closed lhs {lhs_closed:.12} rhs {rhs:.12}; MC lhs {:.5} se {:.5} z {:+.2}, {elapsed:.2?}",
            report.lhs.mean,
            report.lhs.stderr,
            report.lhs.z_score(lhs_closed)
        ),
    )
}

fn inverse_factory_check() -> Verdict {
    let f = InverseFactory::new(EstimatorStream::uniform(1.0, 2.0, 3).unwrap(), geo()).unwrap();
    let run = replicate_factory(&f, 1_000_000, 202).unwrap();
    let est = run.estimate();
    let support = SupportSpec::Interval { a: 1.0, b: 2.0 };
    let law = geo();
    let mut worst = 0.0f64;
    for c in [1.0, 1.25, 1.5, 1.75, 2.0] {
        let mut e = CompensatedSum::new();
        for n in 0..400 {
            let mut s = EstimatorStream::point_mass(c, 0).unwrap().with_support(support).unwrap();
            let mut seq = InverseSeriesSequence::new(2.0, &mut s);
            e.add(law.mass(n) * estimate_at_level(&mut seq, &law, n).value);
        }
        worst = worst.max((e.value() - 1.0 / c).abs());
    }
    verdict(
        est.within(2.0 / 3.0, 4.0) && run.negatives() == 0 && worst < 1e-12,
        format!(
            "mean {:.5} se {:.5} z {:+.2}, negatives {}, point-mass max err {worst:.1e}",
            est.mean,
            est.stderr,
            est.z_score(2.0 / 3.0),
            run.negatives()
        ),
    )
}

fn coupling_construction() -> Verdict {
    let base = EstimatorStream::gaussian(0.0, 1.0, 4).unwrap();
    let reps = 1_000_000u64;
    let draws = replicate(
        reps,
        303,
        |block| couple(base.fork(block), 1.0, 0.1).unwrap(),
        |c, _| c.sample_tagged(),
    );
    let est = draws.iter().map(|d| d.value).collect::<Moments>().summary();
    let fallbacks = draws.iter().filter(|d| !d.from_base).count() as u64;
    let (lo, hi) = wilson_interval(fallbacks, reps, Z99);
    verdict(
        est.within(1.0, 4.0) && lo <= 0.1 && 0.1 <= hi,
        format!(
            "mean {:.5} se {:.5} z {:+.2}, fallback rate {:.5} in [{lo:.5}, {hi:.5}]",
            est.mean,
            est.stderr,
            est.z_score(1.0),
            fallbacks as f64 / reps as f64
        ),
    )
}

fn sign_problem() -> Verdict {
    let gaussian = EstimatorStream::gaussian(0.0, 1.0, 5).unwrap();
    let (signed, _) = negativity_demo(&gaussian, &geo(), 1_000_000, 404).unwrap();
    let bounded = EstimatorStream::shifted_exponential(-1.0, 1.0, 5).unwrap();
    let (nonneg, _) = negativity_demo(&bounded, &geo(), 1_000_000, 404).unwrap();
    verdict(
        signed.fraction_negative > 0.0 && signed.ci99.0 > 0.0 && nonneg.negatives == 0,
        format!(
            "gaussian: negative fraction {:.5}, 99% CI [{:.5}, {:.5}]; lower-bounded: {} negatives",
            signed.fraction_negative, signed.ci99.0, signed.ci99.1, nonneg.negatives
        ),
    )
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernstein_exactness() -> Verdict {
    // Every coefficient vector over a value set that includes entries above 1;
    // those are brought into [0, 1] by the gamma scale.
    let levels = [0.0, 0.3, 0.5, 1.0, 2.5];
    let support = SupportSpec::Interval { a: 0.0, b: 1.0 };
    let (mut checked, mut worst) = (0u64, 0.0f64);
    for d in 0..=3usize {
        for code in 0..levels.len().pow(d as u32 + 1) {
            let coeffs: Vec<f64> = (0..=d).map(|k| levels[code / levels.len().pow(k as u32) % levels.len()]).collect();
            let gamma = coeffs.iter().copied().fold(0.0, f64::max).max(1.0);
            let poly = BernsteinPoly::new(coeffs.iter().map(|c| c / gamma).collect()).unwrap();
            for z in [0.0f64, 0.25, 0.5, 0.75, 1.0] {
                let f: f64 = (0..=d)
                    .map(|k| coeffs[k] * binomial(d, k) * z.powi(k as i32) * (1.0 - z).powi((d - k) as i32))
                    .sum();
                let mut e = CompensatedSum::new();
                for word in 0..1usize << d {
                    let coins: Vec<f64> = (0..d).map(|i| ((word >> i) & 1) as f64).collect();
                    let heads = coins.iter().filter(|&&c| c == 1.0).count() as i32;
                    let p = z.powi(heads) * (1.0 - z).powi(d as i32 - heads);
                    let mut stream = ReplayStream::new(coins, support).unwrap();
                    e.add(p * bernstein_factory(&poly, gamma, &mut stream).unwrap().value);
                }
                worst = worst.max((e.value() - f).abs());
                checked += 1;
            }
        }
    }
    verdict(worst < 1e-12, format!("{checked} (polynomial, z) pairs, max err {worst:.1e}"))
}

fn condition6() -> Verdict {
    let quadratic = uniform_grid(0.0, 1.0, 10_000, |x| x * (1.0 - x));
    let holds = condition6_check(&quadratic, 0.5, 1).unwrap();
    let flat = uniform_grid(0.0, 1.0, 10_000, |x| if x <= 0.0 { 0.0 } else { (-1.0 / x).exp() });
    let epsilons = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0];
    let mut accepted = Vec::new();
    for &eps in &epsilons {
        for n in 1..=8 {
            if condition6_check(&flat, eps, n).unwrap() {
                accepted.push((eps, n));
            }
        }
    }
    verdict(
        holds && accepted.is_empty(),
        format!(
            "x(1-x): {holds}; exp(-1/x): {} of {} (eps, n) pairs accepted",
            accepted.len(),
            epsilons.len() * 8
        ),
    )
}

fn pseudo_marginal() -> Verdict {
    let start = Instant::now();
    let toy = GaussianToy::synthetic(20, 1.0, 1.0, 2024).unwrap();
    let (post_mean, _) = toy.posterior();
    let config = |seed| MHConfig::new(0.5, 100_000, 2_000, seed);
    let mut exact = GaussianModel::new(toy.clone(), LikelihoodNoise::Exact, 1);
    let mut noisy = GaussianModel::new(toy, LikelihoodNoise::LogNormal { sigma: 0.5 }, 2);
    let a = pm_mh_run(&mut exact, &config(21)).unwrap().posterior_mean();
    let b = pm_mh_run(&mut noisy, &config(22)).unwrap().posterior_mean();
    let combined = a.stderr.hypot(b.stderr);
    let elapsed = start.elapsed();
    let pass = (a.mean - post_mean).abs() <= 0.05
        && (b.mean - post_mean).abs() <= 0.05
        && (a.mean - b.mean).abs() <= 4.0 * combined
        && within_budget(elapsed, 60);
    verdict(
        pass,
        format!(
            "analytic {post_mean:.4}; exact chain {:.4} (se {:.4}); noisy chain {:.4} (se {:.4}); gap {:.2} combined se, {elapsed:.2?}",
            a.mean,
            a.stderr,
            b.mean,
            b.stderr,
            (a.mean - b.mean).abs() / combined
        ),
    )
}

fn closure_combinators() -> Verdict {
    let poisson_at_zero = |seed| {
        SeriesFactory::poisson(EstimatorStream::point_mass(0.0, seed).unwrap(), TruncationLaw::geometric(0.5, seed).unwrap())
            .unwrap()
    };
    let product = product_factory(poisson_at_zero(1), poisson_at_zero(2));
    let run = replicate_factory(&product, 100_000, 505).unwrap();
    let all_one = run.samples.iter().all(|s| s.value == 1.0);

    let inner = InverseFactory::new(EstimatorStream::uniform(1.0, 2.0, 6).unwrap(), geo()).unwrap();
    let compose = compose_factory(PowerSeries::exponential(0.0).unwrap(), inner, geo()).unwrap();
    let target = (2.0f64 / 3.0).exp();
    let est = replicate_factory(&compose, 1_000_000, 606).unwrap().estimate();
    verdict(
        all_one && est.within(target, 4.0),
        format!(
            "product all exactly 1: {all_one}; compose mean {:.5} se {:.5} vs {target:.5} (z {:+.2})",
            est.mean,
            est.stderr,
            est.z_score(target)
        ),
    )
}

fn reproducibility() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut mismatched = Vec::new();
    let mut count = 0;
    for name in registry::names() {
        let spec = registry::lookup(name).unwrap();
        let first = run(&spec).unwrap();
        // Second run on one thread: output must not depend on scheduling.
        let second = single.install(|| run(&spec)).unwrap();
        first.write(dirs[0].path()).unwrap();
        second.write(dirs[1].path()).unwrap();
        let file = format!("{name}.samples.csv");
        let a = std::fs::read(dirs[0].path().join(&file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(&file)).unwrap();
        if a != b || a.is_empty() {
            mismatched.push(name);
        }
        count += 1;
    }
    verdict(
        mismatched.is_empty(),
        format!("{count} shipped experiments, byte-identical CSV on rerun; mismatches: {mismatched:?}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 11] = [
        ("poisson estimator unbiasedness", poisson_unbiasedness),
        ("exhaustive enumeration, N <= 20", exhaustive_enumeration),
        ("second-moment identity", second_moment_identity_check),
        ("inverse factory", inverse_factory_check),
        ("coupling construction", coupling_construction),
        ("sign problem", sign_problem),
        ("bernstein factory exactness", bernstein_exactness),
        ("polynomial envelope checker", condition6),
        ("pseudo-marginal exactness", pseudo_marginal),
        ("closure combinators", closure_combinators),
        ("reproducibility", reproducibility),
    ];
    let mut failures = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        println!("[{}] {:>2}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        failures += usize::from(!v.pass);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
