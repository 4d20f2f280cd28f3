//! Random-truncation debiasing.
//!
//! Given approximations `S_0, S_1, …` whose means converge to `λ`, and an
//! independent integer `N` with `P(N ≥ n) > 0` for every `n`, the random sum
//!
//! ```text
//! Y = Σ_{n=0}^{N} w_n (S_n − S_{n−1}),   w_n = 1 / P(N ≥ n),   S_{−1} = 0
//! ```
//!
//! is unbiased for `λ` whenever `Σ_{n≥1} w_n E|S − S_{n−1}|² < ∞`, and then
//! `E(Y²) = Σ_{n≥0} w_n (E|S − S_{n−1}|² − E|S − S_n|²)`.
//! [`second_moment_identity`] checks that identity by Monte Carlo, and
//! [`variance_condition_probe`] tabulates the summands of the finiteness
//! condition as a (non-rigorous) divergence warning.

use std::io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::replicate::replicate_fold;
use crate::rng::{component_seed, open_unit, rng_from_seed, split_seed, SimRng};
use crate::stats::{CompensatedSum, Estimate, Moments};

/// Hard cap on a realised truncation level.
pub const DEFAULT_LEVEL_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trunc", rename_all = "snake_case")]
pub enum TruncationKind {
    /// `P(N ≥ n) = (1 − rho)^n`.
    Geometric { rho: f64 },
    /// `P(N ≥ n) = (1 + n)^(−alpha)`.
    PolynomialTail {
        alpha: f64,
        #[serde(default)]
        n_max_hint: u64,
    },
    /// `N = n0`. Biased; diagnostics only.
    Deterministic { n0: u64 },
}

impl TruncationKind {
    fn validate(&self) -> Result<()> {
        match *self {
            TruncationKind::Geometric { rho } if !(rho > 0.0 && rho < 1.0) => {
                Err(invalid(format!("geometric rho must lie in (0, 1), got {rho}")))
            }
            TruncationKind::PolynomialTail { alpha, .. } if !(alpha > 1.0 && alpha.is_finite()) => {
                Err(invalid(format!("polynomial tail alpha must exceed 1, got {alpha}")))
            }
            _ => Ok(()),
        }
    }
}

/// Law of the truncation level `N`, with its own generator.
#[derive(Debug, Clone)]
pub struct TruncationLaw {
    kind: TruncationKind,
    cap: u64,
    seed: u64,
    rng: SimRng,
}

impl TruncationLaw {
    pub fn new(kind: TruncationKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            cap: DEFAULT_LEVEL_CAP,
            seed,
            rng: rng_from_seed(seed),
        })
    }

    pub fn geometric(rho: f64, seed: u64) -> Result<Self> {
        Self::new(TruncationKind::Geometric { rho }, seed)
    }

    pub fn polynomial_tail(alpha: f64, n_max_hint: u64, seed: u64) -> Result<Self> {
        Self::new(TruncationKind::PolynomialTail { alpha, n_max_hint }, seed)
    }

    pub fn deterministic(n0: u64, seed: u64) -> Result<Self> {
        Self::new(TruncationKind::Deterministic { n0 }, seed)
    }

    pub fn with_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }

    pub fn kind(&self) -> TruncationKind {
        self.kind
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Same law and cap, fresh generator.
    pub fn fork(&self, seed: u64) -> Self {
        Self {
            rng: rng_from_seed(seed),
            seed,
            ..self.clone()
        }
    }

    /// Whether `P(N ≥ n) > 0` for all `n`.
    pub fn is_unbounded(&self) -> bool {
        !matches!(self.kind, TruncationKind::Deterministic { .. })
    }

    /// `P(N ≥ n)`.
    pub fn survival(&self, n: u64) -> f64 {
        match self.kind {
            TruncationKind::Geometric { rho } => (1.0 - rho).powf(n as f64),
            TruncationKind::PolynomialTail { alpha, .. } => (1.0 + n as f64).powf(-alpha),
            TruncationKind::Deterministic { n0 } => {
                if n <= n0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `P(N = n)`.
    pub fn mass(&self, n: u64) -> f64 {
        self.survival(n) - self.survival(n + 1)
    }

    /// `w_n = 1 / P(N ≥ n)`; zero where the survival vanishes.
    pub fn weight(&self, n: u64) -> f64 {
        let s = self.survival(n);
        if s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    }

    /// A suggested horizon for tabulating diagnostics.
    pub fn horizon_hint(&self) -> u64 {
        match self.kind {
            TruncationKind::Geometric { rho } => ((40.0 / rho).ceil() as u64).min(200),
            TruncationKind::PolynomialTail { n_max_hint, .. } => n_max_hint,
            TruncationKind::Deterministic { n0 } => n0,
        }
    }

    /// Draws `N`, failing if it exceeds the cap.
    pub fn sample_level(&mut self) -> Result<u64> {
        let raw = match self.kind {
            TruncationKind::Geometric { rho } => {
                let u = open_unit(&mut self.rng);
                (u.ln() / (1.0 - rho).ln()).floor()
            }
            TruncationKind::PolynomialTail { alpha, .. } => {
                let u = open_unit(&mut self.rng);
                u.powf(-1.0 / alpha).floor() - 1.0
            }
            TruncationKind::Deterministic { n0 } => n0 as f64,
        };
        if raw > self.cap as f64 {
            let level = if raw >= u64::MAX as f64 { u64::MAX } else { raw as u64 };
            return Err(Error::TruncationOverflow { level, cap: self.cap });
        }
        Ok(raw.max(0.0) as u64)
    }
}

/// A sequence `S_0, S_1, …` delivered as increments `S_n − S_{n−1}`.
///
/// Increments are requested strictly in order; `S_{−1} = 0`, so the first
/// increment is `S_0` itself.
pub trait ApproximationSequence {
    fn next_increment(&mut self) -> f64;

    fn label(&self) -> &str {
        "sequence"
    }
}

impl<Q: ApproximationSequence + ?Sized> ApproximationSequence for &mut Q {
    fn next_increment(&mut self) -> f64 {
        (**self).next_increment()
    }

    fn label(&self) -> &str {
        (**self).label()
    }
}

/// Deterministic sequence given by a closed form for `S_n`.
pub struct ClosedFormSequence<F> {
    term: F,
    n: u64,
    prev: f64,
    label: String,
}

impl<F: Fn(u64) -> f64> ClosedFormSequence<F> {
    pub fn new(label: impl Into<String>, term: F) -> Self {
        Self {
            term,
            n: 0,
            prev: 0.0,
            label: label.into(),
        }
    }
}

impl<F: Fn(u64) -> f64> ApproximationSequence for ClosedFormSequence<F> {
    fn next_increment(&mut self) -> f64 {
        let s = (self.term)(self.n);
        self.n += 1;
        let inc = s - self.prev;
        self.prev = s;
        inc
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Sequence given directly by its increments `n ↦ S_n − S_{n−1}`.
pub struct IncrementSequence<F> {
    increment: F,
    n: u64,
    label: String,
}

impl<F: FnMut(u64) -> f64> IncrementSequence<F> {
    pub fn new(label: impl Into<String>, increment: F) -> Self {
        Self {
            increment,
            n: 0,
            label: label.into(),
        }
    }
}

impl<F: FnMut(u64) -> f64> ApproximationSequence for IncrementSequence<F> {
    fn next_increment(&mut self) -> f64 {
        let inc = (self.increment)(self.n);
        self.n += 1;
        inc
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// One realisation of the debiased estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DebiasSample {
    pub value: f64,
    /// Realised `N`.
    pub n_drawn: u64,
    /// Increments summed, always `n_drawn + 1`.
    pub terms: u64,
}

/// `Σ_{n=0}^{level} w_n (S_n − S_{n−1})` for a given realised level.
pub fn estimate_at_level<Q: ApproximationSequence + ?Sized>(seq: &mut Q, trunc: &TruncationLaw, level: u64) -> DebiasSample {
    let mut sum = CompensatedSum::new();
    for n in 0..=level {
        let inc = seq.next_increment();
        if inc != 0.0 {
            sum.add(trunc.weight(n) * inc);
        }
    }
    DebiasSample {
        value: sum.value(),
        n_drawn: level,
        terms: level + 1,
    }
}

/// Draws `N` from `trunc` and returns the debiased estimate.
///
/// Rejects truncation laws with finite support, which would make the
/// estimate biased; [`rhee_glynn_biased`] accepts them for diagnostics.
pub fn rhee_glynn<Q: ApproximationSequence + ?Sized>(seq: &mut Q, trunc: &mut TruncationLaw) -> Result<DebiasSample> {
    if !trunc.is_unbounded() {
        return Err(Error::DegenerateTruncation(format!("{:?}", trunc.kind())));
    }
    rhee_glynn_biased(seq, trunc)
}

/// [`rhee_glynn`] without the unbounded-support check. With
/// `Deterministic(n0)` this is the plain partial sum `S_{n0}`.
pub fn rhee_glynn_biased<Q: ApproximationSequence + ?Sized>(seq: &mut Q, trunc: &mut TruncationLaw) -> Result<DebiasSample> {
    let level = trunc.sample_level()?;
    Ok(estimate_at_level(seq, trunc, level))
}

/// One row of a per-level table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub n: u64,
    pub w_n: f64,
    pub summand: f64,
    pub stderr: f64,
}

fn write_rows<W: io::Write>(rows: &[LevelRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Both sides of the second-moment identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    /// Monte Carlo estimate of `E(Y²)`.
    pub lhs: Estimate,
    /// Monte Carlo estimate of the series truncated at `n_max`.
    pub rhs: Estimate,
    /// Per-level series terms `w_n (E|S − S_{n−1}|² − E|S − S_n|²)`.
    pub rows: Vec<LevelRow>,
    /// Replications dropped because `N` exceeded the cap.
    pub overflows: u64,
}

impl IdentityReport {
    pub fn combined_stderr(&self) -> f64 {
        self.lhs.stderr.hypot(self.rhs.stderr)
    }

    /// Whether the two sides agree within `k` combined standard errors.
    pub fn agrees(&self, k: f64) -> bool {
        (self.lhs.mean - self.rhs.mean).abs() <= k * self.combined_stderr()
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&self.rows, out)
    }
}

/// Draws `S_0..=S_{n_max}` from a fresh replica, then asks the oracle for
/// `S` on the same replica. Returns the partial sums and `S`.
fn partials_and_limit<Q, O>(seq: &mut Q, n_max: u64, s_oracle: &O) -> (Vec<f64>, f64)
where
    Q: ApproximationSequence,
    O: Fn(&mut Q) -> f64,
{
    let mut acc = CompensatedSum::new();
    let partials = (0..=n_max)
        .map(|_| {
            acc.add(seq.next_increment());
            acc.value()
        })
        .collect();
    let s = s_oracle(seq);
    (partials, s)
}

/// Monte Carlo check of `E(Y²) = Σ w_n (E|S − S_{n−1}|² − E|S − S_n|²)`.
///
/// `make_seq` builds a fresh replica from a seed. `s_oracle` is handed a
/// replica after `S_0..=S_{n_max}` were drawn from it and must return `S` on
/// the same randomness (for example by running the sequence to convergence).
pub fn second_moment_identity<Q, M, O>(
    make_seq: M,
    trunc: &TruncationLaw,
    s_oracle: O,
    n_max: u64,
    reps: u64,
    seed: u64,
) -> Result<IdentityReport>
where
    Q: ApproximationSequence,
    M: Fn(u64) -> Q + Sync,
    O: Fn(&mut Q) -> f64 + Sync,
{
    if n_max == 0 || reps == 0 {
        return Err(invalid("n_max and reps must be at least 1"));
    }
    let width = n_max as usize + 1;

    let (lhs, overflows) = replicate_fold(
        reps,
        component_seed(seed, "identity.lhs"),
        |block| (rng_from_seed(block), trunc.fork(split_seed(block, 1))),
        |(rng, t), (m, over): &mut (Moments, u64), _| {
            let mut seq = make_seq(rng.random());
            match rhee_glynn_biased(&mut seq, t) {
                Ok(y) => m.push(y.value * y.value),
                Err(_) => *over += 1,
            }
        },
        || (Moments::new(), 0u64),
        |(a, oa), (b, ob)| (a.merge(b), oa + ob),
    );

    let weights: Vec<f64> = (0..=n_max).map(|n| trunc.weight(n)).collect();
    let (per_level, total) = replicate_fold(
        reps,
        component_seed(seed, "identity.rhs"),
        rng_from_seed,
        |rng, (levels, total): &mut (Vec<Moments>, Moments), _| {
            let mut seq = make_seq(rng.random());
            let (partials, s) = partials_and_limit(&mut seq, n_max, &s_oracle);
            let mut sum = CompensatedSum::new();
            let mut prev_gap = s * s;
            for (n, s_n) in partials.iter().enumerate() {
                let gap = (s - s_n).powi(2);
                let term = weights[n] * (prev_gap - gap);
                levels[n].push(term);
                sum.add(term);
                prev_gap = gap;
            }
            total.push(sum.value());
        },
        || (vec![Moments::new(); width], Moments::new()),
        |(a, ta), (b, tb)| {
            let merged = a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect();
            (merged, ta.merge(tb))
        },
    );

    let rows = per_level
        .iter()
        .enumerate()
        .map(|(n, m)| LevelRow {
            n: n as u64,
            w_n: weights[n],
            summand: m.mean(),
            stderr: m.stderr(),
        })
        .collect();

    if overflows > 0 {
        log::warn!("{overflows} replications exceeded the truncation cap and were excluded");
    }

    Ok(IdentityReport {
        lhs: lhs.summary(),
        rhs: total.summary(),
        rows,
        overflows,
    })
}

/// Tabulated summands `w_n Ê|S − S_{n−1}|²` of the finite-variance condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub rows: Vec<LevelRow>,
    /// Mean summand over the last quartile of levels exceeds the mean over
    /// the quartile before it. A heuristic, not a proof of divergence.
    pub growing: bool,
}

impl ProbeReport {
    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        write_rows(&self.rows, out)
    }
}

/// Compares the mean of the last quartile of `summands` with the quartile
/// before it.
pub fn tail_is_growing(summands: &[f64]) -> bool {
    let q = summands.len() / 4;
    if q == 0 {
        return false;
    }
    let len = summands.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    mean(&summands[len - q..]) > mean(&summands[len - 2 * q..len - q])
}

/// Diagnostic table for `Σ_n w_n E|S − S_{n−1}|² < ∞` over `n = 0..=n_max`.
pub fn variance_condition_probe<Q, M, O>(
    make_seq: M,
    trunc: &TruncationLaw,
    s_oracle: O,
    n_max: u64,
    reps: u64,
    seed: u64,
) -> Result<ProbeReport>
where
    Q: ApproximationSequence,
    M: Fn(u64) -> Q + Sync,
    O: Fn(&mut Q) -> f64 + Sync,
{
    if n_max == 0 || reps == 0 {
        return Err(invalid("n_max and reps must be at least 1"));
    }
    let width = n_max as usize + 1;
    let weights: Vec<f64> = (0..=n_max).map(|n| trunc.weight(n)).collect();
    let levels = replicate_fold(
        reps,
        component_seed(seed, "probe"),
        rng_from_seed,
        |rng, levels: &mut Vec<Moments>, _| {
            let mut seq = make_seq(rng.random());
            let (partials, s) = partials_and_limit(&mut seq, n_max, &s_oracle);
            let mut prev = 0.0;
            for (n, s_n) in partials.iter().enumerate() {
                levels[n].push(weights[n] * (s - prev).powi(2));
                prev = *s_n;
            }
        },
        || vec![Moments::new(); width],
        |a, b| a.into_iter().zip(b).map(|(x, y)| x.merge(y)).collect(),
    );
    let rows: Vec<LevelRow> = levels
        .iter()
        .enumerate()
        .map(|(n, m)| LevelRow {
            n: n as u64,
            w_n: weights[n],
            summand: m.mean(),
            stderr: m.stderr(),
        })
        .collect();
    let summands: Vec<f64> = rows.iter().map(|r| r.summand).collect();
    Ok(ProbeReport {
        growing: tail_is_growing(&summands),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::wilson_interval;

    fn halving() -> ClosedFormSequence<impl Fn(u64) -> f64> {
        ClosedFormSequence::new("1 - 2^-(n+1)", |n| 1.0 - 0.5f64.powi(n as i32 + 1))
    }

    #[test]
    fn survival_starts_at_one_and_weights_invert_it() {
        let laws = [
            TruncationLaw::geometric(0.5, 0).unwrap(),
            TruncationLaw::geometric(0.1, 0).unwrap(),
            TruncationLaw::polynomial_tail(1.5, 100, 0).unwrap(),
            TruncationLaw::polynomial_tail(3.0, 100, 0).unwrap(),
        ];
        for law in &laws {
            assert_eq!(law.survival(0), 1.0);
            assert_eq!(law.weight(0), 1.0);
            for n in 0..200 {
                assert!(law.survival(n + 1) <= law.survival(n));
                assert!(law.survival(n) > 0.0);
                assert!((law.weight(n) * law.survival(n) - 1.0).abs() < 1e-15);
            }
        }
        // Powers of two are exact.
        let half = &laws[0];
        for n in 0..1000 {
            assert_eq!(half.weight(n) * half.survival(n), 1.0);
        }
    }

    #[test]
    fn invalid_laws_rejected() {
        assert!(TruncationLaw::geometric(0.0, 0).is_err());
        assert!(TruncationLaw::geometric(1.0, 0).is_err());
        assert!(TruncationLaw::polynomial_tail(1.0, 10, 0).is_err());
    }

    #[test]
    fn sampled_levels_match_survival() {
        for mut law in [
            TruncationLaw::geometric(0.5, 3).unwrap(),
            TruncationLaw::geometric(0.2, 4).unwrap(),
            TruncationLaw::polynomial_tail(2.0, 50, 5).unwrap(),
        ] {
            let reps = 200_000u64;
            let levels: Vec<u64> = (0..reps).map(|_| law.sample_level().unwrap()).collect();
            for n in 0..8 {
                let hits = levels.iter().filter(|&&l| l >= n).count() as u64;
                // 24 comparisons, so a wider band than the 99% one.
                let (lo, hi) = wilson_interval(hits, reps, 4.0);
                let p = law.survival(n);
                assert!(lo <= p && p <= hi, "{:?} n={n}: {p} not in [{lo}, {hi}]", law.kind());
            }
        }
    }

    #[test]
    fn cap_overflow_is_reported() {
        let mut law = TruncationLaw::polynomial_tail(1.01, 10, 1).unwrap().with_cap(2);
        let outcomes: Vec<_> = (0..1000).map(|_| law.sample_level()).collect();
        assert!(outcomes
            .iter()
            .any(|o| matches!(o, Err(Error::TruncationOverflow { cap: 2, .. }))));
        assert!(outcomes.iter().filter_map(|o| o.as_ref().ok()).all(|&l| l <= 2));
    }

    #[test]
    fn constant_sequence_is_exact() {
        let mut law = TruncationLaw::geometric(0.3, 9).unwrap();
        for _ in 0..1000 {
            let mut seq = ClosedFormSequence::new("const", |_| 2.5);
            let y = rhee_glynn(&mut seq, &mut law).unwrap();
            assert_eq!(y.value, 2.5);
            assert_eq!(y.terms, y.n_drawn + 1);
        }
    }

    #[test]
    fn deterministic_level_zero_returns_first_term() {
        let mut law = TruncationLaw::deterministic(0, 0).unwrap();
        let mut seq = halving();
        assert_eq!(rhee_glynn_biased(&mut seq, &mut law).unwrap().value, 0.5);
        let mut seq = halving();
        assert!(matches!(rhee_glynn(&mut seq, &mut law), Err(Error::DegenerateTruncation(_))));
    }

    #[test]
    fn halving_sequence_hand_values() {
        let law = TruncationLaw::geometric(0.5, 0).unwrap();
        assert_eq!(estimate_at_level(&mut halving(), &law, 0).value, 0.5);
        assert_eq!(estimate_at_level(&mut halving(), &law, 1).value, 1.0);
        // Each term contributes w_n 2^-(n+1) = 1/2. Past n ≈ 52 the partial
        // sums round to 1 and the increments are no longer exact.
        for n in 0..50 {
            assert_eq!(estimate_at_level(&mut halving(), &law, n).value, (n as f64 + 1.0) / 2.0);
        }
    }

    #[test]
    fn enumeration_over_levels_is_unbiased() {
        // E(Y) = Σ_n P(N = n) y(n), with the tail beyond 200 below 2^-200.
        for rho in [0.5, 0.3] {
            let law = TruncationLaw::geometric(rho, 0).unwrap();
            let mut e = CompensatedSum::new();
            for n in 0..200 {
                e.add(law.mass(n) * estimate_at_level(&mut halving(), &law, n).value);
            }
            assert!((e.value() - 1.0).abs() < 1e-12, "rho={rho}: {}", e.value());
        }
    }

    #[test]
    fn identity_for_constant_sequence() {
        let law = TruncationLaw::geometric(0.5, 1).unwrap();
        let report = second_moment_identity(
            |_| ClosedFormSequence::new("const", |_| 3.0),
            &law,
            |_| 3.0,
            10,
            1000,
            4,
        )
        .unwrap();
        assert_eq!(report.lhs.mean, 9.0);
        assert_eq!(report.rhs.mean, 9.0);
        assert_eq!(report.rows[0].summand, 9.0);
        assert!(report.rows[1..].iter().all(|r| r.summand == 0.0));
    }

    #[test]
    fn identity_for_halving_sequence_closed_form() {
        // Y = (N + 1) / 2 with P(N = n) = 2^-(n+1): E(Y²) = E(N+1)²/4 = 6/4.
        let law = TruncationLaw::geometric(0.5, 0).unwrap();
        let lhs: f64 = (0..200)
            .map(|n| law.mass(n) * ((n as f64 + 1.0) / 2.0).powi(2))
            .sum();
        assert!((lhs - 1.5).abs() < 1e-12);
        // Series terms are (3/4) 2^-n.
        let report = second_moment_identity(|_| halving(), &law, |_| 1.0, 50, 10, 0).unwrap();
        for row in &report.rows {
            assert!((row.summand - 0.75 * 0.5f64.powi(row.n as i32)).abs() < 1e-15);
        }
        assert!((report.rhs.mean - 1.5).abs() < 1e-12);
    }

    #[test]
    fn probe_flags_nothing_for_constant_sequence() {
        let law = TruncationLaw::geometric(0.5, 0).unwrap();
        let probe = variance_condition_probe(|_| ClosedFormSequence::new("c", |_| 1.0), &law, |_| 1.0, 20, 100, 0).unwrap();
        assert_eq!(probe.rows[0].summand, 1.0);
        assert!(probe.rows[1..].iter().all(|r| r.summand == 0.0));
        assert!(!probe.growing);
    }

    #[test]
    fn probe_flags_heavy_weights_on_slow_sequence() {
        // S_n − S = 2^(−n/4) with S = 0, w_n = 4^n.
        let law = TruncationLaw::geometric(0.75, 0).unwrap();
        let probe = variance_condition_probe(
            |_| ClosedFormSequence::new("slow", |n| 2f64.powf(-(n as f64) / 4.0)),
            &law,
            |_| 0.0,
            24,
            10,
            0,
        )
        .unwrap();
        for row in &probe.rows[1..] {
            let expected = 4f64.powi(row.n as i32) * 2f64.powf(-((row.n - 1) as f64) / 2.0);
            assert!((row.summand / expected - 1.0).abs() < 1e-9);
        }
        assert!(probe.growing);
    }

    #[test]
    fn quartile_heuristic() {
        assert!(!tail_is_growing(&[1.0, 1.0, 1.0]));
        assert!(tail_is_growing(&[0.0, 0.0, 1.0, 2.0]));
        assert!(!tail_is_growing(&[4.0, 3.0, 2.0, 1.0]));
    }

    #[test]
    fn probe_csv_has_header() {
        let law = TruncationLaw::geometric(0.5, 0).unwrap();
        let probe = variance_condition_probe(|_| halving(), &law, |_| 1.0, 3, 2, 0).unwrap();
        let mut buf = Vec::new();
        probe.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,w_n,summand,stderr\n0,1.0,"));
        assert_eq!(text.lines().count(), 5);
    }
}
