//! Experiments shipped with the binary.

use crate::error::{CliError, Result};
use crate::spec::ExperimentSpec;

/// `(name, json)` for every file in `experiments/`.
pub const SHIPPED: &[(&str, &str)] = &[
    ("bernstein-uniform", include_str!("../experiments/bernstein-uniform.json")),
    ("compose-exp-inverse", include_str!("../experiments/compose-exp-inverse.json")),
    ("condition6-exp-neg-inv", include_str!("../experiments/condition6-exp-neg-inv.json")),
    ("condition6-x-one-minus-x", include_str!("../experiments/condition6-x-one-minus-x.json")),
    ("coupling-gaussian", include_str!("../experiments/coupling-gaussian.json")),
    ("inverse-uniform", include_str!("../experiments/inverse-uniform.json")),
    ("negativity-gaussian", include_str!("../experiments/negativity-gaussian.json")),
    ("negativity-lower-bounded", include_str!("../experiments/negativity-lower-bounded.json")),
    ("pm-mh-doubly-intractable", include_str!("../experiments/pm-mh-doubly-intractable.json")),
    ("pm-mh-gaussian-exact", include_str!("../experiments/pm-mh-gaussian-exact.json")),
    ("pm-mh-gaussian-noisy", include_str!("../experiments/pm-mh-gaussian-noisy.json")),
    ("pm-mh-subsampled", include_str!("../experiments/pm-mh-subsampled.json")),
    ("poisson-point-mass", include_str!("../experiments/poisson-point-mass.json")),
    ("poisson-unbiasedness", include_str!("../experiments/poisson-unbiasedness.json")),
    ("product-point-mass", include_str!("../experiments/product-point-mass.json")),
    ("variance-identity-halving", include_str!("../experiments/variance-identity-halving.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|(n, _)| *n)
}

/// The shipped spec called `name`; unknown names get the closest match as
/// a suggestion.
pub fn lookup(name: &str) -> Result<ExperimentSpec> {
    match SHIPPED.iter().find(|(n, _)| *n == name) {
        Some((n, text)) => ExperimentSpec::from_json(text, &format!("shipped experiment `{n}`")),
        None => Err(CliError::UnknownExperiment {
            name: name.to_string(),
            suggestion: suggest(name),
        }),
    }
}

fn suggest(name: &str) -> Option<String> {
    names()
        .map(|n| (strsim::jaro_winkler(name, n), n))
        .filter(|(score, _)| *score > 0.7)
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, n)| n.to_string())
}

/// Text for `describe`.
pub fn describe(name: &str) -> Result<String> {
    let spec = lookup(name)?;
    let pretty = serde_json::to_string_pretty(&spec)?;
    Ok(format!(
        "{name} ({kind}, {reps} reps, seed {seed}, tolerance {tol} SE)\n\n{desc}\n\n{pretty}\n",
        kind = spec.kind.as_str(),
        reps = spec.reps,
        seed = spec.seed,
        tol = spec.tolerance(),
        desc = spec.description,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_shipped_spec_parses_under_its_file_name() {
        for (name, _) in SHIPPED {
            assert_eq!(lookup(name).unwrap().name, *name);
        }
    }

    #[test]
    fn unknown_name_gets_suggestion() {
        match lookup("poisson-unbiasednes").unwrap_err() {
            CliError::UnknownExperiment { suggestion, .. } => {
                assert_eq!(suggestion.as_deref(), Some("poisson-unbiasedness"))
            }
            e => panic!("unexpected {e}"),
        }
        let msg = lookup("zzzz").unwrap_err().to_string();
        assert_eq!(msg, "unknown experiment `zzzz`");
    }

    #[test]
    fn describe_mentions_kind_and_description() {
        let text = describe("inverse-uniform").unwrap();
        assert!(text.starts_with("inverse-uniform (unbiasedness"));
        assert!(text.contains("Uniform(1, 2)"));
    }
}
