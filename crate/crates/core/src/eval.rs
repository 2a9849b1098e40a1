//! Error measurement against samples and distributions.

use crate::error::Result;
use crate::model::{ErrorReport, Hypothesis, Problem, Sample, TargetFunction};
use crate::rng::Seeds;
use crate::sampling::DistributionSpec;

/// Weighted fraction of `sample` whose stored label `h` gets wrong.
/// An empty or zero-weight sample has error 0.
pub fn sample_error(h: &Hypothesis, sample: &Sample) -> f64 {
    weighted_fraction(sample, |e| h.predict(&e.features) != e.label)
}

/// Weighted fraction of `sample` where `h` and `f` disagree.
pub fn disagreement(h: &Hypothesis, f: &TargetFunction, sample: &Sample) -> f64 {
    weighted_fraction(sample, |e| h.predict(&e.features) != f.eval(&e.features))
}

fn weighted_fraction(sample: &Sample, wrong: impl Fn(&crate::model::LabeledExample) -> bool) -> f64 {
    let total: f64 = sample.weights.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let bad: f64 = sample
        .iter()
        .zip(&sample.weights)
        .filter(|(e, _)| wrong(e))
        .map(|(_, w)| w)
        .sum();
    (bad / total).clamp(0.0, 1.0)
}

/// Error of `h` against `f` under `spec`. Finite lists are evaluated exactly;
/// everything else uses `m_eval` Monte-Carlo draws.
pub fn error_rate(h: &Hypothesis, spec: &DistributionSpec, f: &TargetFunction, m_eval: usize, seed: u64) -> Result<f64> {
    let mut rng = Seeds::new(seed).stream("eval", &[]);
    spec_error(h, spec, f, m_eval, &mut rng)
}

fn spec_error(
    h: &Hypothesis,
    spec: &DistributionSpec,
    f: &TargetFunction,
    m_eval: usize,
    rng: &mut crate::rng::StreamRng,
) -> Result<f64> {
    spec.validate()?;
    let wrong = |x: &[f64]| h.predict(x) != f.eval(x);
    Ok(match spec {
        DistributionSpec::PointMassList { points, probs } => points
            .iter()
            .zip(probs)
            .filter(|(x, _)| wrong(x))
            .map(|(_, p)| p)
            .sum::<f64>()
            .clamp(0.0, 1.0),
        DistributionSpec::FixedOrderedList { points } => {
            points.iter().filter(|x| wrong(x)).count() as f64 / points.len() as f64
        }
        _ => {
            let m = m_eval.max(1);
            let bad = spec.sample_points(m, rng).iter().filter(|x| wrong(x)).count();
            bad as f64 / m as f64
        }
    })
}

/// Per-player and mixture error of `h` for `problem`, using `eval_samples / k`
/// draws per player so the mixture estimate weights players equally.
pub fn error_report(h: &Hypothesis, problem: &Problem) -> Result<ErrorReport> {
    let k = problem.k();
    let per = (problem.eval_samples / k).max(1);
    let seeds = problem.seeds();
    let per_player = problem
        .players
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let mut rng = seeds.stream("eval", &[i as u64]);
            spec_error(h, spec, &problem.target, per, &mut rng)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mixture = per_player.iter().sum::<f64>() / k as f64;
    Ok(ErrorReport { per_player, mixture })
}
