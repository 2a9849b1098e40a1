//! Statistical queries answered under a privacy budget, and learners that
//! touch their data only through such queries.
//!
//! Answers are empirical means plus Laplace noise. In differential mode the
//! scale is `1/(α′·n)`, with `n` the size of the conditioned sample; in
//! distributional mode it is `β/α′` with `β = sqrt(2·ln(4/δ′)/n)`.

use crate::closed::{send_and_close, ClosedClass};
use crate::declist::{run_decision_list_with, RuleTriplet};
use crate::error::{Error, Result};
use crate::model::{Hypothesis, Problem, ProtocolResult, Sample, TargetFunction};
use crate::rng::StreamRng;
use crate::sampling::DistributionSpec;
use crate::bits::BitVec;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Query predicates, identified by their serialized form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Predicate {
    Const { value: bool },
    /// `x_j = value`, with `j` 0-based.
    FeatureEquals { j: usize, value: bool },
    /// The example fires the rule and disagrees with its output.
    RuleViolation { rule: RuleTriplet },
}

impl Predicate {
    pub fn eval(&self, x: &[f64], label: crate::model::Label) -> bool {
        match *self {
            Predicate::Const { value } => value,
            Predicate::FeatureEquals { j, value } => (x[j] >= 0.5) == value,
            Predicate::RuleViolation { rule } => rule.fires(x) && label != rule.output(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    All,
    Positives,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SQQuery {
    pub predicate: Predicate,
    pub tolerance: f64,
    pub conditioning: Conditioning,
}

impl SQQuery {
    pub fn new(predicate: Predicate, tolerance: f64, conditioning: Conditioning) -> Result<Self> {
        if !(tolerance > 0.0 && tolerance < 1.0) {
            return Err(Error::Config(format!("tolerance {tolerance} is not in (0, 1)")));
        }
        Ok(Self {
            predicate,
            tolerance,
            conditioning,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrivacyMode {
    None,
    Differential,
    Distributional,
}

/// One player's budget: `queries` answers at `α′ = α/M` each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub mode: PrivacyMode,
    pub alpha: f64,
    pub delta: f64,
    pub queries: u64,
    pub spent: u64,
}

impl PrivacyBudget {
    pub fn new(mode: PrivacyMode, alpha: f64, delta: f64, queries: u64) -> Result<Self> {
        if mode != PrivacyMode::None && !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("privacy parameter {alpha} must be positive")));
        }
        if mode != PrivacyMode::None && !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("failure probability {delta} is not in (0, 1)")));
        }
        if queries == 0 {
            return Err(Error::Config("budget must declare at least one query".into()));
        }
        Ok(Self {
            mode,
            alpha,
            delta,
            queries,
            spent: 0,
        })
    }

    pub fn none(queries: u64) -> Self {
        Self {
            mode: PrivacyMode::None,
            alpha: f64::INFINITY,
            delta: 0.0,
            queries,
            spent: 0,
        }
    }

    pub fn alpha_prime(&self) -> f64 {
        self.alpha / self.queries as f64
    }

    pub fn delta_prime(&self) -> f64 {
        match self.mode {
            PrivacyMode::Differential => self.delta / (2 * self.queries) as f64,
            _ => self.delta / self.queries as f64,
        }
    }

    pub fn remaining(&self) -> u64 {
        self.queries - self.spent
    }

    fn spend(&mut self) -> Result<()> {
        if self.spent >= self.queries {
            return Err(Error::BudgetExhausted {
                spent: self.spent,
                declared: self.queries,
            });
        }
        self.spent += 1;
        Ok(())
    }

    /// Laplace scale for a query over `n` conditioned examples.
    pub fn noise_scale(&self, n: usize) -> f64 {
        let n = n as f64;
        match self.mode {
            PrivacyMode::None => 0.0,
            PrivacyMode::Differential => 1.0 / (self.alpha_prime() * n),
            PrivacyMode::Distributional => distributional_beta(self.delta_prime(), n) / self.alpha_prime(),
        }
    }
}

/// Distance within which two same-distribution samples of size `n` answer a
/// query with probability at least `1 − δ′`.
pub fn distributional_beta(delta_prime: f64, n: f64) -> f64 {
    (2.0 * (4.0 / delta_prime).ln() / n).sqrt()
}

/// Laplace(0, scale) by inverse CDF.
pub fn laplace(scale: f64, rng: &mut StreamRng) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let t = 1.0 - 2.0 * u.abs();
        if t > 0.0 {
            return -scale * u.signum() * t.ln();
        }
    }
}

/// Log density of Laplace(center, scale) at `v`.
pub fn laplace_log_density(v: f64, center: f64, scale: f64) -> f64 {
    -(v - center).abs() / scale - (2.0 * scale).ln()
}

/// Anything a player can run a statistical query against.
pub trait StatisticalData {
    /// Noise-free answer and the size of the conditioned sample, or `None`
    /// when the conditioned sample is empty.
    fn query_mean(&self, q: &SQQuery) -> Result<Option<(f64, usize)>>;
}

impl StatisticalData for Sample {
    fn query_mean(&self, q: &SQQuery) -> Result<Option<(f64, usize)>> {
        Alive {
            sample: self,
            alive: None,
        }
        .query_mean(q)
    }
}

/// A sample restricted to the examples whose flag is set.
pub struct Alive<'a> {
    pub sample: &'a Sample,
    pub alive: Option<&'a [bool]>,
}

impl StatisticalData for Alive<'_> {
    fn query_mean(&self, q: &SQQuery) -> Result<Option<(f64, usize)>> {
        let (mut hit, mut tot, mut n) = (0.0, 0.0, 0usize);
        for (idx, (e, &w)) in self.sample.examples.iter().zip(&self.sample.weights).enumerate() {
            if self.alive.is_some_and(|a| !a[idx]) {
                continue;
            }
            if q.conditioning == Conditioning::Positives && !e.label.is_pos() {
                continue;
            }
            n += 1;
            tot += w;
            if q.predicate.eval(&e.features, e.label) {
                hit += w;
            }
        }
        Ok((n > 0 && tot > 0.0).then(|| (hit / tot, n)))
    }
}

/// Exact sufficient statistics of a sample from a product distribution
/// labeled by a conjunction: the positive count and, per variable, how many
/// positives have it zero. Drawn directly from the binomial laws, so sample
/// sizes in the millions cost nothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductSummary {
    pub total: u64,
    pub positives: u64,
    pub zeros_among_positives: Vec<u64>,
}

impl ProductSummary {
    pub fn draw(p: &[f64], mask: &BitVec, total: u64, rng: &mut StreamRng) -> Result<Self> {
        if mask.len() != p.len() {
            return Err(Error::DimensionMismatch {
                expected: p.len(),
                found: mask.len(),
            });
        }
        let pos_prob: f64 = mask.iter_ones().map(|j| p[j]).product();
        let positives = binomial(total, pos_prob, rng)?;
        let zeros = (0..p.len())
            .map(|j| if mask.get(j) { Ok(0) } else { binomial(positives, 1.0 - p[j], rng) })
            .collect::<Result<_>>()?;
        Ok(Self {
            total,
            positives,
            zeros_among_positives: zeros,
        })
    }
}

fn binomial(n: u64, p: f64, rng: &mut StreamRng) -> Result<u64> {
    Ok(Binomial::new(n, p.clamp(0.0, 1.0))
        .map_err(|e| Error::Config(e.to_string()))?
        .sample(rng))
}

impl StatisticalData for ProductSummary {
    fn query_mean(&self, q: &SQQuery) -> Result<Option<(f64, usize)>> {
        let unsupported = || Error::Config("query is not answerable from a product summary".into());
        if q.conditioning != Conditioning::Positives {
            return Err(unsupported());
        }
        if self.positives == 0 {
            return Ok(None);
        }
        let n = self.positives as f64;
        let v = match q.predicate {
            Predicate::Const { value } => value as u8 as f64,
            Predicate::FeatureEquals { j, value } => {
                let z = *self.zeros_among_positives.get(j).ok_or_else(unsupported)? as f64 / n;
                if value { 1.0 - z } else { z }
            }
            Predicate::RuleViolation { .. } => return Err(unsupported()),
        };
        Ok(Some((v, self.positives as usize)))
    }
}

/// Noisy answer to one query, charged to `budget`.
pub fn sq_answer(data: &dyn StatisticalData, q: &SQQuery, budget: &mut PrivacyBudget, rng: &mut StreamRng) -> Result<f64> {
    if budget.remaining() == 0 {
        return Err(Error::BudgetExhausted {
            spent: budget.spent,
            declared: budget.queries,
        });
    }
    let (mean, n) = data
        .query_mean(q)?
        .ok_or_else(|| Error::Degenerate("conditioned sample is empty".into()))?;
    budget.spend()?;
    Ok(mean + laplace(budget.noise_scale(n), rng))
}

/// Sample size for `m` queries at tolerance `τ` with failure probability `δ`:
/// `c_p·max(M/(ατ), M/τ²)·ln(M/δ)` in differential mode,
/// `c_p·M²·ln³(M/δ)/(α²τ²)` in distributional mode, and `c_p·(M/τ²)·ln(M/δ)`
/// without privacy.
pub fn private_sample_size(m: u64, alpha: f64, tau: f64, delta: f64, mode: PrivacyMode, c_p: f64) -> u64 {
    let m = m as f64;
    let l = (m / delta).ln();
    let v = match mode {
        PrivacyMode::None => m / (tau * tau) * l,
        PrivacyMode::Differential => (m / (alpha * tau)).max(m / (tau * tau)) * l,
        PrivacyMode::Distributional => m * m * l.powi(3) / (alpha * alpha * tau * tau),
    };
    (c_p * v).ceil() as u64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivateConjunctionParams {
    pub epsilon: f64,
    pub mode: PrivacyMode,
    pub alpha: f64,
    pub delta: f64,
    pub c_p: f64,
    /// Per-player sample size; computed from the budget when absent.
    pub m: Option<u64>,
    /// Use binomial summaries when every player is a product distribution.
    pub summaries: bool,
}

impl Default for PrivateConjunctionParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            mode: PrivacyMode::Differential,
            alpha: 1.0,
            delta: 0.05,
            c_p: 1.0,
            m: None,
            summaries: true,
        }
    }
}

impl PrivateConjunctionParams {
    pub fn tolerance(&self, n: usize) -> f64 {
        self.epsilon / (2 * n) as f64
    }

    pub fn sample_size(&self, n: usize) -> u64 {
        self.m.unwrap_or_else(|| private_sample_size(n as u64, self.alpha, self.tolerance(n), self.delta, self.mode, self.c_p))
    }

    fn budget(&self, n: usize) -> Result<PrivacyBudget> {
        match self.mode {
            PrivacyMode::None => Ok(PrivacyBudget::none(n as u64)),
            mode => PrivacyBudget::new(mode, self.alpha, self.delta, n as u64),
        }
    }
}

fn product_probs(spec: &DistributionSpec) -> Option<Vec<f64>> {
    match spec {
        DistributionSpec::UniformBoolean { n } => Some(vec![0.5; *n]),
        DistributionSpec::ProductBernoulli { p } => Some(p.clone()),
        _ => None,
    }
}

/// Conjunction learner from positives-only queries: keeps `x_j` iff the noisy
/// estimate of `Pr[x_j = 0 | +]` is at most `ε/n`. A player without
/// positives keeps every variable.
pub fn sq_conjunction(data: &dyn StatisticalData, n: usize, epsilon: f64, budget: &mut PrivacyBudget, rng: &mut StreamRng) -> Result<Hypothesis> {
    let tau = epsilon / (2 * n) as f64;
    let mut mask = BitVec::zeros(n);
    for j in 0..n {
        let q = SQQuery::new(Predicate::FeatureEquals { j, value: false }, tau, Conditioning::Positives)?;
        match sq_answer(data, &q, budget, rng) {
            Ok(a) => mask.set(j, a <= epsilon / n as f64),
            Err(Error::Degenerate(_)) => return Ok(Hypothesis::Conjunction { mask: BitVec::ones(n) }),
            Err(e) => return Err(e),
        }
    }
    Ok(Hypothesis::Conjunction { mask })
}

/// Each player learns a conjunction through private queries to its own
/// positives and ships it; the center takes the closure. Communication is
/// that of the non-private one-round protocol.
pub fn private_conjunction_protocol(problem: &Problem, params: &PrivateConjunctionParams) -> Result<ProtocolResult> {
    let TargetFunction::Conjunction { mask } = &problem.target else {
        return Err(Error::Config("private conjunction protocol needs a conjunction target".into()));
    };
    let n = problem.dim();
    let size = params.sample_size(n);
    let seeds = problem.seeds();
    let mut parts = Vec::with_capacity(problem.k());
    for (i, spec) in problem.players.iter().enumerate() {
        let mut budget = params.budget(n)?;
        let mut noise = seeds.stream("privacy", &[i as u64]);
        let probs = product_probs(spec).filter(|_| params.summaries && problem.noise == 0.0);
        let h = if let Some(p) = probs {
            let mut r = seeds.stream("summary", &[i as u64]);
            let data = ProductSummary::draw(&p, mask, size, &mut r)?;
            sq_conjunction(&data, n, params.epsilon, &mut budget, &mut noise)?
        } else {
            if size > 5_000_000 {
                return Err(Error::Config(format!("sample size {size} is too large to materialize")));
            }
            let data = problem.draw(i, size as usize, "sample", 0)?;
            sq_conjunction(&data, n, params.epsilon, &mut budget, &mut noise)?
        };
        parts.push(h);
    }
    let mut result = send_and_close(parts, ClosedClass::Conjunction, n, crate::channel::DEFAULT_PRECISION_BITS)?;
    result.note("sample_size", size as f64);
    Ok(result)
}

/// Decides with one query of tolerance `θ/2` whether the rule's violation
/// rate on the alive examples is at most `θ`.
pub fn sq_rule_consistency(data: &dyn StatisticalData, rule: RuleTriplet, theta: f64, budget: &mut PrivacyBudget, rng: &mut StreamRng) -> Result<bool> {
    let q = SQQuery::new(Predicate::RuleViolation { rule }, theta / 2.0, Conditioning::All)?;
    match sq_answer(data, &q, budget, rng) {
        Ok(a) => Ok(a <= theta / 2.0),
        // nothing alive violates anything
        Err(Error::Degenerate(_)) => Ok(true),
        Err(e) => Err(e),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivateDecisionListParams {
    pub epsilon: f64,
    /// Violation threshold; `ε/(8n)` when absent.
    pub theta: Option<f64>,
    pub mode: PrivacyMode,
    pub alpha: f64,
    pub delta: f64,
    /// Rounds the budget is split over: each player declares
    /// `(4n+2)·rounds` queries.
    pub rounds: u64,
    pub m: usize,
}

impl Default for PrivateDecisionListParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            theta: Some(0.05),
            mode: PrivacyMode::Differential,
            alpha: 5.0,
            delta: 0.05,
            rounds: 8,
            m: 20_000,
        }
    }
}

/// The triplet protocol with each player's consistency checks done by
/// private queries. Announced triplets are never re-queried.
pub fn private_decision_list(problem: &Problem, params: &PrivateDecisionListParams) -> Result<ProtocolResult> {
    let n = problem.dim();
    let theta = params.theta.unwrap_or(params.epsilon / (8 * n) as f64);
    let per_round = (4 * n + 2) as u64;
    let mut budgets = (0..problem.k())
        .map(|_| match params.mode {
            PrivacyMode::None => Ok(PrivacyBudget::none(per_round * params.rounds)),
            mode => PrivacyBudget::new(mode, params.alpha, params.delta, per_round * params.rounds),
        })
        .collect::<Result<Vec<_>>>()?;
    let seeds = problem.seeds();
    let mut rngs: Vec<StreamRng> = (0..problem.k()).map(|i| seeds.stream("privacy", &[i as u64])).collect();
    let samples = (0..problem.k())
        .map(|i| problem.draw(i, params.m, "sample", 0))
        .collect::<Result<Vec<_>>>()?;
    let (mut result, _) = run_decision_list_with(&samples, n, |i, s, alive, announced| {
        let view = Alive { sample: s, alive: Some(alive) };
        let mut out: BTreeSet<RuleTriplet> = announced.clone();
        for t in RuleTriplet::all(n) {
            if !announced.contains(&t) && sq_rule_consistency(&view, t, theta, &mut budgets[i], &mut rngs[i])? {
                out.insert(t);
            }
        }
        Ok(out)
    })?;
    result.note("queries_spent", budgets.iter().map(|b| b.spent).max().unwrap_or(0) as f64);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, LabeledExample};
    use crate::rng::Seeds;

    #[test]
    fn constant_predicate_without_noise() {
        let s = Sample::new(vec![LabeledExample::new(vec![0.0], Label::Pos)]);
        let q = SQQuery::new(Predicate::Const { value: true }, 0.1, Conditioning::All).unwrap();
        let mut b = PrivacyBudget::none(1);
        let a = sq_answer(&s, &q, &mut b, &mut Seeds::new(0).stream("x", &[])).unwrap();
        assert_eq!(a, 1.0);
        assert!(matches!(
            sq_answer(&s, &q, &mut b, &mut Seeds::new(0).stream("x", &[])),
            Err(Error::BudgetExhausted { spent: 1, declared: 1 })
        ));
    }

    #[test]
    fn differential_scale() {
        let b = PrivacyBudget::new(PrivacyMode::Differential, 1.0, 0.1, 10).unwrap();
        assert!((b.noise_scale(1000) - 0.01).abs() < 1e-15);
        assert!((b.delta_prime() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn sample_size_example() {
        assert_eq!(private_sample_size(10, 1.0, 0.1, 0.1, PrivacyMode::Differential, 1.0), 4606);
    }

    #[test]
    fn empty_positives_is_degenerate() {
        let s = Sample::new(vec![LabeledExample::new(vec![0.0], Label::Neg)]);
        let q = SQQuery::new(Predicate::Const { value: true }, 0.1, Conditioning::Positives).unwrap();
        let mut b = PrivacyBudget::none(1);
        assert!(matches!(sq_answer(&s, &q, &mut b, &mut Seeds::new(0).stream("x", &[])), Err(Error::Degenerate(_))));
        assert_eq!(b.spent, 0);
    }
}
