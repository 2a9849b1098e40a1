//! Distributed boosting with a fixed-α AdaBoost.
//!
//! Each round the center splits a fixed example budget among players in
//! proportion to their (quantized) weight sums, trains a weak hypothesis on
//! what they ship, and broadcasts it; players reweight locally and report
//! their new sums.

use crate::channel::{Channel, Encoding, Message, Recipient};
use crate::declist::{DecisionList, RuleTriplet};
use crate::error::{Error, Result};
use crate::model::{Hypothesis, PartyId, Problem, ProtocolResult, Sample};
use crate::rng::{Seeds, StreamRng};
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Learner run by the center on the shipped examples.
pub trait WeakLearner {
    /// Hypothesis with low weighted error on `sample`.
    fn learn(&self, sample: &Sample) -> Result<Hypothesis>;
    /// Capacity term used to size the per-round example budget.
    fn complexity(&self) -> usize;
}

/// Best decision stump over `n` boolean variables: a two-rule decision list
/// `if x_j = b then c else ¬c`, or a constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StumpLearner {
    pub n: usize,
}

impl StumpLearner {
    /// Number of distinct stumps, `4n + 2`.
    pub fn class_size(&self) -> usize {
        4 * self.n + 2
    }
}

impl WeakLearner for StumpLearner {
    fn learn(&self, sample: &Sample) -> Result<Hypothesis> {
        let n = self.n;
        // w[j][b][c]: weight of examples with x_j = b and label c
        let mut w = vec![[[0.0f64; 2]; 2]; n];
        let mut by_label = [0.0f64; 2];
        for (e, &wt) in sample.iter().zip(&sample.weights) {
            let c = e.label.is_pos() as usize;
            by_label[c] += wt;
            for (j, cell) in w.iter_mut().enumerate() {
                cell[(e.features[j] >= 0.5) as usize][c] += wt;
            }
        }
        let total = by_label[0] + by_label[1];
        if total <= 0.0 {
            return Err(Error::Degenerate("weak learner got no weight".into()));
        }
        let mut best = (by_label[1], DecisionList::constant(n, false));
        if by_label[0] < best.0 {
            best = (by_label[0], DecisionList::constant(n, true));
        }
        for (j, cell) in w.iter().enumerate() {
            for b in [false, true] {
                for c in [false, true] {
                    // wrong when x_j = b and label != c, or x_j != b and label == c
                    let err = cell[b as usize][!c as usize] + cell[!b as usize][c as usize];
                    if err < best.0 {
                        let rules = vec![RuleTriplet::new(j + 1, b, c), RuleTriplet::else_rule(!c)];
                        best = (err, DecisionList { n, rules });
                    }
                }
            }
        }
        Ok(Hypothesis::DecisionList(best.1))
    }

    fn complexity(&self) -> usize {
        let s = self.class_size();
        (usize::BITS - (s - 1).leading_zeros()) as usize
    }
}

/// Fixed vote weight `½·ln((1−β)/β)`.
pub fn adaboost_alpha(beta: f64) -> f64 {
    0.5 * ((1.0 - beta) / beta).ln()
}

/// `ceil(ln(1/ε) / (2(½−β)²))`.
pub fn round_cap(epsilon: f64, beta: f64) -> usize {
    ((1.0 / epsilon).ln() / (2.0 * (0.5 - beta).powi(2))).ceil() as usize
}

/// `ceil(c_w · (d/β) · ln(1/β))`.
pub fn weak_budget(c_w: f64, d: usize, beta: f64) -> usize {
    (c_w * d as f64 / beta * (1.0 / beta).ln()).ceil() as usize
}

/// One multinomial draw of `m` trials over cells with the given weights.
/// A single cell consumes no randomness.
pub fn presample_counts(weights: &[f64], m: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Degenerate("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Degenerate("all weights are zero".into()));
    }
    let mut out = vec![0usize; weights.len()];
    let mut left = m as u64;
    let mut mass = total;
    let last = weights.iter().rposition(|w| *w > 0.0).expect("positive total");
    for (i, &w) in weights.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i == last {
            out[i] = left as usize;
            break;
        }
        if w <= 0.0 {
            continue;
        }
        let p = (w / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, p)
            .map_err(|e| Error::Degenerate(e.to_string()))?
            .sample(rng);
        out[i] = draw as usize;
        left -= draw;
        mass -= w;
    }
    Ok(out)
}

/// Multiplies every weight by `exp(−α·ℓ(x)·h(x))` and returns the new sum.
pub fn adaboost_reweight(sample: &mut Sample, h: &Hypothesis, beta: f64) -> f64 {
    let alpha = adaboost_alpha(beta);
    let (down, up) = ((-alpha).exp(), alpha.exp());
    for (e, w) in sample.examples.iter().zip(sample.weights.iter_mut()) {
        *w *= if h.predict(&e.features) == e.label { down } else { up };
    }
    sample.weights.iter().sum()
}

/// How players report their weight sums.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantization {
    /// Full 64-bit float.
    Exact,
    /// `bits` explicit significand bits, truncated, plus an 11-bit exponent.
    Bits { bits: u32 },
    /// Smallest `q` with `k·2^−q ≤ β/2`.
    Auto,
}

impl Quantization {
    pub fn resolve(self, k: usize, beta: f64) -> Option<u32> {
        match self {
            Quantization::Exact => None,
            Quantization::Bits { bits } => Some(bits),
            Quantization::Auto => {
                let q = (2.0 * k as f64 / beta).log2().ceil().max(1.0) as u32;
                Some(q.max((1.0 / beta).log2().ceil() as u32))
            }
        }
    }
}

pub const EXPONENT_BITS: u32 = 11;

/// Splits a positive finite sum into the transmitted significand and
/// exponent fields. Returns `(mantissa_field, exponent_field, value)`.
pub fn quantize(sum: f64, q: u32) -> (u64, u64, f64) {
    debug_assert!(sum > 0.0 && sum.is_finite());
    let exp = sum.log2().floor() as i32;
    let mut frac = sum / 2f64.powi(exp);
    // guard against log2 rounding at exact powers of two
    let exp = if frac >= 2.0 {
        frac /= 2.0;
        exp + 1
    } else if frac < 1.0 {
        frac *= 2.0;
        exp - 1
    } else {
        exp
    };
    let scale = 2f64.powi(q as i32);
    let field = ((frac - 1.0) * scale).floor() as u64;
    let value = (1.0 + field as f64 / scale) * 2f64.powi(exp);
    (field, (exp + 1023) as u64, value)
}

/// Total-variation distance between the player-choice distributions
/// induced by `exact` and `approx` weight sums.
pub fn player_tv(exact: &[f64], approx: &[f64]) -> f64 {
    let a: f64 = exact.iter().sum();
    let b: f64 = approx.iter().sum();
    0.5 * exact.iter().zip(approx).map(|(x, y)| (x / a - y / b).abs()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostParams {
    pub beta: f64,
    pub epsilon: f64,
    pub c_w: f64,
    pub quantization: Quantization,
    /// Size of each player's local sample.
    pub m_local: usize,
    /// Overrides the computed round cap.
    pub rounds: Option<usize>,
    /// Stop early once the ensemble's training error is at most ε.
    pub early_stop: bool,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            beta: 0.25,
            epsilon: 0.05,
            c_w: 4.0,
            quantization: Quantization::Auto,
            m_local: 1000,
            rounds: None,
            early_stop: true,
        }
    }
}

/// Per-round telemetry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostRoundState {
    pub t: usize,
    /// Requested examples per player.
    pub counts: Vec<usize>,
    pub hypothesis: Hypothesis,
    /// Exact weighted error of `h_t` over all local samples.
    pub eps_t: f64,
    /// Error of `h_t` on the examples the center trained on.
    pub shipped_error: f64,
    /// Exact per-player weight sums after reweighting.
    pub exact_sums: Vec<f64>,
    /// Sums as the center received them.
    pub reported_sums: Vec<f64>,
    pub w_total: f64,
    /// TV distance between exact and reported player distributions.
    pub tv: f64,
    /// Running product of `2·sqrt(ε_t(1−ε_t))`.
    pub bound: f64,
    /// Running product of the fixed-α normalizers `Z_t`.
    pub z_bound: f64,
    /// Ensemble error on the local samples, weighted equally per player.
    pub train_error: f64,
    pub examples_shipped: usize,
    pub ledger_bits: u64,
}

#[derive(Clone, Debug)]
pub struct BoostOutcome {
    pub result: ProtocolResult,
    pub rounds: Vec<BoostRoundState>,
    pub m_weak: usize,
    pub cap: usize,
}

fn bits_for(max: usize) -> u32 {
    (usize::BITS - max.leading_zeros()).max(1)
}

fn ensemble(hs: &[Hypothesis], alpha: f64) -> Hypothesis {
    Hypothesis::WeightedMajority {
        voters: hs.iter().map(|h| (h.clone(), alpha)).collect(),
    }
}

/// Mistakes of the running vote `score` on each example.
fn mistakes(sample: &Sample, score: &[f64]) -> usize {
    sample
        .iter()
        .zip(score)
        .filter(|(e, s)| crate::model::Label::from_sign(**s) != e.label)
        .count()
}

fn weighted_error(samples: &[Sample], h: &Hypothesis) -> f64 {
    let (mut bad, mut total) = (0.0, 0.0);
    for s in samples {
        for (e, w) in s.iter().zip(&s.weights) {
            total += w;
            if h.predict(&e.features) != e.label {
                bad += w;
            }
        }
    }
    bad / total
}

fn draw_from_weights(sample: &Sample, n: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let idx = WeightedIndex::new(&sample.weights).map_err(|e| Error::Degenerate(e.to_string()))?;
    Ok((0..n).map(|_| idx.sample(rng)).collect())
}

fn local_samples(problem: &Problem, m_local: usize) -> Result<Vec<Sample>> {
    (0..problem.k())
        .map(|i| {
            let mut s = problem.draw(i, m_local, "sample", 0)?;
            let w = 1.0 / s.len().max(1) as f64;
            s.weights.iter_mut().for_each(|x| *x = w);
            Ok(s)
        })
        .collect()
}

/// Distributed boosting on local samples drawn from `problem`.
pub fn run_distributed_boosting(
    problem: &Problem,
    learner: &dyn WeakLearner,
    params: &BoostParams,
) -> Result<BoostOutcome> {
    let k = problem.k();
    let n = problem.dim();
    let beta = params.beta;
    if !(beta > 0.0 && beta < 0.5) {
        return Err(Error::Config(format!("beta must be in (0, 1/2), got {beta}")));
    }
    let q = params.quantization.resolve(k, beta);
    if let Some(q) = q {
        if q < (1.0 / beta).log2().ceil() as u32 || q > 52 {
            return Err(Error::Config(format!("quantization of {q} bits is outside [log2(1/β), 52]")));
        }
    }
    let m_weak = weak_budget(params.c_w, learner.complexity(), beta);
    let cap = params.rounds.unwrap_or_else(|| round_cap(params.epsilon, beta));
    let alpha = adaboost_alpha(beta);
    let seeds: Seeds = problem.seeds();
    let mut samples = local_samples(problem, params.m_local)?;
    let enc = if problem.players[0].is_boolean() {
        Encoding::boolean(n)
    } else {
        Encoding::real(n, crate::channel::DEFAULT_PRECISION_BITS)
    };
    let mut ch = Channel::new(k, true, enc);
    let count_width = bits_for(m_weak);
    let mut reported: Vec<f64> = samples.iter().map(|s| s.weights.iter().sum()).collect();
    let mut scores: Vec<Vec<f64>> = samples.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut hs = Vec::new();
    let mut log = Vec::new();
    let (mut bound, mut z_bound) = (1.0, 1.0);
    for t in 1..=cap {
        ch.advance_round();
        // 1. pre-sampling
        let counts = presample_counts(&reported, m_weak, &mut seeds.stream("presample", &[t as u64]))?;
        for (i, &c) in counts.iter().enumerate() {
            ch.send(PartyId::Center, Recipient::To(PartyId::Player(i)), Message::count(c as u64, count_width))?;
        }
        // 2. sampling
        let mut shipped = Vec::with_capacity(m_weak);
        for (i, s) in samples.iter().enumerate() {
            let picks = draw_from_weights(s, counts[i], &mut seeds.stream("boost_sample", &[i as u64, t as u64]))?;
            for j in picks {
                let e = s.examples[j].clone();
                ch.to_center(PartyId::Player(i), Message::Example(e.clone()))?;
                shipped.push(e);
            }
        }
        // 3. weak learning
        let shipped = Sample::new(shipped);
        let h = learner.learn(&shipped)?;
        let shipped_error = crate::eval::sample_error(&h, &shipped);
        if shipped_error > 0.5 {
            return Err(Error::WeakLearningFailure { error: shipped_error });
        }
        ch.broadcast(PartyId::Center, Message::Hypothesis(h.clone()))?;
        let eps_t = weighted_error(&samples, &h);
        bound *= 2.0 * (eps_t * (1.0 - eps_t)).sqrt();
        z_bound *= (1.0 - eps_t) * (-alpha).exp() + eps_t * alpha.exp();
        // 4. updating
        let mut exact = Vec::with_capacity(k);
        let mut train_err = 0.0;
        for (i, s) in samples.iter_mut().enumerate() {
            let sum = adaboost_reweight(s, &h, beta);
            for (sc, e) in scores[i].iter_mut().zip(s.iter()) {
                *sc += alpha * h.predict(&e.features).sign();
            }
            let value = match q {
                None => {
                    ch.to_center(PartyId::Player(i), Message::count(sum.to_bits(), 64))?;
                    sum
                }
                Some(q) => {
                    let (mant, exp, value) = quantize(sum, q);
                    ch.to_center(PartyId::Player(i), Message::count(mant, q))?;
                    ch.to_center(PartyId::Player(i), Message::count(exp, EXPONENT_BITS))?;
                    value
                }
            };
            let miss = mistakes(s, &scores[i]);
            ch.to_center(PartyId::Player(i), Message::count(miss as u64, bits_for(s.len())))?;
            train_err += miss as f64 / s.len().max(1) as f64 / k as f64;
            exact.push(sum);
            reported[i] = value;
        }
        hs.push(h.clone());
        log.push(BoostRoundState {
            t,
            counts,
            hypothesis: h,
            eps_t,
            shipped_error,
            tv: player_tv(&exact, &reported),
            w_total: reported.iter().sum(),
            exact_sums: exact,
            reported_sums: reported.clone(),
            bound,
            z_bound,
            train_error: train_err,
            examples_shipped: shipped.len(),
            ledger_bits: ch.ledger().bits,
        });
        if params.early_stop && train_err <= params.epsilon {
            break;
        }
    }
    let h = ensemble(&hs, alpha);
    let mut result = ProtocolResult::from_channel(BTreeMap::from([(PartyId::Center, h)]), ch);
    let last = log.last().expect("at least one round");
    result.note("m_weak", m_weak as f64);
    result.note("round_cap", cap as f64);
    result.note("train_error", last.train_error);
    result.note("max_tv", log.iter().map(|r| r.tv).fold(0.0, f64::max));
    Ok(BoostOutcome {
        result,
        rounds: log,
        m_weak,
        cap,
    })
}

/// One step of the single-machine reference run.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaBoostStep {
    pub hypothesis: Hypothesis,
    pub picks: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Plain AdaBoost with fixed α on one weighted sample, training each round
/// on `m_weak` weighted draws. Uses the same random streams as a one-player
/// distributed run, so the two can be compared step by step.
pub fn adaboost_single(
    sample: &Sample,
    learner: &dyn WeakLearner,
    beta: f64,
    epsilon: f64,
    m_weak: usize,
    rounds: usize,
    seeds: &Seeds,
) -> Result<Vec<AdaBoostStep>> {
    let alpha = adaboost_alpha(beta);
    let mut s = sample.clone();
    let mut score = vec![0.0; s.len()];
    let mut steps = Vec::new();
    for t in 1..=rounds {
        let picks = draw_from_weights(&s, m_weak, &mut seeds.stream("boost_sample", &[0, t as u64]))?;
        let train = Sample::new(picks.iter().map(|&j| s.examples[j].clone()).collect());
        let h = learner.learn(&train)?;
        for ((e, w), sc) in s.examples.iter().zip(s.weights.iter_mut()).zip(score.iter_mut()) {
            let right = h.predict(&e.features) == e.label;
            *w *= if right { (-alpha).exp() } else { alpha.exp() };
            *sc += alpha * h.predict(&e.features).sign();
        }
        steps.push(AdaBoostStep {
            hypothesis: h,
            picks,
            weights: s.weights.clone(),
        });
        if mistakes(&s, &score) as f64 / s.len() as f64 <= epsilon {
            break;
        }
    }
    Ok(steps)
}

/// The local sample a one-player boosting run on `problem` would use.
pub fn boosting_local_sample(problem: &Problem, m_local: usize) -> Result<Sample> {
    Ok(local_samples(problem, m_local)?.swap_remove(0))
}
