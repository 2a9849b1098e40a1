//! Baseline protocols: ship a sample to the center, or run an online
//! learner at the center and ship only its counterexamples.

use crate::bits::BitVec;
use crate::channel::{Channel, Encoding, Message, SyncModel, DEFAULT_PRECISION_BITS};
use crate::closed::{smallest_consistent, ClosedClass};
use crate::declist::greedy_decision_list;
use crate::error::{Error, Result};
use crate::eval::sample_error;
use crate::model::{Hypothesis, LabeledExample, PartyId, Problem, ProtocolResult, Sample};
use crate::parity::parity_proper_learn;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Batch learners the center can run on the shipped union.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BatchLearner {
    Conjunction,
    Box,
    DecisionList,
    Parity,
    /// Empirical risk minimization over an explicit finite class; ties go to
    /// the earliest member.
    Finite { class: Vec<Hypothesis> },
}

impl BatchLearner {
    /// Capacity term `d` of the sample-size formula.
    pub fn capacity(&self, dim: usize) -> f64 {
        match self {
            BatchLearner::Conjunction | BatchLearner::DecisionList | BatchLearner::Parity => dim as f64,
            BatchLearner::Box => 2.0 * dim as f64,
            BatchLearner::Finite { class } => (class.len().max(2) as f64).log2(),
        }
    }

    fn encoding(&self, dim: usize) -> Encoding {
        match self {
            BatchLearner::Conjunction | BatchLearner::DecisionList | BatchLearner::Parity => Encoding::boolean(dim),
            _ => Encoding::real(dim, DEFAULT_PRECISION_BITS),
        }
    }

    pub fn learn(&self, sample: &Sample, dim: usize) -> Result<Hypothesis> {
        match self {
            BatchLearner::Conjunction => smallest_consistent(sample, ClosedClass::Conjunction, dim),
            BatchLearner::Box => smallest_consistent(sample, ClosedClass::Box, dim),
            BatchLearner::DecisionList => Ok(Hypothesis::DecisionList(greedy_decision_list(sample, dim)?)),
            BatchLearner::Parity => parity_proper_learn(sample, dim),
            BatchLearner::Finite { class } => class
                .iter()
                .map(|h| (sample_error(h, sample), h))
                .fold(None, |best: Option<(f64, &Hypothesis)>, (e, h)| match best {
                    Some((b, _)) if b <= e => best,
                    _ => Some((e, h)),
                })
                .map(|(_, h)| h.clone())
                .ok_or_else(|| Error::LearnerFailure("empty hypothesis class".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShippingParams {
    pub epsilon: f64,
    pub delta: f64,
    pub c: f64,
    /// Minimize empirical error instead of requiring consistency.
    pub agnostic: bool,
    pub m: Option<usize>,
}

impl Default for ShippingParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            delta: 0.05,
            c: 8.0,
            agnostic: false,
            m: None,
        }
    }
}

impl ShippingParams {
    /// `ceil((c/k)·(d/ε)·ln(1/ε))`, or `ceil((c/k)·d/ε²)` when agnostic.
    pub fn per_player(&self, d: f64, k: usize) -> usize {
        self.m.unwrap_or_else(|| {
            let e = self.epsilon;
            let base = if self.agnostic { d / (e * e) } else { d / e * (1.0 / e).ln() };
            (self.c / k as f64 * base).ceil() as usize
        })
    }
}

/// Every player ships a sample to the center, which learns on the union.
pub fn sample_shipping(problem: &Problem, learner: &BatchLearner, params: &ShippingParams) -> Result<ProtocolResult> {
    let k = problem.k();
    let dim = problem.dim();
    let m = params.per_player(learner.capacity(dim), k);
    let mut ch = Channel::new(k, true, learner.encoding(dim));
    ch.advance_round();
    let mut union = Sample::default();
    for i in 0..k {
        let s = problem.draw(i, m, "sample", 0)?;
        for e in s.iter() {
            ch.to_center(PartyId::Player(i), Message::Example(e.clone()))?;
        }
        union.extend(s);
    }
    let h = learner.learn(&union, dim)?;
    if !params.agnostic && sample_error(&h, &union) > 0.0 {
        return Err(Error::LearnerFailure(
            "center's hypothesis is inconsistent with the shipped sample".into(),
        ));
    }
    let mut r = ProtocolResult::from_channel(BTreeMap::from([(PartyId::Center, h)]), ch);
    r.note("sample_size", m as f64);
    Ok(r)
}

/// Online learner run at the center. Every party keeps a shadow copy, so only
/// counterexamples cross the channel.
pub trait OnlineLearner {
    fn hypothesis(&self) -> Hypothesis;
    /// Learns from a counterexample to the current hypothesis.
    fn update(&mut self, e: &LabeledExample) -> Result<()>;
    /// Worst-case mistakes on realizable data, if known.
    fn mistake_bound(&self) -> Option<u64>;
}

/// Majority vote over the members of a finite class consistent so far.
#[derive(Clone, Debug)]
pub struct Halving {
    class: Vec<Hypothesis>,
    alive: Vec<bool>,
}

impl Halving {
    pub fn new(class: Vec<Hypothesis>) -> Self {
        let alive = vec![true; class.len()];
        Self { class, alive }
    }

    pub fn survivors(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }
}

impl OnlineLearner for Halving {
    fn hypothesis(&self) -> Hypothesis {
        Hypothesis::MajorityOfSet {
            members: self
                .class
                .iter()
                .zip(&self.alive)
                .filter(|(_, a)| **a)
                .map(|(h, _)| h.clone())
                .collect(),
        }
    }

    fn update(&mut self, e: &LabeledExample) -> Result<()> {
        for (h, a) in self.class.iter().zip(self.alive.iter_mut()) {
            if *a && h.predict(&e.features) != e.label {
                *a = false;
            }
        }
        if self.survivors() == 0 {
            return Err(Error::Realizability("no member of the class is consistent".into()));
        }
        Ok(())
    }

    fn mistake_bound(&self) -> Option<u64> {
        Some((self.class.len().max(1) as f64).log2().floor() as u64)
    }
}

/// Monotone conjunction elimination: start from all variables and drop the
/// ones a positive counterexample sets to 0.
#[derive(Clone, Debug)]
pub struct ConjunctionElimination {
    mask: BitVec,
}

impl ConjunctionElimination {
    pub fn new(n: usize) -> Self {
        Self { mask: BitVec::ones(n) }
    }
}

impl OnlineLearner for ConjunctionElimination {
    fn hypothesis(&self) -> Hypothesis {
        Hypothesis::Conjunction { mask: self.mask.clone() }
    }

    fn update(&mut self, e: &LabeledExample) -> Result<()> {
        if !e.label.is_pos() {
            return Err(Error::Realizability(
                "a negative counterexample contradicts every monotone conjunction".into(),
            ));
        }
        self.mask.and_assign(&BitVec::from_features(&e.features));
        Ok(())
    }

    fn mistake_bound(&self) -> Option<u64> {
        Some(self.mask.len() as u64 + 1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EqParams {
    /// Examples each player holds.
    pub m: usize,
    /// Mistake cap; defaults to the learner's bound, else 10 000.
    pub cap: Option<u64>,
}

impl Default for EqParams {
    fn default() -> Self {
        Self { m: 1000, cap: None }
    }
}

/// Runs the online learner at the center on explicit samples. Each slot, the
/// lowest-numbered player holding a counterexample broadcasts its first one.
pub fn eq_mistake_bound_on(
    samples: &[Sample],
    enc: Encoding,
    learner: &mut dyn OnlineLearner,
    cap: Option<u64>,
) -> Result<(ProtocolResult, Vec<Hypothesis>)> {
    let k = samples.len();
    let cap = cap.or(learner.mistake_bound()).unwrap_or(10_000);
    let mut ch = Channel::new(k, true, enc).with_sync(SyncModel::LockSynchronous);
    let mut history = Vec::new();
    loop {
        ch.advance_round();
        let h = learner.hypothesis();
        let found = samples.iter().enumerate().find_map(|(i, s)| {
            s.iter()
                .find(|e| h.predict(&e.features) != e.label)
                .map(|e| (i, e.clone()))
        });
        history.push(h);
        let Some((i, e)) = found else { break };
        if ch.ledger().examples >= cap {
            return Err(Error::MistakeCap { cap });
        }
        ch.broadcast(PartyId::Player(i), Message::Example(e.clone()))?;
        learner.update(&e)?;
    }
    let h = history.last().cloned().expect("at least one slot ran");
    let mut hyps: BTreeMap<PartyId, Hypothesis> = (0..k).map(|i| (PartyId::Player(i), h.clone())).collect();
    hyps.insert(PartyId::Center, h);
    Ok((ProtocolResult::from_channel(hyps, ch), history))
}

pub fn eq_mistake_bound(problem: &Problem, learner: &mut dyn OnlineLearner, params: &EqParams) -> Result<ProtocolResult> {
    let dim = problem.dim();
    let enc = if problem.players[0].is_boolean() {
        Encoding::boolean(dim)
    } else {
        Encoding::real(dim, DEFAULT_PRECISION_BITS)
    };
    let samples = (0..problem.k())
        .map(|i| problem.draw(i, params.m, "sample", 0))
        .collect::<Result<Vec<_>>>()?;
    Ok(eq_mistake_bound_on(&samples, enc, learner, params.cap)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, TargetFunction};
    use crate::sampling::DistributionSpec;

    #[test]
    fn single_player_ships_its_sample() {
        let p = Problem::new(
            vec![DistributionSpec::UniformBoolean { n: 10 }],
            TargetFunction::Conjunction {
                mask: BitVec::parse("1100000000").unwrap(),
            },
            4,
        )
        .unwrap();
        let params = ShippingParams {
            epsilon: 0.1,
            ..Default::default()
        };
        let r = sample_shipping(&p, &BatchLearner::Conjunction, &params).unwrap();
        let m1 = params.per_player(10.0, 1) as u64;
        assert_eq!(m1, (8.0f64 * 100.0 * 10f64.ln()).ceil() as u64);
        assert_eq!(r.ledger.examples, m1);
        assert_eq!(r.ledger.bits, 11 * m1);
        assert_eq!(r.ledger.rounds, 1);
    }

    #[test]
    fn already_correct_learner_halts_at_once() {
        let s = Sample::new(vec![LabeledExample::new(vec![1.0, 1.0], Label::Pos)]);
        let mut l = ConjunctionElimination::new(2);
        let (r, _) = eq_mistake_bound_on(&[s], Encoding::boolean(2), &mut l, None).unwrap();
        assert_eq!((r.ledger.examples, r.ledger.rounds), (0, 1));
    }

    #[test]
    fn mistake_cap_is_enforced() {
        let s = Sample::new(vec![
            LabeledExample::new(vec![0.0, 1.0], Label::Pos),
            LabeledExample::new(vec![1.0, 0.0], Label::Pos),
        ]);
        let mut l = ConjunctionElimination::new(2);
        let err = eq_mistake_bound_on(&[s], Encoding::boolean(2), &mut l, Some(1)).unwrap_err();
        assert_eq!(err, Error::MistakeCap { cap: 1 });
    }

    #[test]
    fn finite_erm_prefers_lowest_error() {
        let class = vec![
            Hypothesis::Threshold {
                coord: 0,
                cut: 0.5,
                positive_above: false,
            },
            Hypothesis::Threshold {
                coord: 0,
                cut: 0.5,
                positive_above: true,
            },
        ];
        let s = Sample::new(vec![
            LabeledExample::new(vec![0.9], Label::Pos),
            LabeledExample::new(vec![0.1], Label::Neg),
        ]);
        assert_eq!(BatchLearner::Finite { class: class.clone() }.learn(&s, 1).unwrap(), class[1]);
    }
}
