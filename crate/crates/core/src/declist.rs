//! Decision lists and the triplet-announcement protocol.
//!
//! Variables are numbered from 1; `j = 0` names the else-rule. Each round,
//! players announce the triplets newly consistent with their alive examples,
//! the center broadcasts the ones every player has announced, and players
//! retire the examples those rules cover.

use crate::channel::{Channel, Encoding, Message};
use crate::error::{Error, Result};
use crate::model::{Hypothesis, Label, PartyId, Problem, ProtocolResult, Sample};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// The rule "if x_j = b then output c". Ordered by `(j, b, c)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RuleTriplet {
    pub j: usize,
    pub b: bool,
    pub c: bool,
}

impl RuleTriplet {
    pub fn new(j: usize, b: bool, c: bool) -> Self {
        // `b` is meaningless for the else-rule; keep one canonical form
        Self { j, b: b && j != 0, c }
    }

    pub fn else_rule(c: bool) -> Self {
        Self::new(0, false, c)
    }

    pub fn is_else(&self) -> bool {
        self.j == 0
    }

    pub fn fires(&self, x: &[f64]) -> bool {
        self.j == 0 || (x[self.j - 1] >= 0.5) == self.b
    }

    pub fn output(&self) -> Label {
        Label::from_bool(self.c)
    }

    /// `ceil(log2(n+1)) + 2`.
    pub fn encoded_bits(n: usize) -> u64 {
        (usize::BITS - n.leading_zeros()) as u64 + 2
    }

    /// All `4n + 2` triplets over `n` variables in `(j, b, c)` order.
    pub fn all(n: usize) -> Vec<RuleTriplet> {
        let mut v = vec![Self::else_rule(false), Self::else_rule(true)];
        for j in 1..=n {
            for b in [false, true] {
                for c in [false, true] {
                    v.push(Self::new(j, b, c));
                }
            }
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionList {
    pub n: usize,
    pub rules: Vec<RuleTriplet>,
}

impl DecisionList {
    pub fn new(n: usize, rules: Vec<RuleTriplet>) -> Result<Self> {
        let dl = Self { n, rules };
        dl.validate()?;
        Ok(dl)
    }

    pub fn constant(n: usize, c: bool) -> Self {
        Self {
            n,
            rules: vec![RuleTriplet::else_rule(c)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let elses = self.rules.iter().filter(|r| r.is_else()).count();
        if elses != 1 || !self.rules.last().is_some_and(RuleTriplet::is_else) {
            return Err(Error::Config(
                "a decision list must end with exactly one else-rule".into(),
            ));
        }
        if let Some(r) = self.rules.iter().find(|r| r.j > self.n) {
            return Err(Error::Config(format!("rule names variable {} of {}", r.j, self.n)));
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Label {
        self.rules
            .iter()
            .find(|r| r.fires(x))
            .map_or(Label::Neg, RuleTriplet::output)
    }

    pub fn encoded_bits(&self) -> u64 {
        self.rules.len() as u64 * RuleTriplet::encoded_bits(self.n)
    }

    /// Number of adjacent rule pairs with different outputs.
    pub fn alternations(&self) -> usize {
        self.rules.windows(2).filter(|w| w[0].c != w[1].c).count()
    }
}

/// Triplets consistent with every example of `sample` whose `alive` flag is
/// set: `(j,b,c)` qualifies iff every alive example with `x_j = b` has label
/// `c`, and the else-rule `(0,·,c)` iff every alive example has label `c`.
pub fn consistent_triplets_alive(sample: &Sample, alive: &[bool], n: usize) -> BTreeSet<RuleTriplet> {
    // seen[j][b][c]: some alive example has x_j = b and label c
    let mut seen = vec![[[false; 2]; 2]; n + 1];
    for (e, _) in sample.iter().zip(alive).filter(|(_, a)| **a) {
        let c = e.label.is_pos() as usize;
        seen[0][0][c] = true;
        for j in 1..=n {
            let b = (e.features[j - 1] >= 0.5) as usize;
            seen[j][b][c] = true;
        }
    }
    let mut out = BTreeSet::new();
    for (j, s) in seen.iter().enumerate() {
        for b in [false, true] {
            if j == 0 && b {
                continue;
            }
            for c in [false, true] {
                if !s[b as usize][!c as usize] {
                    out.insert(RuleTriplet::new(j, b, c));
                }
            }
        }
    }
    out
}

pub fn consistent_triplets(sample: &Sample, n: usize) -> BTreeSet<RuleTriplet> {
    consistent_triplets_alive(sample, &vec![true; sample.len()], n)
}

/// Greedy consistent learner: repeatedly takes the first consistent rule
/// that covers an alive example, then closes with an else-rule.
pub fn greedy_decision_list(sample: &Sample, n: usize) -> Result<DecisionList> {
    let mut alive = vec![true; sample.len()];
    let mut rules = Vec::new();
    loop {
        let cons = consistent_triplets_alive(sample, &alive, n);
        if let Some(e) = cons.iter().find(|r| r.is_else()) {
            rules.push(*e);
            return DecisionList::new(n, rules);
        }
        let covers = |r: &RuleTriplet| {
            sample
                .iter()
                .zip(&alive)
                .any(|(e, a)| *a && r.fires(&e.features))
        };
        let Some(r) = cons.into_iter().find(covers) else {
            return Err(Error::LearnerFailure(
                "no decision list is consistent with the sample".into(),
            ));
        };
        for (e, a) in sample.iter().zip(alive.iter_mut()) {
            if r.fires(&e.features) {
                *a = false;
            }
        }
        rules.push(r);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionListParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Per-player sample size is `ceil(c/ε·(n·ln(1/ε) + ln(k/δ)))` unless
    /// `m` is set.
    pub c: f64,
    pub m: Option<usize>,
}

impl Default for DecisionListParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            delta: 0.05,
            c: 1.0,
            m: None,
        }
    }
}

impl DecisionListParams {
    pub fn sample_size(&self, n: usize, k: usize) -> usize {
        self.m.unwrap_or_else(|| {
            let e = self.epsilon;
            (self.c / e * (n as f64 * (1.0 / e).ln() + (k as f64 / self.delta).ln())).ceil() as usize
        })
    }
}

/// Per-player and center bookkeeping of the triplet protocol.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RuleSetState {
    /// Triplets each player has announced so far.
    pub announced: Vec<BTreeSet<RuleTriplet>>,
    /// Triplets announced by every player.
    pub common: BTreeSet<RuleTriplet>,
    /// Broadcast order, which is the output list.
    pub order: Vec<RuleTriplet>,
}

/// Runs the protocol on explicit samples. Exposed so tests can drive it with
/// hand-built data.
pub fn run_decision_list_on(samples: &[Sample], n: usize) -> Result<(ProtocolResult, RuleSetState)> {
    run_decision_list_with(samples, n, |_, s, alive, _| Ok(consistent_triplets_alive(s, alive, n)))
}

/// The triplet protocol with a pluggable consistency test. `oracle(i, sample,
/// alive, announced)` returns the triplets player `i` currently considers
/// consistent; it must keep every triplet already announced.
pub fn run_decision_list_with<F>(samples: &[Sample], n: usize, mut oracle: F) -> Result<(ProtocolResult, RuleSetState)>
where
    F: FnMut(usize, &Sample, &[bool], &BTreeSet<RuleTriplet>) -> Result<BTreeSet<RuleTriplet>>,
{
    let k = samples.len();
    let mut ch = Channel::new(k, true, Encoding::boolean(n));
    let mut alive: Vec<Vec<bool>> = samples.iter().map(|s| vec![true; s.len()]).collect();
    let mut state = RuleSetState {
        announced: vec![BTreeSet::new(); k],
        ..Default::default()
    };
    let mut broadcast: BTreeSet<RuleTriplet> = BTreeSet::new();
    let max_rounds = 4 * n + 2;
    let mut upstream = 0u64;
    loop {
        if ch.ledger().rounds as usize >= max_rounds {
            return Err(Error::ProtocolViolation("round cap exceeded".into()));
        }
        ch.advance_round();
        for i in 0..k {
            let cons = oracle(i, &samples[i], &alive[i], &state.announced[i])?;
            if !state.announced[i].is_subset(&cons) {
                return Err(Error::ProtocolViolation(format!(
                    "player {i} lost consistency of an announced rule"
                )));
            }
            for r in cons.difference(&state.announced[i]).copied().collect::<Vec<_>>() {
                upstream += ch.to_center(PartyId::Player(i), Message::Rule(r))?;
                state.announced[i].insert(r);
            }
        }
        state.common = state.announced[0]
            .iter()
            .filter(|r| state.announced.iter().all(|a| a.contains(r)))
            .copied()
            .collect();
        let fresh: Vec<RuleTriplet> = state.common.difference(&broadcast).copied().collect();
        if fresh.is_empty() {
            return Err(Error::Realizability(
                "no rule is consistent with every player's remaining data".into(),
            ));
        }
        // every alive example already agrees with a consistent else-rule, so
        // the other fresh rules add nothing
        let (elses, rules): (Vec<_>, Vec<_>) = fresh.into_iter().partition(RuleTriplet::is_else);
        let done = !elses.is_empty();
        let rules = if done { vec![elses[0]] } else { rules };
        for r in &rules {
            ch.broadcast(PartyId::Center, Message::Rule(*r))?;
            broadcast.insert(*r);
            state.order.push(*r);
        }
        if done {
            break;
        }
        for (s, a) in samples.iter().zip(alive.iter_mut()) {
            for (e, flag) in s.iter().zip(a.iter_mut()) {
                if *flag && rules.iter().any(|r| r.fires(&e.features)) {
                    *flag = false;
                }
            }
        }
    }
    let dl = DecisionList::new(n, state.order.clone())?;
    let h = Hypothesis::DecisionList(dl);
    let mut hyps: BTreeMap<PartyId, Hypothesis> =
        (0..k).map(|i| (PartyId::Player(i), h.clone())).collect();
    hyps.insert(PartyId::Center, h);
    let mut result = ProtocolResult::from_channel(hyps, ch);
    result.note("upstream_bits", upstream as f64);
    Ok((result, state))
}

pub fn run_decision_list(problem: &Problem, params: &DecisionListParams) -> Result<ProtocolResult> {
    let n = problem.dim();
    let m = params.sample_size(n, problem.k());
    let samples = (0..problem.k())
        .map(|i| problem.draw(i, m, "sample", 0))
        .collect::<Result<Vec<_>>>()?;
    let (mut result, _) = run_decision_list_on(&samples, n)?;
    result.note("sample_size", m as f64);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LabeledExample;

    fn ex(x: &[f64], pos: bool) -> LabeledExample {
        LabeledExample::new(x.to_vec(), Label::from_bool(pos))
    }

    #[test]
    fn rule_bits() {
        assert_eq!(RuleTriplet::encoded_bits(50), 8);
        assert_eq!(RuleTriplet::encoded_bits(1), 3);
        assert_eq!(RuleTriplet::encoded_bits(3), 4);
        assert_eq!(RuleTriplet::all(5).len(), 22);
    }

    #[test]
    fn single_example_triplets() {
        let s = Sample::new(vec![ex(&[1.0, 0.0], true)]);
        let t = consistent_triplets(&s, 2);
        for r in [
            RuleTriplet::new(1, true, true),
            RuleTriplet::new(2, false, true),
            RuleTriplet::else_rule(true),
            RuleTriplet::new(1, false, false),
            RuleTriplet::new(1, false, true),
            RuleTriplet::new(2, true, false),
            RuleTriplet::new(2, true, true),
        ] {
            assert!(t.contains(&r), "{r:?}");
        }
        assert_eq!(t.len(), 7);
    }

    #[test]
    fn empty_sample_is_vacuous() {
        assert_eq!(consistent_triplets(&Sample::default(), 6).len(), 26);
    }

    #[test]
    fn list_validation() {
        assert!(DecisionList::new(2, vec![RuleTriplet::new(1, true, true)]).is_err());
        assert!(DecisionList::new(2, vec![RuleTriplet::else_rule(true), RuleTriplet::else_rule(false)]).is_err());
        assert!(DecisionList::new(2, vec![RuleTriplet::new(3, true, true), RuleTriplet::else_rule(false)]).is_err());
    }

    #[test]
    fn one_variable_target() {
        let mut v = Vec::new();
        for t in 0..10 {
            let x1 = (t % 2) as f64;
            let x2 = ((t / 2) % 2) as f64;
            v.push(ex(&[x1, x2], x1 == 1.0));
        }
        let (r, state) = run_decision_list_on(&[Sample::new(v)], 2).unwrap();
        assert!(r.ledger.rounds <= 2);
        assert_eq!(state.order[0], RuleTriplet::new(1, false, false));
        assert!(state.order.contains(&RuleTriplet::new(1, true, true)));
    }

    #[test]
    fn constant_target_is_one_round() {
        let s = Sample::new(vec![ex(&[1.0, 0.0], true), ex(&[0.0, 1.0], true)]);
        let (r, state) = run_decision_list_on(&[s.clone(), s], 2).unwrap();
        assert_eq!(r.ledger.rounds, 1);
        assert!(state.order.contains(&RuleTriplet::else_rule(true)));
        assert_eq!(state.order.last(), Some(&RuleTriplet::else_rule(true)));
    }

    #[test]
    fn greedy_is_consistent() {
        let s = Sample::new(vec![
            ex(&[1.0, 0.0, 1.0], true),
            ex(&[0.0, 0.0, 1.0], false),
            ex(&[0.0, 1.0, 0.0], true),
            ex(&[0.0, 0.0, 0.0], false),
        ]);
        let dl = greedy_decision_list(&s, 3).unwrap();
        assert!(s.iter().all(|e| dl.eval(&e.features) == e.label));
    }
}
