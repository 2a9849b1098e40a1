//! GF(2) elimination and the two-player parity protocol.
//!
//! A [`Gf2Basis`] is a reliable-useful predictor: on queries in the span of
//! its training points it returns the implied label, otherwise it abstains.

use crate::bits::BitVec;
use crate::channel::{Channel, Encoding, Message, Recipient};
use crate::error::{Error, Result};
use crate::model::{Hypothesis, PartyId, Problem, ProtocolResult, Sample};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Row-reduced echelon basis with one label bit per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gf2Basis {
    n: usize,
    rows: Vec<BitVec>,
    labels: Vec<bool>,
    pivots: Vec<usize>,
}

impl Gf2Basis {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            rows: Vec::new(),
            labels: Vec::new(),
            pivots: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Reduces `v` against the basis, returning the residue and the XOR of
    /// the labels of the rows used.
    fn reduce(&self, mut v: BitVec) -> (BitVec, bool) {
        let mut acc = false;
        for ((row, &lab), &p) in self.rows.iter().zip(&self.labels).zip(&self.pivots) {
            if v.get(p) {
                v.xor_assign(row);
                acc ^= lab;
            }
        }
        (v, acc)
    }

    /// Adds a labeled point. Returns whether the rank grew.
    pub fn insert(&mut self, x: &BitVec, label: bool) -> Result<bool> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let (v, acc) = self.reduce(x.clone());
        let lab = label ^ acc;
        let Some(p) = v.first_one() else {
            return if lab {
                Err(Error::Realizability(
                    "labels are inconsistent with any parity".into(),
                ))
            } else {
                Ok(false)
            };
        };
        for (row, l) in self.rows.iter_mut().zip(self.labels.iter_mut()) {
            if row.get(p) {
                row.xor_assign(&v);
                *l ^= lab;
            }
        }
        let at = self.pivots.partition_point(|&q| q < p);
        self.rows.insert(at, v);
        self.labels.insert(at, lab);
        self.pivots.insert(at, p);
        Ok(true)
    }

    /// The label implied by the span, or `None` for "don't know".
    pub fn predict(&self, x: &BitVec) -> Option<bool> {
        let (v, acc) = self.reduce(x.clone());
        v.is_zero().then_some(acc)
    }

    /// A parity consistent with every row, with free variables set to 0.
    pub fn solve(&self) -> BitVec {
        let mut w = BitVec::zeros(self.n);
        for (&p, &l) in self.pivots.iter().zip(&self.labels) {
            if l {
                w.set(p, true);
            }
        }
        w
    }
}

fn label_bit(e: &crate::model::LabeledExample) -> bool {
    e.label.is_pos()
}

/// Row-reduces the sample's feature vectors, carrying labels along.
pub fn gf2_reduce(sample: &Sample, n: usize) -> Result<Gf2Basis> {
    let mut basis = Gf2Basis::new(n);
    for e in sample.iter() {
        basis.insert(&BitVec::from_features(&e.features), label_bit(e))?;
    }
    Ok(basis)
}

/// A consistent parity with free variables at 0.
pub fn parity_proper_learn(sample: &Sample, n: usize) -> Result<Hypothesis> {
    Ok(Hypothesis::ParityProper {
        coeffs: gf2_reduce(sample, n)?.solve(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityParams {
    pub epsilon: f64,
    /// Per-player sample size is `ceil(c·n/ε)` unless `m` is set.
    pub c: f64,
    pub m: Option<usize>,
}

impl Default for ParityParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            c: 8.0,
            m: None,
        }
    }
}

impl ParityParams {
    pub fn sample_size(&self, n: usize) -> usize {
        self.m
            .unwrap_or_else(|| (self.c * n as f64 / self.epsilon).ceil() as usize)
    }
}

/// Each player learns a span predictor and a proper parity, sends the proper
/// parity to the other player, and predicts with its own span predictor,
/// falling back to the other player's parity when it abstains.
pub fn run_parity_two_player(problem: &Problem, params: &ParityParams) -> Result<ProtocolResult> {
    if problem.k() != 2 {
        return Err(Error::Config(format!(
            "the parity protocol needs exactly 2 players, got {}",
            problem.k()
        )));
    }
    let n = problem.dim();
    let m = params.sample_size(n);
    let mut ch = Channel::new(2, false, Encoding::boolean(n));
    let mut bases = Vec::with_capacity(2);
    let mut proper = Vec::with_capacity(2);
    for i in 0..2 {
        let sample = problem.draw(i, m, "sample", 0)?;
        let basis = gf2_reduce(&sample, n)?;
        proper.push(Hypothesis::ParityProper { coeffs: basis.solve() });
        bases.push(basis);
    }
    ch.advance_round();
    for i in 0..2 {
        ch.send(
            PartyId::Player(i),
            Recipient::To(PartyId::Player(1 - i)),
            Message::Hypothesis(proper[i].clone()),
        )?;
    }
    let mut hyps = BTreeMap::new();
    for (i, basis) in bases.into_iter().enumerate() {
        hyps.insert(
            PartyId::Player(i),
            Hypothesis::ParityNonProper {
                basis,
                fallback: Box::new(proper[1 - i].clone()),
            },
        );
    }
    let mut result = ProtocolResult::from_channel(hyps, ch);
    result.note("sample_size", m as f64);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Label, LabeledExample};

    fn ex(bits: &str, label: bool) -> LabeledExample {
        LabeledExample::new(BitVec::parse(bits).unwrap().to_features(), Label::from_bool(label))
    }

    #[test]
    fn hand_xor() {
        let s = Sample::new(vec![ex("110", true), ex("011", false)]);
        let b = gf2_reduce(&s, 3).unwrap();
        assert_eq!(b.rank(), 2);
        assert_eq!(b.predict(&BitVec::parse("101").unwrap()), Some(true));
        assert_eq!(b.predict(&BitVec::parse("000").unwrap()), Some(false));
        assert_eq!(b.predict(&BitVec::parse("100").unwrap()), None);
    }

    #[test]
    fn empty_basis_abstains() {
        let b = gf2_reduce(&Sample::default(), 4).unwrap();
        assert_eq!(b.predict(&BitVec::parse("0100").unwrap()), None);
        assert_eq!(b.solve(), BitVec::zeros(4));
    }

    #[test]
    fn free_variables_are_zero() {
        let s = Sample::new(vec![ex("10", true)]);
        assert_eq!(
            parity_proper_learn(&s, 2).unwrap(),
            Hypothesis::ParityProper {
                coeffs: BitVec::parse("10").unwrap()
            }
        );
    }

    #[test]
    fn inconsistency_is_reported() {
        let s = Sample::new(vec![ex("110", true), ex("011", false), ex("101", false)]);
        assert!(matches!(gf2_reduce(&s, 3), Err(Error::Realizability(_))));
    }

    #[test]
    fn pivots_increase() {
        let s = Sample::new(vec![ex("0011", true), ex("0110", false), ex("1111", true)]);
        let b = gf2_reduce(&s, 4).unwrap();
        assert!(b.pivots().windows(2).all(|w| w[0] < w[1]));
        for (row, &p) in b.rows().iter().zip(b.pivots()) {
            assert_eq!(row.first_one(), Some(p));
        }
    }

    #[test]
    fn wrong_player_count() {
        let p = Problem::new(
            vec![crate::sampling::DistributionSpec::UniformBoolean { n: 4 }; 3],
            crate::model::TargetFunction::Parity { coeffs: BitVec::ones(4) },
            0,
        )
        .unwrap();
        assert!(matches!(run_parity_two_player(&p, &ParityParams::default()), Err(Error::Config(_))));
    }
}
