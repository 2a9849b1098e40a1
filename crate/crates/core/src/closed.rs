//! One-round protocols for intersection-closed classes: each player sends
//! its smallest consistent hypothesis and the center takes the closure.

use crate::bits::BitVec;
use crate::channel::{Channel, Encoding, Message, DEFAULT_PRECISION_BITS};
use crate::error::{Error, Result};
use crate::model::{Hypothesis, PartyId, Problem, ProtocolResult, Sample, TargetFunction};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedClass {
    Conjunction,
    Box,
}

impl ClosedClass {
    /// VC dimension used in the sample-size formula.
    pub fn vc_dim(self, dim: usize) -> usize {
        match self {
            ClosedClass::Conjunction => dim,
            ClosedClass::Box => 2 * dim,
        }
    }

    /// The smallest element: all variables, or the empty box.
    pub fn empty(self, dim: usize) -> Hypothesis {
        match self {
            ClosedClass::Conjunction => Hypothesis::Conjunction { mask: BitVec::ones(dim) },
            ClosedClass::Box => Hypothesis::empty_box(dim),
        }
    }

    fn matches(self, f: &TargetFunction) -> bool {
        matches!(
            (self, f),
            (ClosedClass::Conjunction, TargetFunction::Conjunction { .. }) | (ClosedClass::Box, TargetFunction::Box { .. })
        )
    }
}

/// Smallest hypothesis of `class` containing every positive of `sample`.
/// Fails if that hypothesis also contains a negative.
pub fn smallest_consistent(sample: &Sample, class: ClosedClass, dim: usize) -> Result<Hypothesis> {
    let h = match class {
        ClosedClass::Conjunction => {
            let mut mask = BitVec::ones(dim);
            for e in sample.positives() {
                mask.and_assign(&BitVec::from_features(&e.features));
            }
            Hypothesis::Conjunction { mask }
        }
        ClosedClass::Box => {
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for e in sample.positives() {
                for (j, &x) in e.features.iter().enumerate() {
                    lo[j] = lo[j].min(x);
                    hi[j] = hi[j].max(x);
                }
            }
            Hypothesis::Box { lo, hi }
        }
    };
    if let Some(e) = sample
        .iter()
        .find(|e| !e.label.is_pos() && h.predict(&e.features).is_pos())
    {
        return Err(Error::Realizability(format!(
            "negative example {:?} lies inside the smallest consistent hypothesis",
            e.features
        )));
    }
    Ok(h)
}

/// Smallest hypothesis of the class containing every input as a set.
pub fn closure(class: ClosedClass, dim: usize, parts: &[Hypothesis]) -> Result<Hypothesis> {
    let mut acc = class.empty(dim);
    for h in parts {
        acc = match (acc, h) {
            (Hypothesis::Conjunction { mut mask }, Hypothesis::Conjunction { mask: m }) => {
                mask.and_assign(m);
                Hypothesis::Conjunction { mask }
            }
            (Hypothesis::Box { mut lo, mut hi }, Hypothesis::Box { lo: l, hi: u }) => {
                for j in 0..dim {
                    lo[j] = lo[j].min(l[j]);
                    hi[j] = hi[j].max(u[j]);
                }
                Hypothesis::Box { lo, hi }
            }
            _ => return Err(Error::ProtocolViolation("closure over mixed hypothesis kinds".into())),
        };
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Per-player sample size is `ceil(c/ε·(d·ln(1/ε) + ln(k/δ)))` unless `m`
    /// is set, with `d` the class's VC dimension.
    pub c: f64,
    pub m: Option<usize>,
    pub precision_bits: u32,
}

impl Default for ClosedParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            delta: 0.05,
            c: 1.0,
            m: None,
            precision_bits: DEFAULT_PRECISION_BITS,
        }
    }
}

impl ClosedParams {
    pub fn sample_size(&self, class: ClosedClass, dim: usize, k: usize) -> usize {
        self.m.unwrap_or_else(|| {
            let e = self.epsilon;
            let d = class.vc_dim(dim) as f64;
            (self.c / e * (d * (1.0 / e).ln() + (k as f64 / self.delta).ln())).ceil() as usize
        })
    }
}

pub(crate) fn encoding_for(class: ClosedClass, dim: usize, precision_bits: u32) -> Encoding {
    match class {
        ClosedClass::Conjunction => Encoding::boolean(dim),
        ClosedClass::Box => Encoding::real(dim, precision_bits),
    }
}

/// Runs the closure protocol on explicit per-player samples.
pub fn run_intersection_closed_on(
    samples: &[Sample],
    class: ClosedClass,
    dim: usize,
    precision_bits: u32,
) -> Result<ProtocolResult> {
    let parts = samples
        .iter()
        .map(|s| smallest_consistent(s, class, dim))
        .collect::<Result<Vec<_>>>()?;
    send_and_close(parts, class, dim, precision_bits)
}

/// One round: each player ships its hypothesis and the center takes the
/// closure. Shared by every learner that produces per-player subsets of the
/// target.
pub fn send_and_close(parts: Vec<Hypothesis>, class: ClosedClass, dim: usize, precision_bits: u32) -> Result<ProtocolResult> {
    let k = parts.len();
    let mut ch = Channel::new(k, true, encoding_for(class, dim, precision_bits));
    ch.advance_round();
    for (i, h) in parts.iter().enumerate() {
        ch.to_center(PartyId::Player(i), Message::Hypothesis(h.clone()))?;
    }
    let h = closure(class, dim, &parts)?;
    let hyps = BTreeMap::from([(PartyId::Center, h)]);
    Ok(ProtocolResult::from_channel(hyps, ch))
}

pub fn run_intersection_closed(problem: &Problem, class: ClosedClass, params: &ClosedParams) -> Result<ProtocolResult> {
    if !class.matches(&problem.target) {
        return Err(Error::Config(format!("target is not in the {class:?} class")));
    }
    let dim = problem.dim();
    let m = params.sample_size(class, dim, problem.k());
    let samples = (0..problem.k())
        .map(|i| problem.draw(i, m, "sample", 0))
        .collect::<Result<Vec<_>>>()?;
    let mut r = run_intersection_closed_on(&samples, class, dim, params.precision_bits)?;
    r.note("sample_size", m as f64);
    Ok(r)
}
