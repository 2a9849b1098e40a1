//! Domain types shared by every protocol: examples, samples, targets,
//! hypotheses, and run results.

use crate::bits::BitVec;
use crate::channel::{Channel, CostLedger, Encoding, TraceEntry};
use crate::declist::DecisionList;
use crate::error::{Error, Result};
use crate::parity::Gf2Basis;
use crate::rng::Seeds;
use crate::sampling::{draw_noisy_sample, DistributionSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// A ±1 label. Boolean concepts map `true` to `Pos`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_bool(b: bool) -> Self {
        if b {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    /// `Pos` for values >= 0, so a zero vote counts as positive.
    pub fn from_sign(v: f64) -> Self {
        Self::from_bool(v >= 0.0)
    }

    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }

    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        match l {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }
}

impl TryFrom<i8> for Label {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            _ => Err(format!("label must be +1 or -1, got {v}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(features: Vec<f64>, label: Label) -> Self {
        Self { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }
}

/// An ordered, weighted list of examples. Weights default to 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub examples: Vec<LabeledExample>,
    pub weights: Vec<f64>,
}

impl Sample {
    pub fn new(examples: Vec<LabeledExample>) -> Self {
        let weights = vec![1.0; examples.len()];
        Self { examples, weights }
    }

    pub fn with_weights(examples: Vec<LabeledExample>, weights: Vec<f64>) -> Result<Self> {
        if examples.len() != weights.len() {
            return Err(Error::Config(format!(
                "{} examples but {} weights",
                examples.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("sample weights must be nonnegative".into()));
        }
        Ok(Self { examples, weights })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.examples.first().map(LabeledExample::dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter()
    }

    pub fn positives(&self) -> impl Iterator<Item = &LabeledExample> {
        self.examples.iter().filter(|e| e.label.is_pos())
    }

    pub fn extend(&mut self, other: Sample) {
        self.examples.extend(other.examples);
        self.weights.extend(other.weights);
    }
}

/// The unknown concept that labels every player's data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetFunction {
    /// Monotone conjunction of the variables whose mask bit is set.
    Conjunction { mask: BitVec },
    /// Closed axis-parallel box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    DecisionList(DecisionList),
    /// Homogeneous halfspace `sign(w·x)` with unit-norm `w`.
    HomogeneousLinear { w: Vec<f64> },
    /// `+1` iff the GF(2) inner product with `coeffs` is 1.
    Parity { coeffs: BitVec },
    /// One-dimensional threshold on coordinate `coord`.
    Threshold { coord: usize, cut: f64, positive_above: bool },
    /// Union of closed intervals on the first coordinate.
    IntervalUnion { intervals: Vec<(f64, f64)> },
}

impl TargetFunction {
    pub fn validate(&self) -> Result<()> {
        match self {
            TargetFunction::Box { lo, hi } if lo.len() != hi.len() => Err(Error::DimensionMismatch {
                expected: lo.len(),
                found: hi.len(),
            }),
            TargetFunction::DecisionList(dl) => dl.validate(),
            TargetFunction::HomogeneousLinear { w } => {
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    Err(Error::Config(format!("linear target must have unit norm, got {norm}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Whether inputs of dimension `d` are valid for this target.
    pub fn accepts_dimension(&self, d: usize) -> bool {
        match self {
            TargetFunction::Conjunction { mask } => mask.len() == d,
            TargetFunction::Box { lo, .. } => lo.len() == d,
            TargetFunction::DecisionList(dl) => dl.n == d,
            TargetFunction::HomogeneousLinear { w } => w.len() == d,
            TargetFunction::Parity { coeffs } => coeffs.len() == d,
            TargetFunction::Threshold { coord, .. } => *coord < d,
            TargetFunction::IntervalUnion { .. } => d >= 1,
        }
    }

    /// The declared dimension, where the target fixes one.
    pub fn dimension(&self) -> Option<usize> {
        match self {
            TargetFunction::Conjunction { mask } => Some(mask.len()),
            TargetFunction::Box { lo, .. } => Some(lo.len()),
            TargetFunction::DecisionList(dl) => Some(dl.n),
            TargetFunction::HomogeneousLinear { w } => Some(w.len()),
            TargetFunction::Parity { coeffs } => Some(coeffs.len()),
            TargetFunction::Threshold { .. } | TargetFunction::IntervalUnion { .. } => None,
        }
    }

    /// The hypothesis that computes the same function.
    pub fn to_hypothesis(&self) -> Hypothesis {
        match self {
            TargetFunction::Conjunction { mask } => Hypothesis::Conjunction { mask: mask.clone() },
            TargetFunction::Box { lo, hi } => Hypothesis::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            TargetFunction::DecisionList(dl) => Hypothesis::DecisionList(dl.clone()),
            TargetFunction::HomogeneousLinear { w } => Hypothesis::Linear { w: w.clone() },
            TargetFunction::Parity { coeffs } => Hypothesis::ParityProper {
                coeffs: coeffs.clone(),
            },
            TargetFunction::Threshold {
                coord,
                cut,
                positive_above,
            } => Hypothesis::Threshold {
                coord: *coord,
                cut: *cut,
                positive_above: *positive_above,
            },
            TargetFunction::IntervalUnion { intervals } => Hypothesis::IntervalUnion {
                intervals: intervals.clone(),
            },
        }
    }

    pub fn eval(&self, x: &[f64]) -> Label {
        match self {
            TargetFunction::Conjunction { mask } => conjunction_eval(mask, x),
            TargetFunction::Box { lo, hi } => box_eval(lo, hi, x),
            TargetFunction::DecisionList(dl) => dl.eval(x),
            TargetFunction::HomogeneousLinear { w } => Label::from_sign(dot(w, x)),
            TargetFunction::Parity { coeffs } => parity_eval(coeffs, x),
            TargetFunction::Threshold {
                coord,
                cut,
                positive_above,
            } => threshold_eval(*coord, *cut, *positive_above, x),
            TargetFunction::IntervalUnion { intervals } => interval_eval(intervals, x),
        }
    }
}

/// Every hypothesis representation a protocol can output or transmit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Hypothesis {
    Conjunction {
        mask: BitVec,
    },
    /// Closed box; a coordinate with `lo > hi` makes it empty.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    DecisionList(DecisionList),
    Linear {
        w: Vec<f64>,
    },
    ParityProper {
        coeffs: BitVec,
    },
    /// Reliable-useful span predictor with a fallback for "don't know".
    ParityNonProper {
        basis: Gf2Basis,
        fallback: std::boxed::Box<Hypothesis>,
    },
    WeightedMajority {
        voters: Vec<(Hypothesis, f64)>,
    },
    MajorityOfSet {
        members: Vec<Hypothesis>,
    },
    Threshold {
        coord: usize,
        cut: f64,
        positive_above: bool,
    },
    IntervalUnion {
        intervals: Vec<(f64, f64)>,
    },
}

impl Hypothesis {
    /// The box containing nothing: identity for the min/max closure.
    pub fn empty_box(d: usize) -> Self {
        Hypothesis::Box {
            lo: vec![f64::INFINITY; d],
            hi: vec![f64::NEG_INFINITY; d],
        }
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        match self {
            Hypothesis::Conjunction { mask } => conjunction_eval(mask, x),
            Hypothesis::Box { lo, hi } => box_eval(lo, hi, x),
            Hypothesis::DecisionList(dl) => dl.eval(x),
            Hypothesis::Linear { w } => Label::from_sign(dot(w, x)),
            Hypothesis::ParityProper { coeffs } => parity_eval(coeffs, x),
            Hypothesis::ParityNonProper { basis, fallback } => {
                match basis.predict(&BitVec::from_features(x)) {
                    Some(bit) => Label::from_bool(bit),
                    None => fallback.predict(x),
                }
            }
            Hypothesis::WeightedMajority { voters } => {
                Label::from_sign(voters.iter().map(|(h, a)| a * h.predict(x).sign()).sum())
            }
            Hypothesis::MajorityOfSet { members } => {
                let pos = members.iter().filter(|h| h.predict(x).is_pos()).count();
                Label::from_bool(2 * pos >= members.len())
            }
            Hypothesis::Threshold {
                coord,
                cut,
                positive_above,
            } => threshold_eval(*coord, *cut, *positive_above, x),
            Hypothesis::IntervalUnion { intervals } => interval_eval(intervals, x),
        }
    }

    /// Size on the wire, with real numbers carried at `precision_bits` each.
    pub fn encoded_bits(&self, precision_bits: u32) -> u64 {
        let p = precision_bits as u64;
        match self {
            Hypothesis::Conjunction { mask } => mask.len().max(1) as u64,
            Hypothesis::Box { lo, .. } => (2 * lo.len() as u64 * p).max(1),
            Hypothesis::DecisionList(dl) => dl.encoded_bits(),
            Hypothesis::Linear { w } => w.len() as u64 * p + 1,
            Hypothesis::ParityProper { coeffs } => coeffs.len().max(1) as u64,
            Hypothesis::ParityNonProper { basis, fallback } => {
                basis.rank() as u64 * (basis.n() as u64 + 1) + fallback.encoded_bits(precision_bits)
            }
            Hypothesis::WeightedMajority { voters } => {
                1 + voters
                    .iter()
                    .map(|(h, _)| h.encoded_bits(precision_bits) + p)
                    .sum::<u64>()
            }
            Hypothesis::MajorityOfSet { members } => {
                1 + members.iter().map(|h| h.encoded_bits(precision_bits)).sum::<u64>()
            }
            Hypothesis::Threshold { .. } => p + 1,
            Hypothesis::IntervalUnion { intervals } => 2 * intervals.len() as u64 * p + 1,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn conjunction_eval(mask: &BitVec, x: &[f64]) -> Label {
    Label::from_bool(mask.iter_ones().all(|j| x[j] >= 0.5))
}

fn box_eval(lo: &[f64], hi: &[f64], x: &[f64]) -> Label {
    Label::from_bool(
        lo.iter()
            .zip(hi)
            .zip(x)
            .all(|((l, h), v)| *l <= *v && *v <= *h),
    )
}

fn parity_eval(coeffs: &BitVec, x: &[f64]) -> Label {
    Label::from_bool(coeffs.iter_ones().filter(|&j| x[j] >= 0.5).count() % 2 == 1)
}

fn threshold_eval(coord: usize, cut: f64, positive_above: bool, x: &[f64]) -> Label {
    Label::from_bool((x[coord] >= cut) == positive_above)
}

fn interval_eval(intervals: &[(f64, f64)], x: &[f64]) -> Label {
    Label::from_bool(intervals.iter().any(|&(a, b)| a <= x[0] && x[0] <= b))
}

/// A party on the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PartyId {
    Player(usize),
    Center,
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartyId::Player(i) => write!(f, "p{i}"),
            PartyId::Center => f.write_str("center"),
        }
    }
}

impl FromStr for PartyId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "center" {
            return Ok(PartyId::Center);
        }
        s.strip_prefix('p')
            .and_then(|i| i.parse().ok())
            .map(PartyId::Player)
            .ok_or_else(|| format!("bad party id {s:?}"))
    }
}

impl From<PartyId> for String {
    fn from(p: PartyId) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PartyId {
    type Error = String;
    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

/// Error of one hypothesis on each player distribution and on the mixture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_player: Vec<f64>,
    pub mixture: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub hypotheses: BTreeMap<PartyId, Hypothesis>,
    pub ledger: CostLedger,
    /// Errors of each receiver's hypothesis against the clean target.
    pub errors: BTreeMap<PartyId, ErrorReport>,
    /// Protocol-specific counters (update counts, loop counts, ...).
    pub diagnostics: BTreeMap<String, f64>,
    /// Every send and round advance, in order, for ledger replay.
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
    #[serde(skip)]
    pub encoding: Option<Encoding>,
}

impl ProtocolResult {
    pub fn new(hypotheses: BTreeMap<PartyId, Hypothesis>, ledger: CostLedger) -> Self {
        Self {
            hypotheses,
            ledger,
            errors: BTreeMap::new(),
            diagnostics: BTreeMap::new(),
            trace: Vec::new(),
            encoding: None,
        }
    }

    pub fn from_channel(hypotheses: BTreeMap<PartyId, Hypothesis>, channel: Channel) -> Self {
        let enc = *channel.encoding();
        let (ledger, trace) = channel.into_parts();
        let mut r = Self::new(hypotheses, ledger);
        r.trace = trace;
        r.encoding = Some(enc);
        r
    }

    /// The center's hypothesis if there is a center, else player 0's.
    pub fn output(&self) -> &Hypothesis {
        self.hypotheses
            .get(&PartyId::Center)
            .or_else(|| self.hypotheses.values().next())
            .expect("a protocol result always holds at least one hypothesis")
    }

    /// Worst mixture error over all receivers.
    pub fn mixture_error(&self) -> f64 {
        self.errors.values().map(|e| e.mixture).fold(0.0, f64::max)
    }

    /// Worst error on player `i`'s distribution over all receivers.
    pub fn player_error(&self, i: usize) -> f64 {
        self.errors
            .values()
            .filter_map(|e| e.per_player.get(i).copied())
            .fold(0.0, f64::max)
    }

    pub fn diagnostic(&self, key: &str) -> Option<f64> {
        self.diagnostics.get(key).copied()
    }

    pub(crate) fn note(&mut self, key: &str, value: f64) {
        self.diagnostics.insert(key.to_string(), value);
    }
}

/// One learning task: the players' distributions, the target, optional label
/// noise, and the root seed every stream of the run derives from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub players: Vec<DistributionSpec>,
    pub target: TargetFunction,
    /// Independent label-flip probability applied to every drawn example.
    #[serde(default)]
    pub noise: f64,
    pub seed: u64,
    /// Monte-Carlo draws used when measuring mixture error.
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
}

fn default_eval_samples() -> usize {
    20_000
}

impl Problem {
    pub fn new(players: Vec<DistributionSpec>, target: TargetFunction, seed: u64) -> Result<Self> {
        let p = Self {
            players,
            target,
            noise: 0.0,
            seed,
            eval_samples: default_eval_samples(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_noise(mut self, noise: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&noise) {
            return Err(Error::Config(format!("noise rate must be in [0, 1/2), got {noise}")));
        }
        self.noise = noise;
        Ok(self)
    }

    pub fn with_eval_samples(mut self, m: usize) -> Self {
        self.eval_samples = m.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.players.is_empty() {
            return Err(Error::Config("at least one player is required".into()));
        }
        self.target.validate()?;
        let d = self.players[0].dim();
        for spec in &self.players {
            spec.validate()?;
            if spec.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: spec.dim(),
                });
            }
        }
        if !self.target.accepts_dimension(d) {
            return Err(Error::DimensionMismatch {
                expected: self.target.dimension().unwrap_or(d),
                found: d,
            });
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.players.len()
    }

    pub fn dim(&self) -> usize {
        self.players[0].dim()
    }

    pub fn seeds(&self) -> Seeds {
        Seeds::new(self.seed)
    }

    /// `m` fresh labeled draws from player `i`'s distribution, on the stream
    /// named by `purpose` and `round`.
    pub fn draw(&self, i: usize, m: usize, purpose: &str, round: u64) -> Result<Sample> {
        let mut rng = self.seeds().stream(purpose, &[i as u64, round]);
        draw_noisy_sample(&self.players[i], &self.target, m, self.noise, &mut rng)
    }

    /// Fills in `result.errors` for every receiver.
    pub fn evaluate(&self, result: &mut ProtocolResult) -> Result<()> {
        let mut cache: Vec<(Hypothesis, ErrorReport)> = Vec::new();
        let mut errors = BTreeMap::new();
        for (party, h) in &result.hypotheses {
            let report = match cache.iter().find(|(c, _)| c == h) {
                Some((_, r)) => r.clone(),
                None => {
                    let r = crate::eval::error_report(h, self)?;
                    cache.push((h.clone(), r.clone()));
                    r
                }
            };
            errors.insert(*party, report);
        }
        result.errors = errors;
        Ok(())
    }
}
