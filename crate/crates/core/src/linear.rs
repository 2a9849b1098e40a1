//! Homogeneous linear separators: one-shot averaging for radially symmetric
//! data, the round-robin margin perceptron, and the two-player instance on
//! which round-robin needs a number of rounds quadratic in 1/γ.

use crate::channel::{Channel, Encoding, Message, Recipient, DEFAULT_PRECISION_BITS};
use crate::error::{Error, Result};
use crate::model::{dot, Hypothesis, Label, LabeledExample, PartyId, Problem, ProtocolResult, Sample, TargetFunction};
use crate::rng::{Seeds, StreamRng};
use crate::sampling::DistributionSpec;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Slack on the margin test, so points sitting exactly at margin 1 in exact
/// arithmetic count as satisfied.
pub const MARGIN_TOLERANCE: f64 = 1e-9;

/// Width of the update-count message sent with each hypothesis.
pub const COUNT_WIDTH: u32 = 32;

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// `ceil(log2(1/γ))`, the per-coordinate precision for margin-γ data.
pub fn margin_precision_bits(gamma: f64) -> u32 {
    ((1.0 / gamma).log2().ceil() as u32).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AveragingParams {
    pub epsilon: f64,
    /// Per-player sample size is `ceil(c·d/ε²)` unless `m` is set.
    pub c: f64,
    pub m: Option<usize>,
    pub precision_bits: u32,
}

impl Default for AveragingParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            c: 1.0,
            m: None,
            precision_bits: DEFAULT_PRECISION_BITS,
        }
    }
}

/// Mean of `ℓ(x)·x/‖x‖` over a sample.
pub fn label_weighted_mean(sample: &Sample, d: usize) -> Vec<f64> {
    let mut acc = vec![0.0; d];
    for e in sample.iter() {
        let s = e.label.sign() / norm(&e.features).max(f64::MIN_POSITIVE);
        for (a, x) in acc.iter_mut().zip(&e.features) {
            *a += s * x;
        }
    }
    let m = sample.len().max(1) as f64;
    acc.iter_mut().for_each(|a| *a /= m);
    acc
}

/// Each player sends the label-weighted mean direction of its sample; the
/// center averages the k vectors and normalizes.
pub fn averaging_protocol(problem: &Problem, params: &AveragingParams) -> Result<ProtocolResult> {
    for spec in &problem.players {
        if !matches!(
            spec,
            DistributionSpec::UniformSphere { .. } | DistributionSpec::GaussianSphericalUnitNorm { .. }
        ) {
            return Err(Error::Config("averaging needs radially symmetric player distributions".into()));
        }
    }
    let d = problem.dim();
    let k = problem.k();
    let m = params
        .m
        .unwrap_or_else(|| (params.c * d as f64 / (params.epsilon * params.epsilon)).ceil() as usize);
    let mut ch = Channel::new(k, true, Encoding::real(d, params.precision_bits));
    ch.advance_round();
    let mut sum = vec![0.0; d];
    for i in 0..k {
        let s = problem.draw(i, m, "sample", 0)?;
        let v = label_weighted_mean(&s, d);
        ch.to_center(PartyId::Player(i), Message::Hypothesis(Hypothesis::Linear { w: v.clone() }))?;
        sum.iter_mut().zip(&v).for_each(|(a, b)| *a += b);
    }
    let n = norm(&sum);
    if !(n > 1e-12) {
        return Err(Error::Degenerate("averaged direction is zero; retry with a new seed".into()));
    }
    let w: Vec<f64> = sum.iter().map(|x| x / n).collect();
    let mut r = ProtocolResult::from_channel(BTreeMap::from([(PartyId::Center, Hypothesis::Linear { w })]), ch);
    r.note("sample_size", m as f64);
    Ok(r)
}

/// How a player's local perceptron phase ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PassMode {
    /// Scan cyclically, updating on margin violators, until a full cycle is clean.
    UntilConsistent,
    /// Update on uniformly chosen violators until at most an `epsilon`
    /// fraction of the sample violates the margin.
    UntilEpsFraction { epsilon: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MarginPerceptronState {
    pub w: Vec<f64>,
    pub update_count: u64,
    /// Updates made in each completed meta-round.
    pub per_meta_round: Vec<u64>,
}

impl MarginPerceptronState {
    pub fn new(d: usize) -> Self {
        Self {
            w: vec![0.0; d],
            ..Default::default()
        }
    }

    fn violates(&self, e: &LabeledExample) -> bool {
        e.label.sign() * dot(&self.w, &e.features) < 1.0 - MARGIN_TOLERANCE
    }

    fn update(&mut self, e: &LabeledExample) {
        let s = e.label.sign();
        self.w.iter_mut().zip(&e.features).for_each(|(w, x)| *w += s * x);
        self.update_count += 1;
    }

    pub fn violation_fraction(&self, sample: &Sample) -> f64 {
        if sample.is_empty() {
            return 0.0;
        }
        sample.iter().filter(|e| self.violates(e)).count() as f64 / sample.len() as f64
    }
}

/// One update made during a pass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub index: usize,
    pub example: Vec<f64>,
    pub label: Label,
    pub w_after: Vec<f64>,
}

/// One local perceptron phase on `sample`. `cursor` is the player's
/// persistent scan position; `rng` picks violators in ε-fraction mode.
/// Fails once `state.update_count` would exceed `cap`.
pub fn margin_perceptron_pass(
    state: &mut MarginPerceptronState,
    sample: &Sample,
    mode: PassMode,
    cursor: &mut usize,
    cap: u64,
    rng: &mut StreamRng,
) -> Result<Vec<UpdateRecord>> {
    let mut log = Vec::new();
    let m = sample.len();
    if m == 0 {
        return Ok(log);
    }
    let mut record = |state: &mut MarginPerceptronState, idx: usize| -> Result<()> {
        if state.update_count >= cap {
            return Err(Error::NonSeparable { cap });
        }
        let e = &sample.examples[idx];
        state.update(e);
        log.push(UpdateRecord {
            index: idx,
            example: e.features.clone(),
            label: e.label,
            w_after: state.w.clone(),
        });
        Ok(())
    };
    match mode {
        PassMode::UntilConsistent => {
            let mut clean = 0;
            while clean < m {
                let idx = *cursor % m;
                *cursor = (idx + 1) % m;
                if state.violates(&sample.examples[idx]) {
                    record(state, idx)?;
                    clean = 0;
                } else {
                    clean += 1;
                }
            }
        }
        PassMode::UntilEpsFraction { epsilon } => loop {
            let bad: Vec<usize> = (0..m).filter(|&i| state.violates(&sample.examples[i])).collect();
            if bad.len() as f64 <= epsilon * m as f64 {
                break;
            }
            let idx = bad[rng.random_range(0..bad.len())];
            record(state, idx)?;
        },
    }
    Ok(log)
}

/// When the token-passing loop ends.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopRule {
    /// Player 1 stops when the previous meta-round made fewer than 1/α updates.
    FewUpdates { alpha: f64 },
    /// Stop after a meta-round in which no player updated.
    QuietMetaRound,
    /// Stop as soon as a player receives a hypothesis it does not change.
    QuietPlayer,
}

/// One row of an update trace: which pass, which player, what it used, and
/// the hypothesis it produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: u64,
    pub player: usize,
    pub example: Vec<f64>,
    pub label: Label,
    pub hypothesis: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct RoundRobinOutcome {
    pub result: ProtocolResult,
    pub state: MarginPerceptronState,
    pub trace: Vec<TraceRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRobinConfig {
    pub mode: PassMode,
    pub stop: StopRule,
    pub update_cap: u64,
    pub max_meta_rounds: u64,
    pub precision_bits: u32,
}

/// Passes the hypothesis around players `0..k` in order, each running a
/// local perceptron phase, until `cfg.stop` fires.
pub fn round_robin_on(samples: &[Sample], d: usize, cfg: &RoundRobinConfig, seeds: &Seeds) -> Result<RoundRobinOutcome> {
    let k = samples.len();
    let mut ch = Channel::new(k, false, Encoding::real(d, cfg.precision_bits));
    let mut state = MarginPerceptronState::new(d);
    let mut cursors = vec![0usize; k];
    let mut trace = Vec::new();
    let mut holder;
    'outer: loop {
        if state.per_meta_round.len() as u64 >= cfg.max_meta_rounds {
            return Err(Error::NonConvergence {
                cap: cfg.max_meta_rounds,
            });
        }
        let meta = state.per_meta_round.len() as u64;
        let mut meta_updates = 0u64;
        for i in 0..k {
            let mut rng = seeds.stream("perceptron", &[i as u64, meta]);
            let log = margin_perceptron_pass(&mut state, &samples[i], cfg.mode, &mut cursors[i], cfg.update_cap, &mut rng)?;
            holder = i;
            if log.is_empty() && cfg.stop == StopRule::QuietPlayer && state.update_count > 0 {
                break 'outer;
            }
            let round = ch.ledger().rounds + 1;
            trace.extend(log.iter().map(|u| TraceRow {
                round,
                player: i,
                example: u.example.clone(),
                label: u.label,
                hypothesis: u.w_after.clone(),
            }));
            meta_updates += log.len() as u64;
            let next = PartyId::Player((i + 1) % k);
            ch.send(
                PartyId::Player(i),
                Recipient::To(next),
                Message::Hypothesis(Hypothesis::Linear { w: state.w.clone() }),
            )?;
            ch.send(
                PartyId::Player(i),
                Recipient::To(next),
                Message::count(log.len() as u64, COUNT_WIDTH),
            )?;
            ch.advance_round();
        }
        ch.advance_meta_round();
        state.per_meta_round.push(meta_updates);
        holder = 0;
        let stop = match cfg.stop {
            StopRule::FewUpdates { alpha } => (meta_updates as f64) < 1.0 / alpha,
            StopRule::QuietMetaRound => meta_updates == 0,
            StopRule::QuietPlayer => false,
        };
        if stop {
            break;
        }
    }
    let hyps = BTreeMap::from([(PartyId::Player(holder), Hypothesis::Linear { w: state.w.clone() })]);
    let mut result = ProtocolResult::from_channel(hyps, ch);
    result.note("updates", state.update_count as f64);
    Ok(RoundRobinOutcome { result, state, trace })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RoundRobinMode {
    /// Data α-well-spread with margin γ; checked on the drawn samples.
    WellSpread { alpha: f64, gamma: f64 },
    /// Non-concentrated data; α is derived from `c_prime`.
    NonConcentrated { epsilon: f64, c_prime: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRobinParams {
    pub mode: RoundRobinMode,
    /// Examples per player. Fixed lists default to one full cycle, other
    /// distributions to 1000 draws.
    pub m: Option<usize>,
    pub update_cap: Option<u64>,
    pub max_meta_rounds: u64,
    pub precision_bits: Option<u32>,
}

impl RoundRobinParams {
    pub fn well_spread(alpha: f64, gamma: f64) -> Self {
        Self {
            mode: RoundRobinMode::WellSpread { alpha, gamma },
            m: None,
            update_cap: None,
            max_meta_rounds: 10_000,
            precision_bits: None,
        }
    }

    pub fn non_concentrated(epsilon: f64) -> Self {
        Self {
            mode: RoundRobinMode::NonConcentrated { epsilon, c_prime: 4.0 },
            m: None,
            update_cap: None,
            max_meta_rounds: 10_000,
            precision_bits: None,
        }
    }
}

/// `sqrt(c'·ln(2dk/ε)/d)`.
pub fn non_concentrated_alpha(d: usize, k: usize, epsilon: f64, c_prime: f64) -> f64 {
    (c_prime * (2.0 * d as f64 * k as f64 / epsilon).ln() / d as f64).sqrt()
}

/// Largest `|cos|` over pairs of points held by different players, and
/// over all pairs when `within` is set.
pub fn max_abs_cosine(samples: &[Sample], within: bool) -> f64 {
    let pts: Vec<(usize, Vec<f64>)> = samples
        .iter()
        .enumerate()
        .flat_map(|(i, s)| {
            s.iter().map(move |e| {
                let n = norm(&e.features).max(f64::MIN_POSITIVE);
                (i, e.features.iter().map(|x| x / n).collect())
            })
        })
        .collect();
    let mut worst = 0.0f64;
    for a in 0..pts.len() {
        for b in a + 1..pts.len() {
            if within || pts[a].0 != pts[b].0 {
                worst = worst.max(dot(&pts[a].1, &pts[b].1).abs());
            }
        }
    }
    worst
}

/// Smallest `ℓ(x)·(w*·x)/‖x‖` over all points.
pub fn min_margin(samples: &[Sample], w: &[f64]) -> f64 {
    samples
        .iter()
        .flat_map(|s| s.iter())
        .map(|e| e.label.sign() * dot(w, &e.features) / norm(&e.features).max(f64::MIN_POSITIVE))
        .fold(f64::INFINITY, f64::min)
}

fn default_m(spec: &DistributionSpec) -> usize {
    match spec {
        DistributionSpec::FixedOrderedList { points } => points.len(),
        _ => 1000,
    }
}

/// The round-robin margin perceptron in either of its two regimes.
pub fn round_robin_perceptron(problem: &Problem, params: &RoundRobinParams) -> Result<ProtocolResult> {
    let TargetFunction::HomogeneousLinear { w: w_star } = &problem.target else {
        return Err(Error::Config("round-robin perceptron needs a homogeneous linear target".into()));
    };
    let d = problem.dim();
    let k = problem.k();
    let samples = (0..k)
        .map(|i| {
            let m = params.m.unwrap_or_else(|| default_m(&problem.players[i]));
            problem.draw(i, m, "sample", 0)
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.iter().any(Sample::is_empty) {
        return Err(Error::Config("every player needs a nonempty sample".into()));
    }
    let (cfg, diag) = match params.mode {
        RoundRobinMode::WellSpread { alpha, gamma } => {
            let spread = max_abs_cosine(&samples, true);
            let margin = min_margin(&samples, w_star);
            if spread >= alpha {
                return Err(Error::Config(format!("data is not {alpha}-well-spread (max |cos| {spread})")));
            }
            if margin < gamma - 1e-12 {
                return Err(Error::Config(format!("data margin {margin} is below {gamma}")));
            }
            let cfg = RoundRobinConfig {
                mode: PassMode::UntilConsistent,
                stop: StopRule::FewUpdates { alpha },
                update_cap: params.update_cap.unwrap_or((30.0 / (gamma * gamma)).ceil() as u64),
                max_meta_rounds: params.max_meta_rounds,
                precision_bits: params.precision_bits.unwrap_or_else(|| margin_precision_bits(gamma)),
            };
            (cfg, [("alpha", alpha), ("measured_spread", spread), ("measured_margin", margin)])
        }
        RoundRobinMode::NonConcentrated { epsilon, c_prime } => {
            let alpha = non_concentrated_alpha(d, k, epsilon, c_prime);
            let cfg = RoundRobinConfig {
                mode: PassMode::UntilEpsFraction { epsilon },
                stop: StopRule::QuietMetaRound,
                update_cap: params.update_cap.unwrap_or(10_000_000),
                max_meta_rounds: params.max_meta_rounds,
                precision_bits: params.precision_bits.unwrap_or(DEFAULT_PRECISION_BITS),
            };
            (cfg, [("alpha", alpha), ("epsilon", epsilon), ("c_prime", c_prime)])
        }
    };
    let mut out = round_robin_on(&samples, d, &cfg, &problem.seeds())?;
    for (key, v) in diag {
        out.result.note(key, v);
    }
    Ok(out.result)
}

/// Points `(1, ±γ, ·γ)` of the two-player instance, in scan order. Player 1
/// holds 100 positives, player 2 holds 100 negatives.
pub fn appendix_c_points(gamma: f64) -> [Vec<Vec<f64>>; 2] {
    let g = gamma;
    let mut p1 = vec![vec![1.0, g, g]];
    for _ in 0..49 {
        p1.push(vec![1.0, g, 3.0 * g]);
        p1.push(vec![1.0, g, -g]);
    }
    p1.push(vec![1.0, g, g]);
    let mut p2 = Vec::with_capacity(100);
    for _ in 0..50 {
        p2.push(vec![1.0, -g, -3.0 * g]);
        p2.push(vec![1.0, -g, g]);
    }
    [p1, p2]
}

pub fn appendix_c_problem(gamma: f64) -> Result<Problem> {
    let [p1, p2] = appendix_c_points(gamma);
    Problem::new(
        vec![
            DistributionSpec::FixedOrderedList { points: p1 },
            DistributionSpec::FixedOrderedList { points: p2 },
        ],
        TargetFunction::HomogeneousLinear { w: vec![0.0, 1.0, 0.0] },
        0,
    )
}

#[derive(Clone, Debug)]
pub struct AppendixCRun {
    pub gamma: f64,
    pub rounds: u64,
    pub trace: Vec<TraceRow>,
    pub result: ProtocolResult,
    pub w: Vec<f64>,
}

/// Runs the two-player instance until a player receives a hypothesis it
/// leaves unchanged. `rounds` counts hypotheses passed between players.
pub fn appendix_c_lower_bound(gamma: f64, max_rounds: u64) -> Result<AppendixCRun> {
    if !(gamma > 0.0 && gamma <= 0.2) {
        return Err(Error::Config(format!("gamma must be in (0, 0.2], got {gamma}")));
    }
    let problem = appendix_c_problem(gamma)?;
    let samples = (0..2)
        .map(|i| problem.draw(i, 100, "sample", 0))
        .collect::<Result<Vec<_>>>()?;
    let cfg = RoundRobinConfig {
        mode: PassMode::UntilConsistent,
        stop: StopRule::QuietPlayer,
        update_cap: (30.0 / (gamma * gamma)).ceil() as u64,
        max_meta_rounds: max_rounds.div_ceil(2).max(1),
        precision_bits: margin_precision_bits(gamma),
    };
    let mut out = round_robin_on(&samples, 3, &cfg, &problem.seeds())?;
    problem.evaluate(&mut out.result)?;
    Ok(AppendixCRun {
        gamma,
        rounds: out.result.ledger.rounds,
        trace: out.trace,
        w: out.state.w,
        result: out.result,
    })
}

/// A `k`-player problem whose points are pairwise `|cos| = γ²` apart and
/// all at margin exactly `γ` from `e_0`. Each point gets its own orthogonal
/// direction, so the dimension is `1 + k·per_player`.
pub fn well_spread_problem(k: usize, per_player: usize, gamma: f64, seed: u64) -> Result<Problem> {
    let n = k * per_player;
    let d = n + 1;
    let mut rng = Seeds::new(seed).stream("well_spread", &[]);
    let mut dirs: Vec<usize> = (1..d).collect();
    dirs.shuffle(&mut rng);
    let side = (1.0 - gamma * gamma).sqrt();
    let mut players = Vec::with_capacity(k);
    for i in 0..k {
        let points = (0..per_player)
            .map(|t| {
                let mut x = vec![0.0; d];
                let label = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                x[0] = label * gamma;
                x[dirs[i * per_player + t]] = if rng.random_bool(0.5) { side } else { -side };
                x
            })
            .collect();
        players.push(DistributionSpec::FixedOrderedList { points });
    }
    let mut w = vec![0.0; d];
    w[0] = 1.0;
    Problem::new(players, TargetFunction::HomogeneousLinear { w }, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(x: &[f64], pos: bool) -> LabeledExample {
        LabeledExample::new(x.to_vec(), Label::from_bool(pos))
    }

    #[test]
    fn first_update_from_zero() {
        let g = 0.1;
        let s = Sample::new(vec![ex(&[1.0, g, g], true)]);
        let mut st = MarginPerceptronState::new(3);
        let mut cur = 0;
        let mut rng = Seeds::new(0).stream("t", &[]);
        let log = margin_perceptron_pass(&mut st, &s, PassMode::UntilConsistent, &mut cur, 100, &mut rng).unwrap();
        assert_eq!(log[0].w_after, vec![1.0, g, g]);
    }

    #[test]
    fn satisfied_state_is_a_fixed_point() {
        let s = Sample::new(vec![ex(&[1.0, 0.0], true), ex(&[-1.0, 0.0], false)]);
        let mut st = MarginPerceptronState::new(2);
        st.w = vec![2.0, 0.0];
        let mut cur = 0;
        let mut rng = Seeds::new(0).stream("t", &[]);
        for mode in [PassMode::UntilConsistent, PassMode::UntilEpsFraction { epsilon: 0.0 }] {
            let log = margin_perceptron_pass(&mut st, &s, mode, &mut cur, 100, &mut rng).unwrap();
            assert!(log.is_empty());
        }
        assert_eq!((st.w.clone(), st.update_count), (vec![2.0, 0.0], 0));
    }

    #[test]
    fn cap_signals_non_separable() {
        let s = Sample::new(vec![ex(&[1.0], true), ex(&[1.0], false)]);
        let mut st = MarginPerceptronState::new(1);
        let mut cur = 0;
        let mut rng = Seeds::new(0).stream("t", &[]);
        let err = margin_perceptron_pass(&mut st, &s, PassMode::UntilConsistent, &mut cur, 50, &mut rng).unwrap_err();
        assert_eq!(err, Error::NonSeparable { cap: 50 });
    }

    #[test]
    fn averaging_single_point() {
        let s = Sample::new(vec![ex(&[1.0, 0.0], true); 4]);
        assert_eq!(label_weighted_mean(&s, 2), vec![1.0, 0.0]);
    }

    #[test]
    fn well_spread_certificate() {
        let p = well_spread_problem(3, 10, 0.2, 5).unwrap();
        let samples: Vec<Sample> = (0..3).map(|i| p.draw(i, 10, "sample", 0).unwrap()).collect();
        assert!((max_abs_cosine(&samples, true) - 0.04).abs() < 1e-12);
        let TargetFunction::HomogeneousLinear { w } = &p.target else { unreachable!() };
        assert!((min_margin(&samples, w) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn precision_for_margin() {
        assert_eq!(margin_precision_bits(0.1), 4);
        assert_eq!(margin_precision_bits(0.2), 3);
    }
}
