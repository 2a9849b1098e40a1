//! Agnostic protocols: robust generalized halving over a finite class, the
//! upward search over the unknown optimal error, and the one-round interval
//! summary on `[0, 1]`.

use crate::channel::{Channel, Encoding, Message, Recipient, DEFAULT_PRECISION_BITS};
use crate::error::{Error, Result};
use crate::model::{Hypothesis, LabeledExample, PartyId, Problem, ProtocolResult, Sample};
use crate::rng::StreamRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Thresholds on coordinate 0 at `i/(points−1)` for `i = 0..points`, in both
/// orientations: `2·points` hypotheses.
pub fn threshold_grid(points: usize) -> Vec<Hypothesis> {
    let last = (points - 1).max(1) as f64;
    let mut v = Vec::with_capacity(2 * points);
    for positive_above in [true, false] {
        for i in 0..points {
            v.push(Hypothesis::Threshold {
                coord: 0,
                cut: i as f64 / last,
                positive_above,
            });
        }
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalvingParams {
    pub epsilon: f64,
    /// Guess for the best achievable error in the class.
    pub opt_guess: f64,
    /// Set size is `ceil(c_s/(opt_guess+ε))`.
    pub c_s: f64,
    /// Set count is `max(n_min, ceil(c_n·log2 log2 |H|))`.
    pub c_n: f64,
    pub n_min: usize,
    /// Loop cap is `c_l·log2 |H|`.
    pub c_l: f64,
    /// Players derive the set sizes from a common seed instead of receiving them.
    pub shared_randomness: bool,
}

impl Default for HalvingParams {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            opt_guess: 0.0,
            c_s: 0.2,
            c_n: 96.0,
            n_min: 9,
            c_l: 10.0,
            shared_randomness: false,
        }
    }
}

impl HalvingParams {
    pub fn set_size(&self) -> usize {
        ((self.c_s / (self.opt_guess + self.epsilon)).ceil() as usize).max(1)
    }

    pub fn set_count(&self, class_size: usize) -> usize {
        let ll = (class_size.max(4) as f64).log2().log2();
        self.n_min.max((self.c_n * ll).ceil() as usize)
    }

    pub fn loop_cap(&self, class_size: usize) -> u64 {
        (self.c_l * (class_size.max(2) as f64).log2()).floor() as u64
    }
}

/// Majority vote of the surviving members; ties go to +1.
fn majority(class: &[Hypothesis], alive: &[bool], x: &[f64]) -> crate::model::Label {
    let (mut pos, mut tot) = (0usize, 0usize);
    for (h, _) in class.iter().zip(alive).filter(|(_, a)| **a) {
        tot += 1;
        pos += h.predict(x).is_pos() as usize;
    }
    crate::model::Label::from_bool(2 * pos >= tot)
}

fn survivors(class: &[Hypothesis], alive: &[bool]) -> Vec<Hypothesis> {
    class
        .iter()
        .zip(alive)
        .filter(|(_, a)| **a)
        .map(|(h, _)| h.clone())
        .collect()
}

/// Uniform player choice for each of `s` draws, tallied per player.
fn split_draws(k: usize, s: usize, rng: &mut StreamRng) -> Vec<usize> {
    let mut n = vec![0usize; k];
    for _ in 0..s {
        n[rng.random_range(0..k)] += 1;
    }
    n
}

fn count_width(max: usize) -> u32 {
    (usize::BITS - max.leading_zeros()).max(1)
}

/// Per-iteration record of a halving run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalvingIteration {
    pub sets_with_mistakes: usize,
    pub survivors_before: usize,
    pub survivors_after: usize,
    /// Whether the member with the lowest error on the iteration's sets survived.
    pub best_survived: bool,
}

#[derive(Clone, Debug)]
pub struct HalvingOutcome {
    pub result: ProtocolResult,
    pub iterations: Vec<HalvingIteration>,
    pub survivors: usize,
}

/// Robust generalized halving over `class`. Labels come from the problem's
/// (possibly noisy) sampler; `attempt` separates the random streams of
/// repeated runs.
pub fn run_robust_halving(
    problem: &Problem,
    class: &[Hypothesis],
    params: &HalvingParams,
    attempt: u64,
) -> Result<HalvingOutcome> {
    if class.is_empty() {
        return Err(Error::Config("hypothesis class is empty".into()));
    }
    if class.len() > 1_000_000 {
        return Err(Error::Config("hypothesis class exceeds 10^6 members".into()));
    }
    let k = problem.k();
    let s = params.set_size();
    let big_n = params.set_count(class.len());
    let cap = params.loop_cap(class.len());
    let seeds = problem.seeds().child("halving", &[attempt]);
    let mut ch = Channel::new(k, false, Encoding::real(problem.dim(), DEFAULT_PRECISION_BITS));
    let mut alive = vec![true; class.len()];
    let mut iterations = Vec::new();
    let width = count_width(s);
    loop {
        let it = iterations.len() as u64;
        if it >= cap {
            return Err(Error::NonConvergence { cap });
        }
        ch.advance_meta_round();
        // step 1: split each set's draws among players
        let mut rng = seeds.stream("split", &[it]);
        let counts: Vec<Vec<usize>> = (0..big_n).map(|_| split_draws(k, s, &mut rng)).collect();
        if !params.shared_randomness && k > 1 {
            for i in 1..k {
                for set in &counts {
                    ch.send(PartyId::Player(0), Recipient::To(PartyId::Player(i)), Message::count(set[i] as u64, width))?;
                }
            }
            ch.advance_round();
        }
        // players draw their portions locally
        let portions: Vec<Vec<Sample>> = (0..k)
            .map(|i| {
                (0..big_n)
                    .map(|j| {
                        let mut r = seeds.stream("draw", &[it, i as u64, j as u64]);
                        crate::sampling::draw_noisy_sample(&problem.players[i], &problem.target, counts[j][i], problem.noise, &mut r)
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        // step 2: one mistake per set, lowest player first
        let mut found: Vec<LabeledExample> = Vec::new();
        for j in 0..big_n {
            for (i, sets) in portions.iter().enumerate() {
                if let Some(e) = sets[j].iter().find(|e| majority(class, &alive, &e.features) != e.label) {
                    ch.broadcast(PartyId::Player(i), Message::Example(e.clone()))?;
                    found.push(e.clone());
                    break;
                }
            }
        }
        ch.advance_round();
        let before = alive.iter().filter(|a| **a).count();
        let best = best_on(class, &alive, &portions);
        // step 3
        if 3 * found.len() <= big_n {
            iterations.push(HalvingIteration {
                sets_with_mistakes: found.len(),
                survivors_before: before,
                survivors_after: before,
                best_survived: true,
            });
            break;
        }
        for (h, a) in class.iter().zip(alive.iter_mut()) {
            if *a {
                let errs = found.iter().filter(|e| h.predict(&e.features) != e.label).count();
                if 9 * errs > big_n {
                    *a = false;
                }
            }
        }
        let after = alive.iter().filter(|a| **a).count();
        iterations.push(HalvingIteration {
            sets_with_mistakes: found.len(),
            survivors_before: before,
            survivors_after: after,
            best_survived: best.is_some_and(|b| alive[b]),
        });
        if after == 0 {
            return Err(Error::HalvingCollapse);
        }
    }
    let h = Hypothesis::MajorityOfSet {
        members: survivors(class, &alive),
    };
    let hyps: BTreeMap<PartyId, Hypothesis> = (0..k).map(|i| (PartyId::Player(i), h.clone())).collect();
    let mut result = ProtocolResult::from_channel(hyps, ch);
    result.note("iterations", iterations.len() as f64);
    result.note("set_size", s as f64);
    result.note("set_count", big_n as f64);
    let survivors = alive.iter().filter(|a| **a).count();
    result.note("survivors", survivors as f64);
    Ok(HalvingOutcome {
        result,
        iterations,
        survivors,
    })
}

/// Index of the alive member with the fewest mistakes on all drawn sets.
fn best_on(class: &[Hypothesis], alive: &[bool], portions: &[Vec<Sample>]) -> Option<usize> {
    (0..class.len()).filter(|&h| alive[h]).min_by_key(|&h| {
        portions
            .iter()
            .flatten()
            .flat_map(|s| s.iter())
            .filter(|e| class[h].predict(&e.features) != e.label)
            .count()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptSearchParams {
    pub halving: HalvingParams,
    /// Validation sample size is `ceil(c_v/ε²)`.
    pub c_v: f64,
    /// Accept when validation error is at most `c_accept·(guess+ε)`.
    pub c_accept: f64,
}

impl Default for OptSearchParams {
    fn default() -> Self {
        Self {
            halving: HalvingParams::default(),
            c_v: 1.0,
            c_accept: 8.0,
        }
    }
}

/// Result of the search: the accepted run plus what it cost to find it.
#[derive(Clone, Debug)]
pub struct OptSearchOutcome {
    pub result: ProtocolResult,
    /// Index `j` of the accepted guess `ε·2^j`.
    pub accepted: usize,
    pub guesses: usize,
    pub validation_error: f64,
}

/// Tries `opt_guess = ε·2^j` for `j = 0, 1, …` while the guess is at most
/// 1/2, accepting the first run that neither collapses nor fails
/// validation. The returned ledger is the sum over all attempts.
pub fn opt_search(problem: &Problem, class: &[Hypothesis], params: &OptSearchParams) -> Result<OptSearchOutcome> {
    let eps = params.halving.epsilon;
    let k = problem.k();
    let m_val = (params.c_v / (eps * eps)).ceil() as usize;
    let mut total = crate::channel::CostLedger::new();
    let mut j = 0usize;
    loop {
        let guess = eps * 2f64.powi(j as i32);
        if guess > 0.5 {
            return Err(Error::SearchFailure);
        }
        let hp = HalvingParams {
            opt_guess: guess,
            ..params.halving.clone()
        };
        match run_robust_halving(problem, class, &hp, j as u64) {
            Err(Error::HalvingCollapse) | Err(Error::NonConvergence { .. }) => {}
            Err(e) => return Err(e),
            Ok(out) => {
                let mut result = out.result;
                total.absorb(&result.ledger);
                let (err, ledger) = validate(problem, result.output(), m_val, j as u64, k)?;
                total.absorb(&ledger);
                if err <= params.c_accept * (guess + eps) {
                    result.ledger = total;
                    result.note("accepted_guess", guess);
                    result.note("validation_error", err);
                    result.note("guesses", (j + 1) as f64);
                    return Ok(OptSearchOutcome {
                        result,
                        accepted: j,
                        guesses: j + 1,
                        validation_error: err,
                    });
                }
            }
        }
        j += 1;
    }
}

/// Validation on a fresh `m`-point sample split among players as in step 1:
/// player 1 sends the counts, players return their mistake counts.
fn validate(problem: &Problem, h: &Hypothesis, m: usize, attempt: u64, k: usize) -> Result<(f64, crate::channel::CostLedger)> {
    let seeds = problem.seeds().child("validate", &[attempt]);
    let mut ch = Channel::new(k, false, Encoding::real(problem.dim(), DEFAULT_PRECISION_BITS));
    ch.advance_round();
    let counts = split_draws(k, m, &mut seeds.stream("split", &[]));
    let width = count_width(m);
    let mut wrong = 0usize;
    for (i, &c) in counts.iter().enumerate() {
        if i > 0 {
            ch.send(PartyId::Player(0), Recipient::To(PartyId::Player(i)), Message::count(c as u64, width))?;
        }
        let mut r = seeds.stream("draw", &[i as u64]);
        let s = crate::sampling::draw_noisy_sample(&problem.players[i], &problem.target, c, problem.noise, &mut r)?;
        let miss = s.iter().filter(|e| h.predict(&e.features) != e.label).count();
        if i > 0 {
            ch.send(PartyId::Player(i), Recipient::To(PartyId::Player(0)), Message::count(miss as u64, width))?;
        }
        wrong += miss;
    }
    Ok((wrong as f64 / m.max(1) as f64, ch.into_parts().0))
}

/// One merged segment `[lo, hi]` with its estimated labeled mass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub pos: f64,
    pub neg: f64,
}

/// Labels segments to minimize mislabeled mass using at most `d` maximal
/// positive runs. Returns the cost and the chosen runs as index ranges.
pub fn interval_dp(segments: &[Segment], d: usize) -> (f64, Vec<(usize, usize)>) {
    let s = segments.len();
    // cost[r][in_run]: best cost so far having opened r runs, currently inside one or not
    let inf = f64::INFINITY;
    let mut cost = vec![[inf; 2]; d + 1];
    cost[0][0] = 0.0;
    // back[t][r][state] = previous state
    let mut back = vec![vec![[0u8; 2]; d + 1]; s];
    for (t, seg) in segments.iter().enumerate() {
        let mut next = vec![[inf; 2]; d + 1];
        for r in 0..=d {
            // label −: come from either state with r runs
            let (c0, from0) = if cost[r][0] <= cost[r][1] { (cost[r][0], 0) } else { (cost[r][1], 1) };
            if c0 + seg.pos < next[r][0] {
                next[r][0] = c0 + seg.pos;
                back[t][r][0] = from0;
            }
            // label +: continue a run, or open run r from outside
            let cont = cost[r][1];
            let open = if r > 0 { cost[r - 1][0] } else { inf };
            let (c1, from1) = if cont <= open { (cont, 1) } else { (open, 0) };
            if c1 + seg.neg < next[r][1] {
                next[r][1] = c1 + seg.neg;
                back[t][r][1] = from1;
            }
        }
        cost = next;
    }
    let mut best = (inf, 0usize, 0usize);
    for (r, c) in cost.iter().enumerate() {
        for st in 0..2 {
            if c[st] < best.0 {
                best = (c[st], r, st);
            }
        }
    }
    if s == 0 {
        return (0.0, Vec::new());
    }
    let (total, mut r, mut st) = best;
    let mut labels = vec![false; s];
    for t in (0..s).rev() {
        labels[t] = st == 1;
        let prev = back[t][r][st] as usize;
        if st == 1 && prev == 0 {
            r -= 1;
        }
        st = prev;
    }
    let mut runs = Vec::new();
    let mut t = 0;
    while t < s {
        if labels[t] {
            let a = t;
            while t + 1 < s && labels[t + 1] {
                t += 1;
            }
            runs.push((a, t));
        }
        t += 1;
    }
    (total, runs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalParams {
    /// Maximum number of intervals.
    pub d: usize,
    pub epsilon: f64,
    /// Local sample size per player.
    pub m: usize,
    pub precision_bits: u32,
}

impl Default for IntervalParams {
    fn default() -> Self {
        Self {
            d: 3,
            epsilon: 0.05,
            m: 2000,
            precision_bits: DEFAULT_PRECISION_BITS,
        }
    }
}

impl IntervalParams {
    pub fn borders(&self) -> usize {
        (self.d as f64 / self.epsilon).ceil() as usize
    }

    pub fn fraction_bits(&self) -> u32 {
        ((self.d as f64 / self.epsilon).log2().ceil() as u32).max(1)
    }
}

/// One player's message: equal-mass border points and quantized positive
/// fractions of the segments they close.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerSummary {
    pub borders: Vec<f64>,
    pub levels: Vec<u64>,
}

/// Nearest of the `2^bits` evenly spaced levels in `[0, 1]`; ties go down.
pub fn quantize_fraction(f: f64, bits: u32) -> u64 {
    let top = ((1u64 << bits) - 1) as f64;
    let x = f.clamp(0.0, 1.0) * top;
    let lo = x.floor();
    let v = if x - lo > 0.5 { lo + 1.0 } else { lo };
    v as u64
}

/// Sorts the (weighted) sample and cuts it into `b` equal-mass segments,
/// the first starting at 0.
pub fn summarize(sample: &Sample, b: usize, bits: u32) -> PlayerSummary {
    if sample.is_empty() || b == 0 {
        return PlayerSummary {
            borders: Vec::new(),
            levels: Vec::new(),
        };
    }
    let mut idx: Vec<usize> = (0..sample.len()).collect();
    idx.sort_by(|&a, &c| sample.examples[a].features[0].total_cmp(&sample.examples[c].features[0]));
    let total: f64 = sample.weights.iter().sum();
    let mut borders = Vec::with_capacity(b);
    let mut levels = Vec::with_capacity(b);
    let (mut acc, mut seg_pos, mut seg_all) = (0.0, 0.0, 0.0);
    let mut r = 1;
    for (pos, &i) in idx.iter().enumerate() {
        let w = sample.weights[i];
        acc += w;
        seg_all += w;
        if sample.examples[i].label.is_pos() {
            seg_pos += w;
        }
        let last = pos + 1 == idx.len();
        while r <= b && (acc >= total * r as f64 / b as f64 - 1e-12 || last) {
            borders.push(sample.examples[i].features[0]);
            let f = if seg_all > 0.0 { seg_pos / seg_all } else { 0.0 };
            levels.push(quantize_fraction(f, bits));
            seg_pos = 0.0;
            seg_all = 0.0;
            r += 1;
        }
    }
    PlayerSummary { borders, levels }
}

/// Merges the summaries into segments carrying estimated mixture mass. Each
/// player's segment mass is split among merged pieces by length.
pub fn merge_summaries(summaries: &[PlayerSummary], bits: u32) -> Vec<Segment> {
    let active: Vec<&PlayerSummary> = summaries.iter().filter(|s| !s.borders.is_empty()).collect();
    let mut cuts: Vec<f64> = vec![0.0];
    for s in &active {
        cuts.extend(&s.borders);
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut segs: Vec<Segment> = cuts
        .windows(2)
        .map(|w| Segment {
            lo: w[0],
            hi: w[1],
            pos: 0.0,
            neg: 0.0,
        })
        .collect();
    if segs.is_empty() {
        return segs;
    }
    let top = ((1u64 << bits) - 1) as f64;
    let k = active.len() as f64;
    for s in &active {
        let mass = 1.0 / (k * s.borders.len() as f64);
        let mut lo = 0.0;
        for (&hi, &lev) in s.borders.iter().zip(&s.levels) {
            let f = lev as f64 / top;
            let first = segs.partition_point(|g| g.hi <= lo);
            let len = hi - lo;
            if len <= 0.0 {
                // a point mass: credit the merged piece ending at `hi`
                let at = segs.partition_point(|g| g.hi < hi).min(segs.len() - 1);
                segs[at].pos += mass * f;
                segs[at].neg += mass * (1.0 - f);
            } else {
                for g in segs[first..].iter_mut().take_while(|g| g.lo < hi) {
                    let share = (g.hi.min(hi) - g.lo.max(lo)).max(0.0) / len;
                    g.pos += mass * f * share;
                    g.neg += mass * (1.0 - f) * share;
                }
            }
            lo = hi;
        }
    }
    segs
}

/// Each player sends a quantile summary of its sample; the center merges them
/// and picks the best union of at most `d` intervals.
pub fn run_interval_summary_on(samples: &[Sample], params: &IntervalParams) -> Result<(ProtocolResult, Vec<Segment>)> {
    let k = samples.len();
    let b = params.borders();
    let bits = params.fraction_bits();
    let mut ch = Channel::new(k, true, Encoding::real(1, params.precision_bits));
    ch.advance_round();
    let mut summaries = Vec::with_capacity(k);
    for (i, s) in samples.iter().enumerate() {
        let sum = summarize(s, b, bits);
        for (&border, &lev) in sum.borders.iter().zip(&sum.levels) {
            ch.to_center(
                PartyId::Player(i),
                Message::Bits {
                    payload: border.to_le_bytes().to_vec(),
                    len: params.precision_bits as u64,
                },
            )?;
            ch.to_center(PartyId::Player(i), Message::count(lev, bits))?;
        }
        summaries.push(sum);
    }
    let segs = merge_summaries(&summaries, bits);
    let (cost, runs) = interval_dp(&segs, params.d);
    let intervals = runs.iter().map(|&(a, z)| (segs[a].lo, segs[z].hi)).collect();
    let h = Hypothesis::IntervalUnion { intervals };
    let mut result = ProtocolResult::from_channel(BTreeMap::from([(PartyId::Center, h)]), ch);
    result.note("estimated_error", cost);
    result.note("borders", b as f64);
    result.note("fraction_bits", bits as f64);
    result.note("segments", segs.len() as f64);
    Ok((result, segs))
}

pub fn run_interval_summary(problem: &Problem, params: &IntervalParams) -> Result<ProtocolResult> {
    if problem.dim() != 1 {
        return Err(Error::Config("the interval protocol works on [0, 1]".into()));
    }
    let samples = (0..problem.k())
        .map(|i| problem.draw(i, params.m, "sample", 0))
        .collect::<Result<Vec<_>>>()?;
    Ok(run_interval_summary_on(&samples, params)?.0)
}
