//! Batch experiments: TOML configs, per-seed runs, and the files they write.
//!
//! A config names one protocol and the data it runs on:
//!
//! ```toml
//! protocol = "closed_conjunction"
//! seeds = "0..100"          # or 7, or [1, 2, 3]
//! k = 5
//! player = { kind = "uniform_boolean", n = 30 }
//! planted = { kind = "conjunction", n = 30, literals = 4 }
//!
//! [params]
//! epsilon = 0.05
//! ```
//!
//! `[params]` overrides the protocol's parameter defaults field by field;
//! unknown keys are rejected with the list of valid ones. Players come from
//! `players = [...]`, or from `player` repeated `k` times. The target is
//! either fixed (`target`) or drawn per seed (`planted`).

use crate::agnostic::{self, threshold_grid, HalvingParams, IntervalParams, OptSearchParams};
use crate::baseline::{self, BatchLearner, ConjunctionElimination, EqParams, Halving, ShippingParams};
use crate::bits::BitVec;
use crate::boosting::{run_distributed_boosting, BoostParams, StumpLearner};
use crate::closed::{run_intersection_closed, ClosedClass, ClosedParams};
use crate::declist::{run_decision_list, DecisionList, DecisionListParams, RuleTriplet};
use crate::error::{Error, Result};
use crate::linear::{self, AveragingParams, RoundRobinParams, TraceRow};
use crate::model::{Problem, ProtocolResult, TargetFunction};
use crate::parity::{run_parity_two_player, ParityParams};
use crate::privacy::{self, PrivateConjunctionParams, PrivateDecisionListParams};
use crate::rng::Seeds;
use crate::sampling::DistributionSpec;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Every protocol reachable from a config, with a one-line description.
pub const PROTOCOLS: &[(&str, &str)] = &[
    ("sample_shipping", "players ship samples; the center runs a batch learner"),
    ("eq_mistake_bound", "online learner at the center fed by broadcast counterexamples"),
    ("closed_conjunction", "one-round closure protocol for conjunctions"),
    ("closed_box", "one-round closure protocol for axis-parallel boxes"),
    ("parity", "two-player parity exchange with basis prediction"),
    ("decision_list", "rule-triplet protocol for decision lists"),
    ("averaging", "label-weighted mean for symmetric distributions"),
    ("perceptron", "round-robin margin perceptron"),
    ("appendix_c", "two-player perceptron lower-bound instance"),
    ("boosting", "distributed AdaBoost with quantized weight sums"),
    ("robust_halving", "robust halving over a threshold grid"),
    ("opt_search", "robust halving with a doubling search over opt"),
    ("interval_summary", "one-round quantile summaries for unions of intervals"),
    ("private_conjunction", "conjunctions learned from private positive-only queries"),
    ("private_decision_list", "rule-triplet protocol with private consistency checks"),
];

pub const OUT_ENV: &str = "DISTPAC_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    One(u64),
    List(Vec<u64>),
    Range(String),
}

impl SeedSpec {
    pub fn expand(&self) -> Result<Vec<u64>> {
        match self {
            SeedSpec::One(s) => Ok(vec![*s]),
            SeedSpec::List(v) => Ok(v.clone()),
            SeedSpec::Range(r) => parse_seed_range(r),
        }
    }
}

/// `a..b` is half open, `a..=b` closed.
pub fn parse_seed_range(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seed range `{s}` is not of the form a..b"));
    let (a, b, closed) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else {
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        (a, b, false)
    };
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    let end = if closed { b.checked_add(1).ok_or_else(bad)? } else { b };
    if end < a {
        return Err(bad());
    }
    Ok((a..end).collect())
}

/// Per-seed random targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Planted {
    Conjunction { n: usize, literals: usize },
    DecisionList { n: usize, rules: usize },
    Parity { n: usize },
    HomogeneousLinear { d: usize },
    Threshold { grid: usize },
    IntervalUnion { count: usize },
    /// Generates players and target together.
    WellSpread { per_player: usize, gamma: f64 },
}

impl Planted {
    pub fn draw(&self, seed: u64) -> Result<TargetFunction> {
        let mut rng = Seeds::new(seed).stream("planted", &[]);
        Ok(match *self {
            Planted::Conjunction { n, literals } => {
                if literals > n {
                    return Err(Error::Config(format!("{literals} literals over {n} variables")));
                }
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                let mut mask = BitVec::zeros(n);
                for &j in &idx[..literals] {
                    mask.set(j, true);
                }
                TargetFunction::Conjunction { mask }
            }
            Planted::DecisionList { n, rules } => {
                let mut idx: Vec<usize> = (1..=n).collect();
                idx.shuffle(&mut rng);
                let mut list: Vec<RuleTriplet> = idx
                    .iter()
                    .take(rules.min(n))
                    .map(|&j| RuleTriplet::new(j, rng.random_bool(0.5), rng.random_bool(0.5)))
                    .collect();
                list.push(RuleTriplet::else_rule(rng.random_bool(0.5)));
                TargetFunction::DecisionList(DecisionList::new(n, list)?)
            }
            Planted::Parity { n } => {
                let mut coeffs = BitVec::zeros(n);
                while coeffs.is_zero() {
                    for j in 0..n {
                        coeffs.set(j, rng.random_bool(0.5));
                    }
                }
                TargetFunction::Parity { coeffs }
            }
            Planted::HomogeneousLinear { d } => {
                let w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                TargetFunction::HomogeneousLinear {
                    w: w.iter().map(|v| v / norm).collect(),
                }
            }
            Planted::Threshold { grid } => {
                let last = grid.max(2) - 1;
                let i = rng.random_range(last / 10..=last - last / 10);
                TargetFunction::Threshold {
                    coord: 0,
                    cut: i as f64 / last as f64,
                    positive_above: rng.random_bool(0.5),
                }
            }
            Planted::IntervalUnion { count } => {
                let mut cuts: Vec<f64> = (0..2 * count).map(|_| rng.random::<f64>()).collect();
                cuts.sort_by(f64::total_cmp);
                TargetFunction::IntervalUnion {
                    intervals: cuts.chunks(2).map(|c| (c[0], c[1])).collect(),
                }
            }
            Planted::WellSpread { .. } => {
                return Err(Error::Config("well_spread builds the whole problem".into()));
            }
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnError {
    #[default]
    Fail,
    /// Keep going and list failed seeds in the summary.
    Record,
}

fn default_seeds() -> SeedSpec {
    SeedSpec::One(0)
}

fn default_eval() -> usize {
    20_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: String,
    #[serde(default = "default_seeds")]
    pub seeds: SeedSpec,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Record wall time per run; off keeps results.csv reproducible.
    #[serde(default)]
    pub wall_clock: bool,
    #[serde(default = "default_eval")]
    pub eval_samples: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub players: Vec<DistributionSpec>,
    #[serde(default)]
    pub player: Option<DistributionSpec>,
    #[serde(default)]
    pub target: Option<TargetFunction>,
    #[serde(default)]
    pub planted: Option<Planted>,
    #[serde(default)]
    pub on_error: OnError,
    #[serde(default)]
    pub params: toml::Table,
    #[serde(default)]
    pub privacy: toml::Table,
}

fn check_unit(name: &str, v: &toml::Value) -> Result<()> {
    let sym = match name {
        "epsilon" => "ε",
        "delta" => "δ",
        "beta" => "β",
        _ => return Ok(()),
    };
    let x = v
        .as_float()
        .or_else(|| v.as_integer().map(|i| i as f64))
        .ok_or_else(|| Error::Config(format!("{name} must be a number")))?;
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Config(format!("{sym} must be in (0,1), got {x}")));
    }
    Ok(())
}

fn check_table(t: &toml::Table) -> Result<()> {
    for (k, v) in t {
        check_unit(k, v)?;
        if let Some(inner) = v.as_table() {
            check_table(inner)?;
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(p: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
            e => e,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !PROTOCOLS.iter().any(|(n, _)| *n == self.protocol) {
            let names: Vec<&str> = PROTOCOLS.iter().map(|(n, _)| *n).collect();
            return Err(Error::Config(format!(
                "unknown protocol `{}`; valid names: {}",
                self.protocol,
                names.join(", ")
            )));
        }
        check_table(&self.params)?;
        check_table(&self.privacy)?;
        if !(0.0..0.5).contains(&self.noise) {
            return Err(Error::Config(format!("noise must be in [0, 1/2), got {}", self.noise)));
        }
        if self.target.is_some() && self.planted.is_some() {
            return Err(Error::Config("give either `target` or `planted`, not both".into()));
        }
        if !self.players.is_empty() && self.player.is_some() {
            return Err(Error::Config("give either `players` or `player`, not both".into()));
        }
        self.seeds.expand()?;
        Ok(())
    }

    fn player_specs(&self) -> Result<Vec<DistributionSpec>> {
        if !self.players.is_empty() {
            if let Some(k) = self.k.filter(|&k| k != self.players.len()) {
                return Err(Error::Config(format!("k = {k} but {} players are listed", self.players.len())));
            }
            return Ok(self.players.clone());
        }
        match (&self.player, self.k) {
            (Some(p), Some(k)) => Ok(vec![p.clone(); k]),
            (Some(p), None) => Ok(vec![p.clone()]),
            (None, _) => Err(Error::Config("no players given".into())),
        }
    }

    /// The problem instance for one seed.
    pub fn problem(&self, seed: u64) -> Result<Problem> {
        if let Some(Planted::WellSpread { per_player, gamma }) = self.planted {
            let k = self.k.ok_or_else(|| Error::Config("well_spread needs k".into()))?;
            return Ok(linear::well_spread_problem(k, per_player, gamma, seed)?.with_eval_samples(self.eval_samples));
        }
        let target = match (&self.target, &self.planted) {
            (Some(t), _) => t.clone(),
            (None, Some(p)) => p.draw(seed)?,
            (None, None) => return Err(Error::Config("no target given".into())),
        };
        Ok(Problem::new(self.player_specs()?, target, seed)?
            .with_noise(self.noise)?
            .with_eval_samples(self.eval_samples))
    }

    fn params<T: Serialize + DeserializeOwned>(&self, base: T, extra: &[&str]) -> Result<T> {
        overlay(base, &self.params, extra)
    }

    fn private_params<T: Serialize + DeserializeOwned>(&self, base: T) -> Result<T> {
        let mut merged = self.params.clone();
        for (k, v) in &self.privacy {
            merged.insert(k.clone(), v.clone());
        }
        overlay(base, &merged, &[])
    }

    fn extra<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        self.params
            .get(key)
            .map(|v| v.clone().try_into().map_err(|e: toml::de::Error| Error::Config(format!("params.{key}: {e}"))))
            .transpose()
    }
}

fn merge(dst: &mut serde_json::Value, src: serde_json::Value) {
    use serde_json::Value;
    let same_variant = |d: &serde_json::Map<String, Value>, s: &serde_json::Map<String, Value>| {
        ["kind", "mode"].iter().all(|t| s.get(*t).is_none() || s.get(*t) == d.get(*t))
    };
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) if same_variant(d, &s) => {
            for (k, v) in s {
                match d.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k, v);
                    }
                }
            }
        }
        (d, s) => *d = s,
    }
}

/// Applies the keys of `table` on top of `base`, rejecting keys the
/// parameter type does not have (other than `extra`).
pub fn overlay<T: Serialize + DeserializeOwned>(base: T, table: &toml::Table, extra: &[&str]) -> Result<T> {
    let mut v = serde_json::to_value(&base).map_err(|e| Error::Config(e.to_string()))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Config("parameters are not a table".into()))?;
    let mut valid: Vec<String> = obj.keys().cloned().collect();
    valid.extend(extra.iter().map(|s| s.to_string()));
    for (k, val) in table {
        if extra.contains(&k.as_str()) {
            continue;
        }
        let Some(slot) = obj.get_mut(k) else {
            return Err(Error::Config(format!(
                "unknown parameter `{k}`; valid: {}",
                valid.join(", ")
            )));
        };
        let jv = serde_json::to_value(val).map_err(|e| Error::Config(e.to_string()))?;
        merge(slot, jv);
    }
    serde_json::from_value(v).map_err(|e| Error::Config(format!("invalid parameters: {e}")))
}

/// One line of results.csv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub protocol: String,
    pub seed: u64,
    pub bits: u64,
    pub examples: u64,
    pub hypotheses: u64,
    pub rounds: u64,
    pub meta_rounds: u64,
    pub error_mixture: f64,
    pub error_per_player: Vec<f64>,
    pub wall_ms: u64,
}

impl RunRow {
    fn from_result(protocol: &str, seed: u64, r: &ProtocolResult, k: usize) -> Self {
        Self {
            protocol: protocol.to_string(),
            seed,
            bits: r.ledger.bits,
            examples: r.ledger.examples,
            hypotheses: r.ledger.hypotheses,
            rounds: r.ledger.rounds,
            meta_rounds: r.ledger.meta_rounds,
            error_mixture: r.mixture_error(),
            error_per_player: (0..k).map(|i| r.player_error(i)).collect(),
            wall_ms: 0,
        }
    }
}

/// Everything one seed produced.
#[derive(Clone, Debug, Default)]
pub struct SeedOutput {
    pub rows: Vec<RunRow>,
    /// Named side tables: file name → rows (first row is the header).
    pub tables: Vec<(String, Vec<Vec<String>>)>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

fn trace_table(trace: &[TraceRow]) -> Vec<Vec<String>> {
    let d = trace.first().map_or(0, |r| r.example.len());
    let mut header = vec!["round".to_string(), "player".to_string(), "label".to_string()];
    header.extend((0..d).map(|j| format!("x{j}")));
    header.extend((0..d).map(|j| format!("w{j}")));
    let mut rows = vec![header];
    for r in trace {
        let mut row = vec![r.round.to_string(), (r.player + 1).to_string(), (r.label.sign() as i8).to_string()];
        row.extend(r.example.iter().map(|v| v.to_string()));
        row.extend(r.hypothesis.iter().map(|v| v.to_string()));
        rows.push(row);
    }
    rows
}

fn finish(cfg: &ExperimentConfig, seed: u64, problem: &Problem, mut r: ProtocolResult) -> Result<SeedOutput> {
    problem.evaluate(&mut r)?;
    Ok(SeedOutput {
        rows: vec![RunRow::from_result(&cfg.protocol, seed, &r, problem.k())],
        ..Default::default()
    })
}

/// Runs the configured protocol on one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let proto = cfg.protocol.as_str();
    if proto == "appendix_c" {
        return run_appendix_c(cfg, seed);
    }
    let p = cfg.problem(seed)?;
    let result = match proto {
        "sample_shipping" => {
            let learner: BatchLearner = cfg.extra("learner")?.unwrap_or(BatchLearner::Conjunction);
            baseline::sample_shipping(&p, &learner, &cfg.params(ShippingParams::default(), &["learner"])?)?
        }
        "eq_mistake_bound" => {
            let params = cfg.params(EqParams::default(), &["learner", "grid"])?;
            let name: String = cfg.extra("learner")?.unwrap_or_else(|| "conjunction_elimination".into());
            match name.as_str() {
                "conjunction_elimination" => baseline::eq_mistake_bound(&p, &mut ConjunctionElimination::new(p.dim()), &params)?,
                "halving_thresholds" => {
                    let grid: usize = cfg.extra("grid")?.unwrap_or(201);
                    baseline::eq_mistake_bound(&p, &mut Halving::new(threshold_grid(grid)), &params)?
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown online learner `{other}`; valid: conjunction_elimination, halving_thresholds"
                    )))
                }
            }
        }
        "closed_conjunction" => run_intersection_closed(&p, ClosedClass::Conjunction, &cfg.params(ClosedParams::default(), &[])?)?,
        "closed_box" => run_intersection_closed(&p, ClosedClass::Box, &cfg.params(ClosedParams::default(), &[])?)?,
        "parity" => run_parity_two_player(&p, &cfg.params(ParityParams::default(), &[])?)?,
        "decision_list" => run_decision_list(&p, &cfg.params(DecisionListParams::default(), &[])?)?,
        "averaging" => linear::averaging_protocol(&p, &cfg.params(AveragingParams::default(), &[])?)?,
        "perceptron" => {
            linear::round_robin_perceptron(&p, &cfg.params(RoundRobinParams::non_concentrated(0.05), &[])?)?
        }
        "boosting" => return run_boosting(cfg, seed, &p),
        "robust_halving" => {
            let grid: usize = cfg.extra("grid")?.unwrap_or(201);
            let params = cfg.params(HalvingParams::default(), &["grid"])?;
            agnostic::run_robust_halving(&p, &threshold_grid(grid), &params, 0)?.result
        }
        "opt_search" => {
            let grid: usize = cfg.extra("grid")?.unwrap_or(201);
            let params = cfg.params(OptSearchParams::default(), &["grid"])?;
            agnostic::opt_search(&p, &threshold_grid(grid), &params)?.result
        }
        "interval_summary" => agnostic::run_interval_summary(&p, &cfg.params(IntervalParams::default(), &[])?)?,
        "private_conjunction" => {
            privacy::private_conjunction_protocol(&p, &cfg.private_params(PrivateConjunctionParams::default())?)?
        }
        "private_decision_list" => {
            privacy::private_decision_list(&p, &cfg.private_params(PrivateDecisionListParams::default())?)?
        }
        other => return Err(Error::Config(format!("protocol `{other}` has no runner"))),
    };
    finish(cfg, seed, &p, result)
}

fn run_boosting(cfg: &ExperimentConfig, seed: u64, p: &Problem) -> Result<SeedOutput> {
    let params = cfg.params(BoostParams::default(), &[])?;
    let out = run_distributed_boosting(p, &StumpLearner { n: p.dim() }, &params)?;
    let mut rows = vec![[
        "seed", "t", "eps_t", "train_error", "bound", "z_bound", "tv", "examples_shipped", "ledger_bits",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for r in &out.rounds {
        rows.push(vec![
            seed.to_string(),
            r.t.to_string(),
            r.eps_t.to_string(),
            r.train_error.to_string(),
            r.bound.to_string(),
            r.z_bound.to_string(),
            r.tv.to_string(),
            r.examples_shipped.to_string(),
            r.ledger_bits.to_string(),
        ]);
    }
    let mut so = finish(cfg, seed, p, out.result)?;
    so.tables.push(("boosting_rounds.csv".into(), rows));
    Ok(so)
}

fn run_appendix_c(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutput> {
    let gammas: Vec<f64> = cfg.extra("gammas")?.unwrap_or_else(|| vec![0.1, 0.05]);
    let max_rounds: u64 = cfg.extra("max_rounds")?.unwrap_or(100_000);
    for k in cfg.params.keys() {
        if k != "gammas" && k != "max_rounds" {
            return Err(Error::Config(format!("unknown parameter `{k}`; valid: gammas, max_rounds")));
        }
    }
    let mut so = SeedOutput::default();
    let mut rounds = Vec::new();
    for &g in &gammas {
        let run = linear::appendix_c_lower_bound(g, max_rounds)?;
        let problem = linear::appendix_c_problem(g)?;
        let mut out = finish(cfg, seed, &problem, run.result)?;
        so.rows.append(&mut out.rows);
        so.tables.push((format!("trace_gamma_{g}.csv"), trace_table(&run.trace)));
        rounds.push(serde_json::json!({ "gamma": g, "rounds": run.rounds }));
    }
    if gammas.len() >= 2 {
        let (a, b) = (&rounds[0]["rounds"], &rounds[1]["rounds"]);
        if let (Some(a), Some(b)) = (a.as_f64(), b.as_f64()) {
            so.extra.insert("rounds_ratio".into(), serde_json::json!(b / a));
        }
    }
    so.extra.insert("rounds_by_gamma".into(), serde_json::Value::Array(rounds));
    Ok(so)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub median: f64,
    pub p90: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    /// Median averages the two middle values; p90 is the nearest-rank value.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        let rank = ((0.9 * n as f64).ceil() as usize).clamp(1, n);
        Some(Self {
            median,
            p90: v[rank - 1],
            mean: v.iter().sum::<f64>() / n as f64,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub protocol: String,
    pub dim: Option<usize>,
    pub k: Option<usize>,
    pub epsilon: Option<f64>,
    pub runs: usize,
    pub failures: Vec<Failure>,
    pub stats: std::collections::BTreeMap<String, Stat>,
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// Output directory: the explicit one, else the config's, else
/// `$DISTPAC_OUT/<name>`, else `runs/<name>`.
pub fn resolve_out(explicit: Option<&Path>, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = &cfg.out {
        return p.clone();
    }
    match std::env::var_os(OUT_ENV) {
        Some(root) => PathBuf::from(root).join(name),
        None => PathBuf::from("runs").join(name),
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn write_table(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs every seed and writes results.csv, summary.json and any side
/// tables into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, seeds: &[u64], out: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out)?;
    let mut rows: Vec<RunRow> = Vec::new();
    let mut failures = Vec::new();
    let mut tables: Vec<(String, Vec<Vec<String>>)> = Vec::new();
    let mut extra = serde_json::Map::new();
    let mut shape = None;
    for &seed in seeds {
        let t0 = Instant::now();
        match run_seed(cfg, seed) {
            Ok(mut so) => {
                let ms = if cfg.wall_clock { t0.elapsed().as_millis() as u64 } else { 0 };
                for r in &mut so.rows {
                    r.wall_ms = ms;
                }
                rows.append(&mut so.rows);
                for (name, t) in so.tables {
                    match tables.iter_mut().find(|(n, _)| *n == name) {
                        Some((_, existing)) => existing.extend(t.into_iter().skip(1)),
                        None => tables.push((name, t)),
                    }
                }
                extra.extend(so.extra);
            }
            Err(e) if cfg.on_error == OnError::Record => failures.push(Failure {
                seed,
                error: e.to_string(),
            }),
            Err(e) => return Err(Error::Config(format!("seed {seed}: {e}"))),
        }
        if shape.is_none() && cfg.protocol != "appendix_c" {
            shape = cfg.problem(seed).ok().map(|p| (p.dim(), p.k()));
        }
    }
    let k = rows.iter().map(|r| r.error_per_player.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["protocol", "seed", "bits", "examples", "hypotheses", "rounds", "meta_rounds", "error_mixture"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|i| format!("error_p{i}")));
    header.push("wall_ms".into());
    let mut table = vec![header];
    for r in &rows {
        let mut line = vec![
            r.protocol.clone(),
            r.seed.to_string(),
            r.bits.to_string(),
            r.examples.to_string(),
            r.hypotheses.to_string(),
            r.rounds.to_string(),
            r.meta_rounds.to_string(),
            r.error_mixture.to_string(),
        ];
        line.extend((0..k).map(|i| r.error_per_player.get(i).map_or(String::new(), |e| e.to_string())));
        line.push(r.wall_ms.to_string());
        table.push(line);
    }
    write_table(&out.join("results.csv"), &table)?;
    for (name, t) in &tables {
        write_table(&out.join(name), t)?;
    }
    let mut stats = std::collections::BTreeMap::new();
    let cols: [(&str, fn(&RunRow) -> f64); 6] = [
        ("bits", |r| r.bits as f64),
        ("examples", |r| r.examples as f64),
        ("hypotheses", |r| r.hypotheses as f64),
        ("rounds", |r| r.rounds as f64),
        ("meta_rounds", |r| r.meta_rounds as f64),
        ("error_mixture", |r| r.error_mixture),
    ];
    for (name, f) in cols {
        if let Some(s) = Stat::of(&rows.iter().map(f).collect::<Vec<_>>()) {
            stats.insert(name.to_string(), s);
        }
    }
    let epsilon = cfg.params.get("epsilon").and_then(|v| v.as_float());
    let summary = Summary {
        protocol: cfg.protocol.clone(),
        dim: shape.map(|s| s.0),
        k: shape.map(|s| s.1),
        epsilon,
        runs: rows.len(),
        failures,
        stats,
        extra,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(out.join("summary.json"), json + "\n")?;
    Ok(summary)
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let p = dir.join("summary.json");
    let s = std::fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&s).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
}

/// Ratio of medians A/B for each currency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub ratios: std::collections::BTreeMap<String, Option<f64>>,
}

impl std::fmt::Display for Comparison {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{:<12} {:>12}   ({} / {})", "currency", "ratio", self.a, self.b)?;
        for (k, v) in &self.ratios {
            match v {
                Some(r) => writeln!(f, "{k:<12} {r:>12.4}")?,
                None => writeln!(f, "{k:<12} {:>12}", "undefined")?,
            }
        }
        Ok(())
    }
}

pub fn compare(a: &Summary, b: &Summary) -> Result<Comparison> {
    if a.dim != b.dim || a.k != b.k {
        return Err(Error::Config(format!(
            "class parameters differ: dim {:?} vs {:?}, k {:?} vs {:?}",
            a.dim, b.dim, a.k, b.k
        )));
    }
    let mut ratios = std::collections::BTreeMap::new();
    for key in ["bits", "examples", "hypotheses", "rounds"] {
        let ma = a.stats.get(key).map(|s| s.median);
        let mb = b.stats.get(key).map(|s| s.median);
        let r = match (ma, mb) {
            (Some(x), Some(y)) if y != 0.0 => Some(x / y),
            (Some(x), Some(y)) if x == y => Some(1.0),
            _ => None,
        };
        ratios.insert(key.to_string(), r);
    }
    Ok(Comparison {
        a: a.protocol.clone(),
        b: b.protocol.clone(),
        ratios,
    })
}
