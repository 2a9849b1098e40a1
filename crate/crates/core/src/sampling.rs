//! Per-player distributions and labeled sample generation.

use crate::error::{Error, Result};
use crate::model::{LabeledExample, Sample, TargetFunction};
use crate::rng::{Seeds, StreamRng};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Declarative description of one player's distribution D_i.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    UniformBoolean { n: usize },
    /// Independent bits, coordinate `j` equal to 1 with probability `p[j]`.
    ProductBernoulli { p: Vec<f64> },
    UniformSphere { d: usize },
    /// Spherical Gaussian with covariance I/d, so E‖x‖² = 1.
    GaussianSphericalUnitNorm { d: usize },
    PointMassList { points: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Deterministic: draw t returns `points[t mod len]`.
    FixedOrderedList { points: Vec<Vec<f64>> },
    /// Uniform on the axis-parallel box `[lo, hi]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

impl DistributionSpec {
    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::UniformBoolean { n } => *n,
            DistributionSpec::ProductBernoulli { p } => p.len(),
            DistributionSpec::UniformSphere { d } | DistributionSpec::GaussianSphericalUnitNorm { d } => *d,
            DistributionSpec::PointMassList { points, .. } | DistributionSpec::FixedOrderedList { points } => {
                points.first().map_or(0, Vec::len)
            }
            DistributionSpec::UniformBox { lo, .. } => lo.len(),
        }
    }

    pub fn is_boolean(&self) -> bool {
        matches!(
            self,
            DistributionSpec::UniformBoolean { .. } | DistributionSpec::ProductBernoulli { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        match self {
            DistributionSpec::UniformBoolean { n } if *n == 0 => bad("dimension must be positive".into()),
            DistributionSpec::UniformSphere { d } | DistributionSpec::GaussianSphericalUnitNorm { d } if *d == 0 => {
                bad("dimension must be positive".into())
            }
            DistributionSpec::ProductBernoulli { p } => {
                if p.is_empty() {
                    return bad("dimension must be positive".into());
                }
                if let Some(q) = p.iter().find(|q| !(0.0..=1.0).contains(*q)) {
                    return bad(format!("bernoulli parameter {q} outside [0, 1]"));
                }
                Ok(())
            }
            DistributionSpec::PointMassList { points, probs } => {
                if points.is_empty() || points.len() != probs.len() {
                    return bad("point mass list needs one probability per point".into());
                }
                if probs.iter().any(|p| !(*p >= 0.0)) {
                    return bad("point masses must be nonnegative".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("point masses sum to {total}, not 1"));
                }
                same_dims(points)
            }
            DistributionSpec::FixedOrderedList { points } => {
                if points.is_empty() {
                    return bad("fixed list must be nonempty".into());
                }
                same_dims(points)
            }
            DistributionSpec::UniformBox { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return bad("box bounds must be nonempty and of equal length".into());
                }
                if lo.iter().zip(hi).any(|(a, b)| !(a <= b)) {
                    return bad("box needs lo <= hi in every coordinate".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Draws `m` unlabeled points.
    pub fn sample_points(&self, m: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
        match self {
            DistributionSpec::FixedOrderedList { points } => (0..m).map(|t| points[t % points.len()].clone()).collect(),
            DistributionSpec::PointMassList { points, probs } => {
                let idx = WeightedIndex::new(probs).expect("validated point masses");
                (0..m).map(|_| points[idx.sample(rng)].clone()).collect()
            }
            _ => (0..m).map(|_| self.sample_point(rng)).collect(),
        }
    }

    fn sample_point(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            DistributionSpec::UniformBoolean { n } => (0..*n).map(|_| bit(rng.random_bool(0.5))).collect(),
            DistributionSpec::ProductBernoulli { p } => p.iter().map(|&q| bit(rng.random_bool(q))).collect(),
            DistributionSpec::UniformSphere { d } => loop {
                let v: Vec<f64> = (0..*d).map(|_| StandardNormal.sample(rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 1e-300 {
                    break v.into_iter().map(|x| x / norm).collect();
                }
            },
            DistributionSpec::GaussianSphericalUnitNorm { d } => {
                let s = 1.0 / (*d as f64).sqrt();
                (0..*d)
                    .map(|_| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
                    .collect()
            }
            DistributionSpec::UniformBox { lo, hi } => lo
                .iter()
                .zip(hi)
                .map(|(a, b)| if a == b { *a } else { rng.random_range(*a..*b) })
                .collect(),
            DistributionSpec::PointMassList { .. } | DistributionSpec::FixedOrderedList { .. } => {
                unreachable!("list distributions are drawn in bulk")
            }
        }
    }
}

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn same_dims(points: &[Vec<f64>]) -> Result<()> {
    let d = points[0].len();
    match points.iter().find(|p| p.len() != d) {
        Some(p) => Err(Error::DimensionMismatch {
            expected: d,
            found: p.len(),
        }),
        None if d == 0 => Err(Error::Config("points must have positive dimension".into())),
        None => Ok(()),
    }
}

fn check_dims(spec: &DistributionSpec, f: &TargetFunction) -> Result<()> {
    spec.validate()?;
    f.validate()?;
    if !f.accepts_dimension(spec.dim()) {
        return Err(Error::DimensionMismatch {
            expected: f.dimension().unwrap_or(spec.dim()),
            found: spec.dim(),
        });
    }
    Ok(())
}

/// `m` examples from `spec`, labeled by `f`, reproducible from `seed`.
pub fn draw_sample(spec: &DistributionSpec, f: &TargetFunction, m: usize, seed: u64) -> Result<Sample> {
    let mut rng = Seeds::new(seed).stream("draw", &[]);
    draw_sample_with(spec, f, m, &mut rng)
}

pub fn draw_sample_with(
    spec: &DistributionSpec,
    f: &TargetFunction,
    m: usize,
    rng: &mut StreamRng,
) -> Result<Sample> {
    draw_noisy_sample(spec, f, m, 0.0, rng)
}

/// Like [`draw_sample_with`], then flips each label independently with
/// probability `eta`. The points do not depend on `eta`.
pub fn draw_noisy_sample(
    spec: &DistributionSpec,
    f: &TargetFunction,
    m: usize,
    eta: f64,
    rng: &mut StreamRng,
) -> Result<Sample> {
    check_dims(spec, f)?;
    let points = spec.sample_points(m, rng);
    let mut examples: Vec<LabeledExample> = points
        .into_iter()
        .map(|x| {
            let label = f.eval(&x);
            LabeledExample::new(x, label)
        })
        .collect();
    if eta > 0.0 {
        for e in &mut examples {
            if rng.random_bool(eta) {
                e.label = e.label.flip();
            }
        }
    }
    Ok(Sample::new(examples))
}
