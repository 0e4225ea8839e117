//! Diversity and coverage statistics over sample sets.

use serde::{Deserialize, Serialize};

use crate::reward::MixtureSpec;
use crate::{Error, Result, Vec2};

/// Floor applied to pairwise distances inside the LGMD log.
pub const LGMD_DISTANCE_FLOOR: f64 = 1e-12;

/// `N >= 2` finite feature vectors of a common dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} values do not form rows of dimension {dim}",
                data.len()
            )));
        }
        if data.len() / dim < 2 {
            return Err(Error::InvalidInput("a sample set needs at least 2 samples".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite sample".into()));
        }
        Ok(Self { dim, data })
    }

    pub fn from_points(points: &[Vec2]) -> Result<Self> {
        Self::new(2, points.iter().flatten().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

fn pair_mean(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in i + 1..n {
            row += f(i, j);
        }
        total += row;
    }
    total * 2.0 / (n as f64 * (n as f64 - 1.0))
}

/// Log geometric mean of pairwise distances normalised by `sqrt(D)`.
/// Negative values indicate near-duplicate collapse.
pub fn lgmd(s: &SampleSet) -> f64 {
    let norm = (s.dim() as f64).sqrt();
    pair_mean(s.len(), |i, j| {
        let d = s
            .row(i)
            .iter()
            .zip(s.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (d.max(LGMD_DISTANCE_FLOOR) / norm).ln()
    })
}

/// Mean pairwise cosine distance `1 - cos` of the embedded samples.
pub fn cosine_diversity<F>(s: &SampleSet, embed: F) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut unit = Vec::with_capacity(s.len());
    for (i, row) in s.rows().enumerate() {
        let e = embed(row);
        let n = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::UndefinedCosine(i));
        }
        unit.push(e.into_iter().map(|v| v / n).collect::<Vec<_>>());
    }
    if unit.windows(2).any(|w| w[0].len() != w[1].len()) {
        return Err(Error::InvalidInput("embedding changed dimension".into()));
    }
    Ok(pair_mean(unit.len(), |i, j| {
        let c: f64 = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
        1.0 - c.clamp(-1.0, 1.0)
    }))
}

/// Identity embedding.
pub fn identity_embedding(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// Samples per mixture component under nearest-mean assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occupancy {
    pub counts: Vec<usize>,
    pub fractions: Vec<f64>,
    pub max_fraction: f64,
}

impl Occupancy {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Fractions over the given components only, renormalised to their
    /// combined count. All zeros when none of them received a sample.
    pub fn restricted(&self, components: &[usize]) -> Vec<f64> {
        let total: usize = components.iter().map(|&c| self.counts[c]).sum();
        components
            .iter()
            .map(|&c| {
                if total == 0 {
                    0.0
                } else {
                    self.counts[c] as f64 / total as f64
                }
            })
            .collect()
    }
}

pub fn mode_occupancy(spec: &MixtureSpec, points: &[Vec2]) -> Occupancy {
    let mut counts = vec![0usize; spec.components().len()];
    for x in points {
        counts[spec.nearest_component(*x)] += 1;
    }
    occupancy_from_counts(counts)
}

pub fn occupancy_from_counts(counts: Vec<usize>) -> Occupancy {
    let n: usize = counts.iter().sum();
    let fractions: Vec<f64> = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
        .collect();
    let max_fraction = fractions.iter().copied().fold(0.0, f64::max);
    Occupancy {
        counts,
        fractions,
        max_fraction,
    }
}

/// Coverage of the rewarded modes: fractions among samples that landed in
/// a rewarded component, with their max and min.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardedCoverage {
    pub components: Vec<usize>,
    pub fractions: Vec<f64>,
    pub max_fraction: f64,
    pub min_fraction: f64,
}

pub fn rewarded_coverage(spec: &MixtureSpec, occ: &Occupancy) -> RewardedCoverage {
    let components = spec.rewarded();
    let fractions = occ.restricted(&components);
    let max_fraction = fractions.iter().copied().fold(0.0, f64::max);
    let min_fraction = fractions.iter().copied().fold(f64::INFINITY, f64::min);
    RewardedCoverage {
        components,
        fractions,
        max_fraction,
        min_fraction: if min_fraction.is_finite() { min_fraction } else { 0.0 },
    }
}
