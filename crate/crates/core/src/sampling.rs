//! Collocation point generation and score-driven selection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pde::{BoxDomain, Point};

/// Fraction of an axis by which endpoint coordinates are pushed into the
/// open domain.
pub const HAMMERSLEY_NUDGE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("score {index} is {value}; scores must be finite and non-negative")]
    InvalidScore { index: usize, value: f64 },
    #[error("all candidate weights are zero")]
    Degenerate,
    #[error("cannot draw {k} distinct points from {n} candidates")]
    TooMany { k: usize, n: usize },
    #[error("empty candidate set")]
    Empty,
}

/// Candidate collocation points, all strictly inside the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    points: Vec<Point>,
}

impl CandidateSet {
    pub fn new(points: Vec<Point>) -> Self {
        CandidateSet { points }
    }

    pub fn uniform(domain: &BoxDomain, n: usize, seed: u64) -> Self {
        CandidateSet { points: uniform_sample(domain, n, seed) }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<Point> {
        indices.iter().map(|&i| self.points[i]).collect()
    }
}

/// `n` i.i.d. uniform points in the open box.
pub fn uniform_sample(domain: &BoxDomain, n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = domain.from_unit([rng.random(), rng.random()]);
        // [0, 1) draws can land on the lower faces
        if domain.contains_open(&p) {
            out.push(p);
        }
    }
    out
}

/// Van der Corput radical inverse of `i` in base 2.
pub fn radical_inverse_base2(i: u64) -> f64 {
    i.reverse_bits() as f64 / 2f64.powi(64)
}

/// The first `n` points of the two-dimensional Hammersley set on the unit
/// square: `(i/n, φ₂(i))`.
pub fn hammersley_unit(n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|i| [i as f64 / n as f64, radical_inverse_base2(i as u64)]).collect()
}

/// Hammersley points mapped into the domain, with coordinates on the faces
/// nudged inward by [`HAMMERSLEY_NUDGE`] of the axis length.
pub fn hammersley(domain: &BoxDomain, n: usize) -> Vec<Point> {
    let clamp = |u: f64| u.clamp(HAMMERSLEY_NUDGE, 1.0 - HAMMERSLEY_NUDGE);
    hammersley_unit(n).into_iter().map(|[a, b]| domain.from_unit([clamp(a), clamp(b)])).collect()
}

/// Discrete distribution `p ∝ S^α + c` over a candidate set.
#[derive(Clone, Debug, PartialEq)]
pub struct ResamplingPmf {
    probabilities: Vec<f64>,
    alpha: f64,
    c: f64,
}

impl ResamplingPmf {
    /// Uniform distribution over `n` candidates.
    pub fn uniform(n: usize) -> Self {
        ResamplingPmf { probabilities: vec![1.0 / n as f64; n], alpha: 0.0, c: 1.0 }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

pub fn build_pmf(scores: &[f64], alpha: f64, c: f64) -> Result<ResamplingPmf, SamplingError> {
    if scores.is_empty() {
        return Err(SamplingError::Empty);
    }
    if let Some((index, &value)) = scores.iter().enumerate().find(|(_, s)| !s.is_finite() || **s < 0.0) {
        return Err(SamplingError::InvalidScore { index, value });
    }
    // 0^0 = 1 by powf, matching the α = 0 limit of a flat distribution
    let weights: Vec<f64> = scores.iter().map(|s| s.powf(alpha) + c).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(SamplingError::Degenerate);
    }
    Ok(ResamplingPmf { probabilities: weights.iter().map(|w| w / total).collect(), alpha, c })
}

/// `k` distinct candidate indices drawn without replacement by Gumbel-top-k.
///
/// Zero-probability candidates rank behind every positive one, in random
/// order, so they only fill the remainder when fewer than `k` have mass.
pub fn sample_without_replacement(pmf: &ResamplingPmf, k: usize, seed: u64) -> Result<Vec<usize>, SamplingError> {
    let n = pmf.len();
    if k > n {
        return Err(SamplingError::TooMany { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // (positive mass?, key): Gumbel keys among positives, plain uniforms for the rest
    let mut keys: Vec<(bool, f64, usize)> = pmf
        .probabilities
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let u: f64 = rng.random();
            if p > 0.0 {
                let gumbel = -(-(u.max(f64::MIN_POSITIVE)).ln()).ln();
                (true, p.ln() + gumbel, i)
            } else {
                (false, u, i)
            }
        })
        .collect();
    keys.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    Ok(keys.into_iter().take(k).map(|(_, _, i)| i).collect())
}
