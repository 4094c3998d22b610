//! Private radius estimation for a ρ-fraction of the points.
//!
//! `L(r)` averages the `t` largest capped ball counts around data points, and
//! a noisy binary search over `[0, √2/2]` finds a radius where `L(r) ≥ t` but
//! `L(r/2) < t`, up to the tolerance `θ`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::simplex::{l2_distance, SIMPLEX_RADIUS};

/// Number of points within distance `r` of `points[center_index]` (boundary inclusive).
pub fn ball_count<P: AsRef<[f64]>>(points: &[P], center_index: usize, r: f64) -> usize {
    let center = points[center_index].as_ref();
    points
        .iter()
        .filter(|p| l2_distance(p.as_ref(), center) <= r)
        .count()
}

/// Pairwise distance matrix of the input points, reused across the radii the
/// binary search probes.
#[derive(Debug, Clone)]
pub struct PairwiseDistances {
    m: usize,
    d: Vec<f64>,
}

impl PairwiseDistances {
    pub fn new<P: AsRef<[f64]>>(points: &[P]) -> Self {
        let m = points.len();
        let mut d = vec![0.0; m * m];
        for i in 0..m {
            for j in (i + 1)..m {
                let v = l2_distance(points[i].as_ref(), points[j].as_ref());
                d[i * m + j] = v;
                d[j * m + i] = v;
            }
        }
        Self { m, d }
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.m + j]
    }

    pub fn ball_count(&self, center_index: usize, r: f64) -> usize {
        let row = &self.d[center_index * self.m..(center_index + 1) * self.m];
        row.iter().filter(|&&v| v <= r).count()
    }

    pub fn max_distance(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }

    /// `L(r) = (1/t) · Σ` of the `t` largest `min(B_r(x_i), t)`.
    pub fn l_value(&self, t: usize, r: f64) -> f64 {
        let mut capped: Vec<usize> = (0..self.m).map(|i| self.ball_count(i, r).min(t)).collect();
        capped.sort_unstable_by(|a, b| b.cmp(a));
        let top: usize = capped.iter().take(t).sum();
        top as f64 / t as f64
    }
}

/// One-shot `L(r)` without caching.
pub fn l_function<P: AsRef<[f64]>>(points: &[P], t: usize, r: f64) -> f64 {
    PairwiseDistances::new(points).l_value(t, r)
}

/// The two noisy evaluations made at one binary-search step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub low: f64,
    pub high: f64,
    pub mid: f64,
    pub noisy_half: f64,
    pub noisy_mid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusSearch {
    pub radius: f64,
    pub steps: Vec<SearchStep>,
}

impl RadiusSearch {
    /// Gaussian draws consumed, always two per step.
    pub fn draws(&self) -> usize {
        2 * self.steps.len()
    }
}

fn check_search_args(t: usize, sigma0: f64, theta: f64) -> Result<()> {
    if t == 0 {
        return Err(invalid("t", "ball volume must be at least 1"));
    }
    if !(sigma0 >= 0.0 && sigma0.is_finite()) {
        return Err(invalid("sigma0", format!("{sigma0} must be a non-negative finite real")));
    }
    if !(theta > 0.0 && theta <= SIMPLEX_RADIUS) {
        return Err(invalid("theta", format!("{theta} must lie in (0, √2/2]")));
    }
    Ok(())
}

/// Noisy binary search for the smallest radius with `L(r) ≥ t`.
///
/// Every step draws two Gaussians of std `2σ₀`, first for `L(mid/2)` and then
/// for `L(mid)`, whichever branch is taken. Both passing branches set
/// `high ← mid`; the second evaluation is kept so that the number of charged
/// estimates does not depend on the data. `sigma0 = 0` runs noiselessly while
/// still consuming the draws.
pub fn dp_binary_search<F, R>(l: F, t: usize, sigma0: f64, theta: f64, rng: &mut R) -> Result<RadiusSearch>
where
    F: Fn(f64) -> f64,
    R: Rng + ?Sized,
{
    check_search_args(t, sigma0, theta)?;
    let scale = 2.0 * sigma0;
    let target = t as f64;
    let (mut low, mut high) = (0.0, SIMPLEX_RADIUS);
    let mut steps = Vec::new();
    while high - low > theta {
        let mid = (low + high) / 2.0;
        let z_half: f64 = rng.sample(StandardNormal);
        let z_mid: f64 = rng.sample(StandardNormal);
        let noisy_half = l(mid / 2.0) + scale * z_half;
        let noisy_mid = l(mid) + scale * z_mid;
        steps.push(SearchStep {
            low,
            high,
            mid,
            noisy_half,
            noisy_mid,
        });
        if noisy_half >= target {
            high = mid;
        } else if noisy_mid >= target {
            high = mid;
        } else {
            low = mid;
        }
    }
    Ok(RadiusSearch {
        radius: (low + high) / 2.0,
        steps,
    })
}

/// Private estimate of a radius whose ball around some point covers `t` points.
pub fn good_radius<P, R>(points: &[P], t: usize, sigma0: f64, theta: f64, rng: &mut R) -> Result<RadiusSearch>
where
    P: AsRef<[f64]>,
    R: Rng + ?Sized,
{
    if points.is_empty() {
        return Err(invalid("points", "need at least one point"));
    }
    if t > points.len() {
        return Err(invalid("t", format!("ball volume {t} exceeds the {} points", points.len())));
    }
    let distances = PairwiseDistances::new(points);
    dp_binary_search(|r| distances.l_value(t, r), t, sigma0, theta, rng)
}
