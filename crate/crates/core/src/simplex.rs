//! Vector primitives over the probability simplex.
//!
//! Everything here is a pure function of its inputs. Points are dense `f64`
//! vectors of a common length `K`; [`ProbVector`] additionally guarantees
//! non-negative entries summing to one.

use serde::{Deserialize, Serialize};
use std::ops::Deref;

use crate::error::{Error, Result};

/// Absolute tolerance on the entry sum of a [`ProbVector`].
pub const SIMPLEX_SUM_TOLERANCE: f64 = 1e-9;

/// Radius of the smallest ball enclosing the probability simplex (half its
/// diameter `√2`).
pub const SIMPLEX_RADIUS: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// A finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RealVector(Vec<f64>);

impl RealVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for RealVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for RealVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<ProbVector> for RealVector {
    fn from(p: ProbVector) -> Self {
        Self(p.0)
    }
}

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NotOnSimplex(format!("entry {i} is negative ({v})")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOLERANCE {
            return Err(Error::NotOnSimplex(format!("entries sum to {sum}")));
        }
        Ok(Self(values))
    }

    /// The uniform distribution `(1/k, …, 1/k)`.
    pub fn uniform(k: usize) -> Self {
        assert!(k > 0, "uniform distribution needs k >= 1");
        Self(vec![1.0 / k as f64; k])
    }

    /// A vertex of the simplex.
    pub fn vertex(k: usize, index: usize) -> Self {
        assert!(index < k);
        let mut v = vec![0.0; k];
        v[index] = 1.0;
        Self(v)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// An ℓ₂ ball.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        check_finite(&center)?;
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(crate::error::invalid("radius", format!("{radius} is not a finite non-negative real")));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        l2_distance(p, &self.center) <= self.radius
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyVector);
    }
    match values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        Some((index, &value)) => Err(Error::NonFinite { index, value }),
        None => Ok(()),
    }
}

/// Result of mapping a real vector back onto the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexProjection {
    pub vector: ProbVector,
    /// Set when every entry was non-positive and the uniform fallback was used.
    pub degenerate: bool,
}

/// `max(v, 0) / ‖max(v, 0)‖₁`, falling back to uniform when nothing is positive.
pub fn project_to_simplex(v: &[f64]) -> SimplexProjection {
    assert!(!v.is_empty(), "cannot project an empty vector");
    let clipped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let mass: f64 = clipped.iter().sum();
    if mass > 0.0 && mass.is_finite() {
        SimplexProjection {
            vector: ProbVector(clipped.into_iter().map(|x| x / mass).collect()),
            degenerate: false,
        }
    } else {
        SimplexProjection {
            vector: ProbVector::uniform(v.len()),
            degenerate: true,
        }
    }
}

/// Projects `p` onto `ball`: `c + (p − c) / max(1, ‖p − c‖₂ / R)`.
///
/// Points already inside the ball are returned unchanged.
pub fn project_to_ball(p: &[f64], ball: &Ball) -> RealVector {
    assert_eq!(p.len(), ball.center.len(), "point and center differ in length");
    let dist = l2_distance(p, &ball.center);
    if dist <= ball.radius {
        return RealVector(p.to_vec());
    }
    let scale = ball.radius / dist;
    RealVector(
        p.iter()
            .zip(&ball.center)
            .map(|(x, c)| c + (x - c) * scale)
            .collect(),
    )
}

pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "vectors differ in length");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Number of points within `ball`, boundary included.
pub fn coverage_count<P: AsRef<[f64]>>(points: &[P], ball: &Ball) -> usize {
    points.iter().filter(|p| ball.contains(p.as_ref())).count()
}

/// `⌈ρ·M⌉` clamped to `[1, M]`, tolerant of representation error in `ρ·M`.
pub fn required_count(rho: f64, m: usize) -> usize {
    let raw = (rho * m as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(m.max(1))
}

/// Brute-force radius of the smallest ball centred at a data point that covers
/// at least `⌈ρ·M⌉` of the points.
///
/// Candidate radii are pairwise distances, so the answer is always one of them.
/// This is a test oracle, not a general minimum enclosing ball solver.
pub fn min_ball_radius_oracle<P: AsRef<[f64]>>(points: &[P], rho: f64) -> f64 {
    assert!(!points.is_empty(), "oracle needs at least one point");
    let need = required_count(rho, points.len());
    points
        .iter()
        .map(|c| {
            let mut d: Vec<f64> = points.iter().map(|p| l2_distance(p.as_ref(), c.as_ref())).collect();
            d.sort_by(f64::total_cmp);
            d[need - 1]
        })
        .fold(f64::INFINITY, f64::min)
}
