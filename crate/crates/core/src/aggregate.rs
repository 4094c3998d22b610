//! Private aggregation of `M` next-token distributions into one.
//!
//! The adaptive aggregator first estimates a target radius `r` privately, then
//! starts from a noisy mean with clipping radius `R = √2/2` and repeatedly
//!
//! 1. checks (noisily) that at least `μM` of the original points lie within
//!    `r + 2λRσ₁√K/M` of the current center,
//! 2. stops if `R < r + 2λRσ₁√K/M`,
//! 3. sets `R ← r + 2λRσ₁√K/M`, clips the original points to the ball of
//!    radius `R` around the center and re-estimates the mean,
//!
//! for at most `T̂` rounds. Each mean adds noise of std `2Rσ₁` to the sum, so
//! shrinking `R` shrinks the noise. The baseline ignores the geometry and adds
//! noise of std `√2σ` to the unclipped sum.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::accountant::MechanismProfile;
use crate::error::{invalid, Error, Result};
use crate::good_radius::{good_radius, SearchStep};
use crate::seeding::NoiseStreams;
use crate::simplex::{
    coverage_count, project_to_ball, project_to_simplex, required_count, Ball, ProbVector, RealVector,
    SimplexProjection, SIMPLEX_RADIUS,
};

pub const DEFAULT_MU: f64 = 0.55;
pub const DEFAULT_RHO: f64 = 0.8;
pub const DEFAULT_THETA: f64 = 0.1;

/// Knobs of the adaptive aggregator. `M` and `K` are taken from the input.
///
/// Noise multipliers may be zero, which runs the mechanism noiselessly while
/// keeping the random draws in place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub lambda: f64,
    pub t_hat: u32,
    pub mu: f64,
    pub rho: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub theta: f64,
}

impl AggregationConfig {
    pub fn new(lambda: f64, t_hat: u32, sigma0: f64, sigma1: f64, sigma2: f64) -> Self {
        Self {
            lambda,
            t_hat,
            mu: DEFAULT_MU,
            rho: DEFAULT_RHO,
            sigma0,
            sigma1,
            sigma2,
            theta: DEFAULT_THETA,
        }
    }

    pub fn noiseless(self) -> Self {
        Self {
            sigma0: 0.0,
            sigma1: 0.0,
            sigma2: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma0", self.sigma0),
            ("sigma1", self.sigma1),
            ("sigma2", self.sigma2),
            ("lambda", self.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be a non-negative finite real")));
            }
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(invalid("mu", format!("{} must be positive", self.mu)));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(invalid("rho", format!("{} must lie in (0, 1]", self.rho)));
        }
        if !(self.theta > 0.0 && self.theta <= SIMPLEX_RADIUS) {
            return Err(invalid("theta", format!("{} must lie in (0, √2/2]", self.theta)));
        }
        Ok(())
    }

    /// `2λσ₁√K/M`, the margin per unit of the current radius.
    pub fn margin_coefficient(&self, m: usize, k: usize) -> f64 {
        2.0 * self.lambda * self.sigma1 * (k as f64).sqrt() / m as f64
    }

    /// True (and logged) when `λσ₁√K/M ≥ 0.5`, i.e. an update may not shrink `R`.
    pub fn margin_warning(&self, m: usize, k: usize) -> bool {
        let half = self.margin_coefficient(m, k) / 2.0;
        if half >= 0.5 {
            log::warn!("λσ₁√K/M = {half:.3} ≥ 0.5: radius updates may not shrink the clipping radius");
            true
        } else {
            false
        }
    }

    /// Accounting profile matching this configuration.
    pub fn profile(&self) -> MechanismProfile {
        MechanismProfile {
            sigma0: self.sigma0,
            sigma1: self.sigma1,
            sigma2: self.sigma2,
            t_hat: self.t_hat,
            theta: self.theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakReason {
    MaxIters,
    CoverageFailed,
    RadiusFloor,
}

/// One noisy coverage check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageCheck {
    /// Radius the count was taken at, `r + 2λRσ₁√K/M`.
    pub radius: f64,
    pub raw_count: usize,
    pub noisy_count: f64,
    pub passed: bool,
}

/// Audit record of one adaptive aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationTrace {
    pub target_r: f64,
    pub search: Vec<SearchStep>,
    /// Clipping radius in force for each mean estimation, starting at `√2/2`.
    pub radius_sequence: Vec<f64>,
    pub coverage: Vec<CoverageCheck>,
    pub break_reason: BreakReason,
    pub degenerate_simplex_events: usize,
    /// Noisy vector means drawn (each is one charged mean estimation).
    pub mean_estimations: usize,
}

impl AggregationTrace {
    pub fn coverage_checks(&self) -> usize {
        self.coverage.len()
    }

    /// Scalar Gaussian draws made by the radius search.
    pub fn search_draws(&self) -> usize {
        2 * self.search.len()
    }
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize> {
    let first = points
        .first()
        .ok_or_else(|| invalid("points", "need at least one vector"))?;
    let k = first.as_ref().len();
    if k == 0 {
        return Err(Error::EmptyVector);
    }
    for p in points {
        if p.as_ref().len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: p.as_ref().len(),
            });
        }
    }
    Ok(k)
}

/// `(Σ pᵢ + noise_std · z) / M` with `z ~ N(0, I_K)` drawn in coordinate order.
fn noisy_mean<P: AsRef<[f64]>, R: Rng + ?Sized>(points: &[P], noise_std: f64, rng: &mut R) -> Result<RealVector> {
    let k = check_points(points)?;
    let m = points.len() as f64;
    let mut sum = vec![0.0; k];
    for p in points {
        for (s, x) in sum.iter_mut().zip(p.as_ref()) {
            *s += x;
        }
    }
    for s in sum.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *s = (*s + noise_std * z) / m;
    }
    Ok(RealVector::from_raw(sum))
}

/// Noisy mean of clipped points with sum noise std `2Rσ₁`, before the simplex map.
pub fn noisy_mean_unprojected<P: AsRef<[f64]>, R: Rng + ?Sized>(
    projected_points: &[P],
    radius: f64,
    sigma1: f64,
    rng: &mut R,
) -> Result<RealVector> {
    noisy_mean(projected_points, 2.0 * radius * sigma1, rng)
}

/// Noisy mean of clipped points mapped back onto the simplex.
pub fn noisy_projected_mean<P: AsRef<[f64]>, R: Rng + ?Sized>(
    projected_points: &[P],
    radius: f64,
    sigma1: f64,
    rng: &mut R,
) -> Result<SimplexProjection> {
    let raw = noisy_mean_unprojected(projected_points, radius, sigma1, rng)?;
    Ok(project_to_simplex(&raw))
}

/// Counts original points within `r + 2λRσ₁√K/M` of `center` and compares the
/// count plus `N(0, σ₂²)` noise against `μM`. Consumes exactly one draw.
pub fn radius_coverage_check<P: AsRef<[f64]>, R: Rng + ?Sized>(
    points: &[P],
    center: &[f64],
    r: f64,
    big_r: f64,
    cfg: &AggregationConfig,
    rng: &mut R,
) -> Result<CoverageCheck> {
    let k = check_points(points)?;
    if center.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: center.len(),
        });
    }
    let m = points.len();
    let radius = r + cfg.margin_coefficient(m, k) * big_r;
    let ball = Ball::new(center.to_vec(), radius)?;
    let raw_count = coverage_count(points, &ball);
    let z: f64 = rng.sample(StandardNormal);
    let noisy_count = raw_count as f64 + cfg.sigma2 * z;
    Ok(CoverageCheck {
        radius,
        raw_count,
        noisy_count,
        passed: noisy_count >= cfg.mu * m as f64,
    })
}

/// The adaptive aggregator. Draws from `streams.radius` for the radius search,
/// `streams.mean` for every mean and `streams.check` for every coverage check.
pub fn adaptive_aggregate<P: AsRef<[f64]>>(
    points: &[P],
    cfg: &AggregationConfig,
    streams: &mut NoiseStreams,
) -> Result<(ProbVector, AggregationTrace)> {
    cfg.validate()?;
    let k = check_points(points)?;
    let m = points.len();
    cfg.margin_warning(m, k);
    let coef = cfg.margin_coefficient(m, k);

    let t = required_count(cfg.rho, m);
    let search = good_radius(points, t, cfg.sigma0, cfg.theta, &mut streams.radius)?;
    let r = search.radius;

    let mut big_r = SIMPLEX_RADIUS;
    let mut trace = AggregationTrace {
        target_r: r,
        search: search.steps,
        radius_sequence: vec![big_r],
        coverage: Vec::new(),
        break_reason: BreakReason::MaxIters,
        degenerate_simplex_events: 0,
        mean_estimations: 0,
    };

    // Every point of the simplex is within √2/2 of any other, so the first
    // projection is the identity.
    let mut estimate = noisy_projected_mean(points, big_r, cfg.sigma1, &mut streams.mean)?;
    trace.mean_estimations += 1;
    trace.degenerate_simplex_events += estimate.degenerate as usize;

    for _ in 0..cfg.t_hat {
        let check = radius_coverage_check(points, &estimate.vector, r, big_r, cfg, &mut streams.check)?;
        trace.coverage.push(check);
        if !check.passed {
            trace.break_reason = BreakReason::CoverageFailed;
            break;
        }
        let next = r + coef * big_r;
        if big_r < next {
            trace.break_reason = BreakReason::RadiusFloor;
            break;
        }
        big_r = next;
        trace.radius_sequence.push(big_r);

        let ball = Ball::new(estimate.vector.to_vec(), big_r)?;
        let clipped: Vec<RealVector> = points.iter().map(|p| project_to_ball(p.as_ref(), &ball)).collect();
        estimate = noisy_projected_mean(&clipped, big_r, cfg.sigma1, &mut streams.mean)?;
        trace.mean_estimations += 1;
        trace.degenerate_simplex_events += estimate.degenerate as usize;
    }

    Ok((estimate.vector, trace))
}

/// The data-independent baseline: `(Σ pᵢ + N(0, 2σ²I)) / M`, no simplex map.
///
/// Draws `K` standard normals in the same order as one adaptive mean
/// estimation, so both share a noise realisation on a shared stream.
pub fn baseline_aggregate<P: AsRef<[f64]>, R: Rng + ?Sized>(points: &[P], sigma: f64, rng: &mut R) -> Result<RealVector> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid("sigma", format!("{sigma} must be a non-negative finite real")));
    }
    noisy_mean(points, std::f64::consts::SQRT_2 * sigma, rng)
}

/// Position of the largest entry; ties go to the smallest position.
pub fn argmax(p: &[f64]) -> usize {
    assert!(!p.is_empty(), "argmax of an empty vector");
    let mut best = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// The support entry at the argmax of `p`.
pub fn select_token<'a, T>(p: &[f64], support: &'a [T]) -> Result<&'a T> {
    if p.len() != support.len() {
        return Err(Error::DimensionMismatch {
            expected: support.len(),
            got: p.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::EmptyVector);
    }
    Ok(&support[argmax(p)])
}
