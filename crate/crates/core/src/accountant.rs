//! Rényi-DP accounting for the adaptive aggregation run.
//!
//! Pipeline: per-iteration RDP of one token step (GoodRadius, projected means,
//! coverage checks) → amplification by subsampling without replacement →
//! sequential composition over iterations → conversion to (ε, δ)-DP,
//! minimised over an integer grid of orders.
//!
//! All primitive curves here are Gaussian, hence linear in the order:
//! `τ(α) = c·α`, and `τ(∞) = ∞`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::ops::Add;

use crate::error::{invalid, Error, Result};

/// A linear RDP curve `τ(α) = coefficient · α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpCurve {
    coefficient: f64,
}

impl RdpCurve {
    pub fn linear(coefficient: f64) -> Result<Self> {
        if !(coefficient >= 0.0) {
            return Err(invalid("coefficient", format!("{coefficient} must be non-negative")));
        }
        Ok(Self { coefficient })
    }

    /// Curve of a Gaussian mechanism with the given ℓ₂ sensitivity and noise std.
    pub fn gaussian(sensitivity: f64, noise_std: f64) -> Result<Self> {
        check_positive("sensitivity", sensitivity)?;
        check_positive("noise_std", noise_std)?;
        Self::linear(sensitivity * sensitivity / (2.0 * noise_std * noise_std))
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn eval(&self, alpha: f64) -> f64 {
        self.coefficient * alpha
    }
}

impl Add for RdpCurve {
    type Output = RdpCurve;
    fn add(self, rhs: RdpCurve) -> RdpCurve {
        RdpCurve {
            coefficient: self.coefficient + rhs.coefficient,
        }
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("{v} must be a positive finite real")))
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if alpha > 1.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid("alpha", format!("order {alpha} must exceed 1")))
    }
}

/// RDP of the Gaussian mechanism: `τ = α·Δ² / (2s²)`.
pub fn gaussian_rdp(sensitivity: f64, noise_std: f64, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    Ok(RdpCurve::gaussian(sensitivity, noise_std)?.eval(alpha))
}

/// Number of DP binary-search iterations, `⌈log₂(√2 / (2θ))⌉`.
pub fn binary_search_iterations(theta: f64) -> u32 {
    let iters = (std::f64::consts::SQRT_2 / (2.0 * theta)).log2().ceil();
    iters.max(0.0) as u32
}

/// Noise multipliers and loop bound of one aggregation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismProfile {
    /// GoodRadius noise multiplier.
    pub sigma0: f64,
    /// Projected-mean noise multiplier.
    pub sigma1: f64,
    /// Coverage-check noise std.
    pub sigma2: f64,
    /// Maximum number of radius-reduction iterations.
    pub t_hat: u32,
    /// Binary-search tolerance.
    pub theta: f64,
}

impl MechanismProfile {
    pub fn validate(&self) -> Result<()> {
        check_positive("sigma0", self.sigma0)?;
        check_positive("sigma1", self.sigma1)?;
        check_positive("sigma2", self.sigma2)?;
        if !(self.theta > 0.0 && self.theta <= std::f64::consts::FRAC_1_SQRT_2) {
            return Err(invalid("theta", format!("{} must lie in (0, √2/2]", self.theta)));
        }
        Ok(())
    }

    pub fn with_sigma1(self, sigma1: f64) -> Self {
        Self { sigma1, ..self }
    }

    /// Per-iteration curve components.
    pub fn components(&self) -> RdpComponents {
        let searches = binary_search_iterations(self.theta) as f64;
        let tau0 = searches / (self.sigma0 * self.sigma0);
        let tau1 = 1.0 / (2.0 * self.sigma1 * self.sigma1);
        let tau2 = 1.0 / (2.0 * self.sigma2 * self.sigma2);
        RdpComponents {
            tau0,
            tau1,
            tau2,
            t_hat: self.t_hat,
        }
    }

    /// The worst-case per-iteration curve `τ₀ + (T̂+1)τ₁ + T̂τ₂`.
    pub fn curve(&self) -> RdpCurve {
        RdpCurve {
            coefficient: self.components().total(),
        }
    }
}

/// RDP coefficients (per unit order) of the three mechanisms in one token step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RdpComponents {
    /// GoodRadius, all binary-search estimates together.
    pub tau0: f64,
    /// One projected-mean estimation.
    pub tau1: f64,
    /// One coverage check.
    pub tau2: f64,
    pub t_hat: u32,
}

impl RdpComponents {
    pub fn total(&self) -> f64 {
        let t_hat = self.t_hat as f64;
        self.tau0 + (t_hat + 1.0) * self.tau1 + t_hat * self.tau2
    }
}

/// `τ = τ₀ + (T̂+1)·τ₁ + T̂·τ₂` at order `alpha`, charging every iteration
/// regardless of early exits.
pub fn per_iteration_rdp(profile: &MechanismProfile, alpha: f64) -> f64 {
    profile.curve().eval(alpha)
}

/// Subsampling without replacement of `m` records out of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsamplingContext {
    pub m: u64,
    pub n: u64,
}

impl SubsamplingContext {
    pub fn new(m: u64, n: u64) -> Result<Self> {
        if m == 0 || n == 0 || m > n {
            return Err(invalid("sample size", format!("need 0 < m ≤ n, got m = {m}, n = {n}")));
        }
        Ok(Self { m, n })
    }

    pub fn gamma(&self) -> f64 {
        self.m as f64 / self.n as f64
    }
}

fn ln_binomial(n: u32, k: u32) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `ln(e^a + e^b)` without overflow.
fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Amplification by subsampling without replacement, evaluated at integer
/// order `alpha ≥ 2` with sampling rate `gamma`:
///
/// `τ'(α) ≤ 1/(α−1) · log(1 + γ²·C(α,2)·min{4(e^{τ(2)}−1), 2e^{τ(2)}}
///          + Σ_{j=3}^{α} γ^j·C(α,j)·e^{(j−1)τ(j)}·2)`
///
/// The inner `min{·, (e^{τ(∞)}−1)^j}` terms are resolved with `τ(∞) = ∞`.
/// The sum is accumulated in log space.
pub fn subsample_amplify(curve: &RdpCurve, gamma: f64, alpha: u32) -> Result<f64> {
    if alpha < 2 {
        return Err(invalid("alpha", format!("subsampling bound needs an integer order ≥ 2, got {alpha}")));
    }
    if !(gamma >= 0.0 && gamma <= 1.0) {
        return Err(invalid("gamma", format!("{gamma} must lie in [0, 1]")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let ln_gamma_rate = gamma.ln();

    let tau2 = curve.eval(2.0);
    // min{4(e^t − 1), 2e^t} in log form
    let ln_second = (4.0 * tau2.exp_m1()).ln().min(std::f64::consts::LN_2 + tau2);
    let mut ln_sum = 2.0 * ln_gamma_rate + ln_binomial(alpha, 2) + ln_second;

    for j in 3..=alpha {
        let jf = j as f64;
        let term = jf * ln_gamma_rate
            + ln_binomial(alpha, j)
            + (jf - 1.0) * curve.eval(jf)
            + std::f64::consts::LN_2;
        ln_sum = log_add(ln_sum, term);
    }

    // log(1 + S) from ln S
    let ln_one_plus = if ln_sum == f64::NEG_INFINITY {
        0.0
    } else if ln_sum > 0.0 {
        ln_sum + (-ln_sum).exp().ln_1p()
    } else {
        ln_sum.exp().ln_1p()
    };
    let tau_prime = ln_one_plus / (alpha as f64 - 1.0);
    if !tau_prime.is_finite() {
        return Err(Error::AmplificationOverflow { alpha });
    }
    Ok(tau_prime.max(0.0))
}

/// Sequential composition of `iterations` identical steps.
pub fn compose_iterations(tau_prime: f64, iterations: u64) -> f64 {
    tau_prime * iterations as f64
}

/// Converts `(α, τ)`-RDP to `(ε, δ)`-DP:
/// `ε = τ + log((α−1)/α) − (log δ + log α)/(α−1)`.
///
/// The value may be negative; callers clamp for display.
pub fn rdp_to_dp(alpha: f64, tau: f64, delta: f64) -> Result<f64> {
    check_order(alpha)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("{delta} must lie in (0, 1)")));
    }
    if !(tau >= 0.0) {
        return Err(invalid("tau", format!("{tau} must be non-negative")));
    }
    Ok(tau + ((alpha - 1.0) / alpha).ln() - (delta.ln() + alpha.ln()) / (alpha - 1.0))
}

/// Target privacy budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        check_positive("epsilon", epsilon)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("{delta} must lie in (0, 1)")));
        }
        Ok(Self { epsilon, delta })
    }
}

/// Integer Rényi orders scanned when converting to (ε, δ).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaGrid(Vec<u32>);

impl AlphaGrid {
    pub fn new(mut orders: Vec<u32>) -> Result<Self> {
        if orders.is_empty() {
            return Err(invalid("alpha_grid", "grid is empty"));
        }
        if let Some(bad) = orders.iter().find(|&&a| a < 2) {
            return Err(invalid("alpha_grid", format!("order {bad} is below 2")));
        }
        orders.sort_unstable();
        orders.dedup();
        Ok(Self(orders))
    }

    pub fn range(lo: u32, hi: u32) -> Result<Self> {
        Self::new((lo..=hi).collect())
    }

    pub fn orders(&self) -> &[u32] {
        &self.0
    }
}

impl Default for AlphaGrid {
    fn default() -> Self {
        Self((2..=64).collect())
    }
}

/// What the accountant charges for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunCharge {
    pub profile: MechanismProfile,
    /// Subsampling rate per token step.
    pub gamma: f64,
    /// Number of composed token steps.
    pub iterations: u64,
}

/// Result of minimising ε over the order grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonEstimate {
    pub epsilon: f64,
    pub best_alpha: u32,
    /// Orders dropped because the subsampling bound overflowed.
    pub excluded_orders: Vec<u32>,
}

/// ε of a full run at a single order.
pub fn epsilon_at_order(charge: &RunCharge, delta: f64, alpha: u32) -> Result<f64> {
    let tau_prime = subsample_amplify(&charge.profile.curve(), charge.gamma, alpha)?;
    rdp_to_dp(alpha as f64, compose_iterations(tau_prime, charge.iterations), delta)
}

/// Minimum ε over `grid`; ties go to the smallest order.
pub fn total_epsilon(charge: &RunCharge, delta: f64, grid: &AlphaGrid) -> Result<EpsilonEstimate> {
    let mut best: Option<(f64, u32)> = None;
    let mut excluded = Vec::new();
    for &alpha in grid.orders() {
        match epsilon_at_order(charge, delta, alpha) {
            Ok(eps) => {
                if best.map_or(true, |(b, _)| eps < b) {
                    best = Some((eps, alpha));
                }
            }
            Err(Error::AmplificationOverflow { alpha }) => {
                log::debug!("order {alpha} excluded: subsampling bound overflow");
                excluded.push(alpha);
            }
            Err(e) => return Err(e),
        }
    }
    let (epsilon, best_alpha) = best.ok_or(Error::NoValidOrder)?;
    Ok(EpsilonEstimate {
        epsilon,
        best_alpha,
        excluded_orders: excluded,
    })
}

pub const SIGMA1_BRACKET: (f64, f64) = (1e-3, 1e3);

/// Calibrated projected-mean noise multiplier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma1: f64,
    pub estimate: EpsilonEstimate,
}

/// Finds σ₁ such that the run's ε matches `target.epsilon` within
/// `1e-4` relative, by bisection in log σ₁ over [`SIGMA1_BRACKET`].
///
/// `charge.profile.sigma1` is ignored.
pub fn calibrate_sigma1(target: DpBudget, charge: &RunCharge, grid: &AlphaGrid) -> Result<Calibration> {
    let eps_at = |sigma1: f64| -> Result<EpsilonEstimate> {
        let c = RunCharge {
            profile: charge.profile.with_sigma1(sigma1),
            ..*charge
        };
        total_epsilon(&c, target.delta, grid)
    };
    let (lo, hi) = SIGMA1_BRACKET;
    let at_lo = eps_at(lo).map(|e| e.epsilon).unwrap_or(f64::INFINITY);
    let at_hi = eps_at(hi)?.epsilon;
    if !(at_hi < target.epsilon && target.epsilon < at_lo) {
        return Err(Error::UnachievableBudget {
            target: target.epsilon,
            at_low_noise: at_lo,
            at_high_noise: at_hi,
            sigma_low: lo,
            sigma_high: hi,
        });
    }

    let tol = 1e-5 * target.epsilon;
    let (mut ln_lo, mut ln_hi) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (ln_lo + ln_hi);
        let sigma1 = mid.exp();
        let est = eps_at(sigma1)?;
        if (est.epsilon - target.epsilon).abs() <= tol {
            return Ok(Calibration { sigma1, estimate: est });
        }
        // ε decreases as σ₁ grows
        if est.epsilon > target.epsilon {
            ln_lo = mid;
        } else {
            ln_hi = mid;
        }
    }
    let sigma1 = (0.5 * (ln_lo + ln_hi)).exp();
    Ok(Calibration {
        sigma1,
        estimate: eps_at(sigma1)?,
    })
}
