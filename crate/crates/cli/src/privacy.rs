//! What a run is charged, and the privacy report.

use serde::{Deserialize, Serialize};

use dpsyn_core::accountant::{
    calibrate_sigma1, total_epsilon, DpBudget, MechanismProfile, RdpComponents, RunCharge, SubsamplingContext,
};
use dpsyn_core::Error as CoreError;

use crate::config::{GammaMode, NoiseSource, RunConfig};
use crate::error::{config, CliError, Result};

/// Size information the accountant needs about the private data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataShape {
    pub dataset_size: u64,
    /// Size of the smallest label class.
    pub min_label_count: u64,
}

impl DataShape {
    pub fn from_dataset(ds: &dpsyn_providers::dataset::Dataset) -> Self {
        Self {
            dataset_size: ds.len() as u64,
            min_label_count: ds.label_counts().values().copied().min().unwrap_or(0) as u64,
        }
    }

    /// `dataset_size` / `min_label_count` from the config, falling back to
    /// the loaded data for whichever is unset.
    pub fn resolve(cfg: &RunConfig) -> Result<Self> {
        if let (Some(dataset_size), Some(min_label_count)) = (cfg.dataset_size, cfg.min_label_count) {
            return Ok(Self {
                dataset_size,
                min_label_count,
            });
        }
        if cfg.data.is_none() {
            return Err(config("set `data`, or both `dataset_size` and `min_label_count`"));
        }
        let shape = Self::from_dataset(&cfg.load_data()?);
        Ok(Self {
            dataset_size: cfg.dataset_size.unwrap_or(shape.dataset_size),
            min_label_count: cfg.min_label_count.unwrap_or(shape.min_label_count),
        })
    }
}

/// Subsampling rate and number of composed token steps for a γ mode.
pub fn run_charge(
    profile: MechanismProfile,
    mode: GammaMode,
    m: usize,
    n: usize,
    t_max: usize,
    n_shots: usize,
    shape: DataShape,
) -> Result<RunCharge> {
    let drawn = (m * n) as u64;
    let (population, iterations) = match mode {
        GammaMode::Whole => (shape.dataset_size, (n_shots * t_max) as u64),
        GammaMode::PerLabel => (shape.min_label_count, t_max as u64),
    };
    if drawn > population {
        let which = match mode {
            GammaMode::Whole => "the dataset size",
            GammaMode::PerLabel => "the smallest label count",
        };
        return Err(config(format!("M·N = {drawn} exceeds {which} ({population})")));
    }
    let ctx = SubsamplingContext::new(drawn, population).map_err(|e| config(e.to_string()))?;
    Ok(RunCharge {
        profile,
        gamma: ctx.gamma(),
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEpsilon {
    pub gamma_mode: GammaMode,
    pub gamma: f64,
    pub iterations: u64,
    pub epsilon: f64,
    pub best_alpha: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    pub epsilon: f64,
    pub delta: f64,
    pub best_alpha: u32,
    pub gamma_mode: GammaMode,
    pub gamma: f64,
    /// Composed token steps.
    pub iterations: u64,
    pub t_max: usize,
    pub n_shots: usize,
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub t_hat: u32,
    pub theta: f64,
    /// Per-unit-order RDP coefficients of one token step.
    pub components: RdpComponents,
    pub calibrated: bool,
    pub excluded_orders: Vec<u32>,
    /// ε at the same σ₁ under the other γ mode, when it is defined.
    pub other_mode: Option<ModeEpsilon>,
}

fn other(mode: GammaMode) -> GammaMode {
    match mode {
        GammaMode::Whole => GammaMode::PerLabel,
        GammaMode::PerLabel => GammaMode::Whole,
    }
}

/// Resolves σ₁ (directly or by calibration) and accounts the whole run.
/// δ defaults to `1/|D|`.
pub fn report_privacy(cfg: &RunConfig, shape: DataShape) -> Result<PrivacyReport> {
    let delta = cfg.delta.unwrap_or(1.0 / shape.dataset_size as f64);
    if !(delta > 0.0 && delta < 1.0) {
        return Err(config(format!("delta {delta} must lie in (0, 1)")));
    }
    let grid = cfg.alpha_grid();
    if cfg.sigma0 == 0.0 || (cfg.sigma2 == 0.0 && cfg.t_hat > 0) || cfg.sigma1 == Some(0.0) {
        return noiseless_report(cfg, shape, delta);
    }
    let placeholder = MechanismProfile {
        sigma0: cfg.sigma0,
        sigma1: 1.0,
        sigma2: cfg.sigma2,
        t_hat: cfg.t_hat,
        theta: cfg.theta,
    };
    placeholder.validate().map_err(|e| config(e.to_string()))?;
    let charge_for = |mode, profile| run_charge(profile, mode, cfg.m, cfg.n, cfg.t_max, cfg.n_shots, shape);
    let charge = charge_for(cfg.gamma_mode, placeholder)?;

    let (sigma1, estimate, calibrated) = match cfg.noise_source()? {
        NoiseSource::Sigma1(s) => {
            let c = RunCharge {
                profile: placeholder.with_sigma1(s),
                ..charge
            };
            c.profile.validate().map_err(|e| config(e.to_string()))?;
            (s, total_epsilon(&c, delta, &grid)?, false)
        }
        NoiseSource::TargetEpsilon(eps) => {
            let budget = DpBudget::new(eps, delta).map_err(|e| config(e.to_string()))?;
            match calibrate_sigma1(budget, &charge, &grid) {
                Ok(cal) => (cal.sigma1, cal.estimate, true),
                Err(e @ CoreError::UnachievableBudget { .. }) => return Err(CliError::Calibration(e)),
                Err(e) => return Err(e.into()),
            }
        }
    };
    let profile = placeholder.with_sigma1(sigma1);
    let other_mode = charge_for(other(cfg.gamma_mode), profile).ok().and_then(|c| {
        let est = total_epsilon(&c, delta, &grid).ok()?;
        Some(ModeEpsilon {
            gamma_mode: other(cfg.gamma_mode),
            gamma: c.gamma,
            iterations: c.iterations,
            epsilon: est.epsilon,
            best_alpha: est.best_alpha,
        })
    });
    Ok(PrivacyReport {
        epsilon: estimate.epsilon,
        delta,
        best_alpha: estimate.best_alpha,
        gamma_mode: cfg.gamma_mode,
        gamma: charge.gamma,
        iterations: charge.iterations,
        t_max: cfg.t_max,
        n_shots: cfg.n_shots,
        sigma0: cfg.sigma0,
        sigma1,
        sigma2: cfg.sigma2,
        t_hat: cfg.t_hat,
        theta: cfg.theta,
        components: profile.components(),
        calibrated,
        excluded_orders: estimate.excluded_orders,
        other_mode,
    })
}

/// A run with a zero noise multiplier has no privacy guarantee: `epsilon` is
/// infinite (serialised as `null`).
fn noiseless_report(cfg: &RunConfig, shape: DataShape, delta: f64) -> Result<PrivacyReport> {
    let sigma1 = match cfg.noise_source()? {
        NoiseSource::Sigma1(s) => s,
        NoiseSource::TargetEpsilon(_) => return Err(config("a target epsilon needs positive sigma0 and sigma2")),
    };
    log::warn!("a noise multiplier is 0: this run has no differential privacy guarantee");
    let profile = MechanismProfile {
        sigma0: cfg.sigma0,
        sigma1,
        sigma2: cfg.sigma2,
        t_hat: cfg.t_hat,
        theta: cfg.theta,
    };
    let charge = run_charge(profile, cfg.gamma_mode, cfg.m, cfg.n, cfg.t_max, cfg.n_shots, shape)?;
    Ok(PrivacyReport {
        epsilon: f64::INFINITY,
        delta,
        best_alpha: 0,
        gamma_mode: cfg.gamma_mode,
        gamma: charge.gamma,
        iterations: charge.iterations,
        t_max: cfg.t_max,
        n_shots: cfg.n_shots,
        sigma0: cfg.sigma0,
        sigma1,
        sigma2: cfg.sigma2,
        t_hat: cfg.t_hat,
        theta: cfg.theta,
        components: profile.components(),
        calibrated: false,
        excluded_orders: Vec::new(),
        other_mode: None,
    })
}

/// Baseline noise multiplier with the same per-token RDP as `profile`.
///
/// The baseline sum has sensitivity `√2` and noise std `√2σ`, so its RDP is
/// `α/(2σ²)`; equating with `c·α` gives `σ = 1/√(2c)`.
pub fn matched_baseline_sigma(profile: &MechanismProfile) -> f64 {
    1.0 / (2.0 * profile.curve().coefficient()).sqrt()
}
