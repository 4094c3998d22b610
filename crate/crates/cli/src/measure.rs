//! Cluster-radius measurement along a baseline generation path.
//!
//! Each run draws a label and walks `T_max` token positions. At every position
//! it records the radius of the smallest ball around one of the `M` private
//! vectors that covers a `ρ` fraction of them. The radius is either exact or
//! found by the private radius search. The next token comes from the baseline
//! aggregator.

use serde::{Deserialize, Serialize};

use dpsyn_core::aggregate::{baseline_aggregate, select_token};
use dpsyn_core::good_radius::good_radius;
use dpsyn_core::seeding::SeedTree;
use dpsyn_core::simplex::{min_ball_radius_oracle, required_count};
use dpsyn_providers::dataset::Dataset;
use dpsyn_providers::provider::{next_token_generation, RoundSpec, TokenProvider};
use dpsyn_providers::template::PromptTemplate;

use crate::config::{RadiusMode, RunConfig};
use crate::privacy::{matched_baseline_sigma, report_privacy, DataShape};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRun {
    pub run: usize,
    pub label: String,
    /// Radius at each token position.
    pub radii: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub mode: RadiusMode,
    pub rho: f64,
    pub baseline_sigma: f64,
    pub runs: Vec<RadiusRun>,
    /// Mean of the per-run means.
    pub mean: f64,
    /// Sample standard deviation of the per-run means.
    pub std: f64,
}

pub struct RadiusExperiment<'a> {
    pub provider: &'a dyn TokenProvider,
    pub data: &'a Dataset,
    pub template: PromptTemplate,
    pub cfg: &'a RunConfig,
    /// Noise multiplier of the baseline path; 0 follows the noiseless mean.
    pub baseline_sigma: f64,
}

impl RadiusExperiment<'_> {
    pub fn run(&self) -> Result<RadiusReport> {
        let cfg = self.cfg;
        let root = SeedTree::new(cfg.seed);
        let mut runs = Vec::with_capacity(cfg.runs);
        for run in 0..cfg.runs {
            let node = root.indexed("radius-run", run);
            let labels = &self.data.labels;
            let label = labels[rand::Rng::random_range(&mut node.child("label").rng(), 0..labels.len())].clone();
            let mut prefix = String::new();
            let mut radii = Vec::with_capacity(cfg.t_max);
            for position in 0..cfg.t_max {
                let tok = node.indexed("token", position);
                let round = RoundSpec {
                    label: &label,
                    m: cfg.m,
                    n: cfg.n,
                    k: cfg.k,
                    template: &self.template,
                    prefix: &prefix,
                    position,
                };
                let batch = next_token_generation(self.provider, &self.data.examples, &round, &mut tok.child("subsample").rng())
                    .map_err(|source| CliError::InDemo { demo: run, source })?;
                let points = &batch.private_vectors;
                let r = match cfg.radius_mode {
                    RadiusMode::Oracle => min_ball_radius_oracle(points, cfg.rho),
                    RadiusMode::GoodRadius => {
                        let t = required_count(cfg.rho, points.len());
                        good_radius(points, t, cfg.sigma0, cfg.theta, &mut tok.child("goodradius").rng())?.radius
                    }
                };
                radii.push(r);
                let p = baseline_aggregate(points, self.baseline_sigma, &mut tok.child("mean").rng())?;
                prefix.push_str(select_token(&p, &batch.support)?);
            }
            let mean = radii.iter().sum::<f64>() / radii.len() as f64;
            runs.push(RadiusRun { run, label, radii, mean });
        }
        let means: Vec<f64> = runs.iter().map(|r| r.mean).collect();
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        let std = if means.len() > 1 {
            (means.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (means.len() - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(RadiusReport {
            mode: cfg.radius_mode,
            rho: cfg.rho,
            baseline_sigma: self.baseline_sigma,
            runs,
            mean,
            std,
        })
    }
}

/// The `measure-radius` command. The baseline path uses the noise multiplier
/// matched to the configured mechanism, or no noise if none is configured.
pub fn run_measure(cfg: &RunConfig) -> Result<RadiusReport> {
    let data = cfg.load_data()?;
    let baseline_sigma = if cfg.sigma1.is_some() || cfg.epsilon.is_some() {
        let report = report_privacy(cfg, DataShape::from_dataset(&data))?;
        let profile = cfg.aggregation(report.sigma1).profile();
        matched_baseline_sigma(&profile)
    } else {
        0.0
    };
    let provider = cfg.provider.build(cfg.k)?;
    RadiusExperiment {
        provider: provider.as_ref(),
        data: &data,
        template: cfg.prompt_template()?,
        cfg,
        baseline_sigma,
    }
    .run()
}
