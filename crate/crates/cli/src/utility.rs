//! Adaptive versus baseline aggregation at matched per-token privacy.
//!
//! Each trial takes one batch of private vectors, computes the consensus
//! token (argmax of their exact mean) and asks whether each aggregator picks
//! it. Both aggregators see the same batch with independent noise streams, so
//! the comparison is paired.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use dpsyn_core::aggregate::{adaptive_aggregate, argmax, baseline_aggregate, AggregationConfig};
use dpsyn_core::seeding::{NoiseStreams, SeedTree};
use dpsyn_core::simplex::ProbVector;

use dpsyn_providers::provider::{next_token_generation, RoundSpec};

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::privacy::{matched_baseline_sigma, report_privacy, DataShape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySetup {
    pub aggregation: AggregationConfig,
    pub baseline_sigma: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub trials: usize,
    pub adaptive_agree: usize,
    pub baseline_agree: usize,
    pub adaptive_rate: f64,
    pub baseline_rate: f64,
    /// Two-sided 95% Wilson intervals.
    pub adaptive_interval: (f64, f64),
    pub baseline_interval: (f64, f64),
    /// `adaptive_rate − baseline_rate`.
    pub difference: f64,
    /// Standard error of the paired difference.
    pub difference_se: f64,
    /// One-sided 95% lower and upper confidence bounds on the difference.
    pub difference_lower_bound: f64,
    pub difference_upper_bound: f64,
    /// The data do not reject "adaptive rate ≥ baseline rate" at the one-sided
    /// 5% level, i.e. `difference_upper_bound ≥ 0`.
    pub adaptive_not_worse: bool,
}

fn z(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, level: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = z(0.5 + level / 2.0);
    let (n, p) = (n as f64, k as f64 / n as f64);
    let denom = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Runs `setup.trials` paired trials; `batch(i)` supplies trial `i`'s vectors.
pub fn run_utility_comparison<F>(setup: &UtilitySetup, mut batch: F) -> Result<UtilityReport>
where
    F: FnMut(usize) -> Result<Vec<ProbVector>>,
{
    let root = SeedTree::new(setup.seed);
    let n = setup.trials;
    let (mut a_hits, mut b_hits) = (0usize, 0usize);
    let mut diffs = Vec::with_capacity(n);
    for trial in 0..n {
        let points = batch(trial)?;
        let k = points[0].len();
        let mut mean = vec![0.0; k];
        for p in &points {
            for (m, x) in mean.iter_mut().zip(p.iter()) {
                *m += x;
            }
        }
        let consensus = argmax(&mean);
        let node = root.indexed("trial", trial);
        let (adaptive, _) = adaptive_aggregate(&points, &setup.aggregation, &mut NoiseStreams::from_tree(&node.child("adaptive")))?;
        let baseline = baseline_aggregate(&points, setup.baseline_sigma, &mut node.child("baseline").rng())?;
        let a = (argmax(&adaptive) == consensus) as i32;
        let b = (argmax(&baseline) == consensus) as i32;
        a_hits += a as usize;
        b_hits += b as usize;
        diffs.push((a - b) as f64);
    }
    let nf = n as f64;
    let difference = diffs.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        diffs.iter().map(|d| (d - difference).powi(2)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let difference_se = (var / nf).sqrt();
    let half = z(0.95) * difference_se;
    Ok(UtilityReport {
        trials: n,
        adaptive_agree: a_hits,
        baseline_agree: b_hits,
        adaptive_rate: a_hits as f64 / nf,
        baseline_rate: b_hits as f64 / nf,
        adaptive_interval: wilson_interval(a_hits, n, 0.95),
        baseline_interval: wilson_interval(b_hits, n, 0.95),
        difference,
        difference_se,
        difference_lower_bound: difference - half,
        difference_upper_bound: difference + half,
        adaptive_not_worse: difference + half >= 0.0,
    })
}

/// The `compare-utility` command. Trial `i` queries the provider at token
/// position `i` with an empty prefix and a uniformly drawn label.
pub fn run_compare(cfg: &RunConfig) -> Result<UtilityReport> {
    let data = cfg.load_data()?;
    let report = report_privacy(cfg, DataShape::from_dataset(&data))?;
    let aggregation = cfg.aggregation(report.sigma1);
    let setup = UtilitySetup {
        aggregation,
        baseline_sigma: matched_baseline_sigma(&aggregation.profile()),
        trials: cfg.trials,
        seed: cfg.seed,
    };
    let provider = cfg.provider.build(cfg.k)?;
    let template = cfg.prompt_template()?;
    let root = SeedTree::new(cfg.seed);
    run_utility_comparison(&setup, |trial| {
        let node = root.indexed("trial-batch", trial);
        let label = &data.labels[rand::Rng::random_range(&mut node.child("label").rng(), 0..data.labels.len())];
        let round = RoundSpec {
            label,
            m: cfg.m,
            n: cfg.n,
            k: cfg.k,
            template: &template,
            prefix: "",
            position: trial,
        };
        next_token_generation(provider.as_ref(), &data.examples, &round, &mut node.child("subsample").rng())
            .map(|b| b.private_vectors)
            .map_err(|source| CliError::InDemo { demo: trial, source })
    })
}
