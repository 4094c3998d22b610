//! A seeded stand-in for a language model.
//!
//! For each `(label, position)` the provider fixes center logits
//! `scale · z`, `z ~ N(0, I)`, over a synthetic vocabulary. The public prompt
//! gets `softmax(center)`. Private subset `i` gets
//! `softmax(center + spread · z_i)`, except that with probability
//! `outlier_fraction` it is replaced by a one-hot vector on the center's
//! `outlier_rank`-th most likely token. Every output is a pure function of
//! `(seed, label, position, subset)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use dpsyn_core::seeding::SeedTree;
use dpsyn_core::simplex::{min_ball_radius_oracle, ProbVector};

use crate::distribution::{restrict_topk, TokenDistribution};
use crate::error::{ProviderError, Result};
use crate::provider::{Subset, TokenProvider, TokenQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub vocab_size: usize,
    pub logit_scale: f64,
    pub spread: f64,
    pub outlier_fraction: f64,
    pub outlier_rank: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            vocab_size: 256,
            logit_scale: 2.5,
            spread: 0.3,
            outlier_fraction: 0.05,
            outlier_rank: 9,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ProviderError::Config(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if self.outlier_rank >= self.vocab_size {
            return bad(format!("outlier_rank {} ≥ vocab_size {}", self.outlier_rank, self.vocab_size));
        }
        if !(self.logit_scale >= 0.0 && self.spread >= 0.0) {
            return bad("logit_scale and spread must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return bad(format!("outlier_fraction {} outside [0, 1]", self.outlier_fraction));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    spec: SyntheticSpec,
    vocab: Vec<String>,
    root: SeedTree,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let hi = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - hi).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl SyntheticProvider {
    pub fn new(spec: SyntheticSpec) -> Result<Self> {
        spec.validate()?;
        let vocab = (0..spec.vocab_size).map(|i| format!(" w{i:03}")).collect();
        let root = SeedTree::new(spec.seed);
        Ok(Self { spec, vocab, root })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn center_logits(&self, label: &str, position: usize) -> Vec<f64> {
        let mut rng = self.root.child("center").child(label).child(position).rng();
        (0..self.spec.vocab_size)
            .map(|_| self.spec.logit_scale * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Vocabulary indices sorted by center probability, ties by index.
    fn center_ranking(center: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..center.len()).collect();
        order.sort_by(|&a, &b| center[b].total_cmp(&center[a]));
        order
    }

    /// Full-vocabulary distribution for one query.
    pub fn distribution(&self, label: &str, position: usize, subset: Subset) -> Vec<f64> {
        let center = self.center_logits(label, position);
        let i = match subset {
            Subset::Public => return softmax(&center),
            Subset::Private(i) => i,
        };
        let mut rng = self.root.child("subset").child(label).child(position).child(i).rng();
        let outlier = rng.random::<f64>() < self.spec.outlier_fraction;
        if outlier {
            let mut v = vec![0.0; center.len()];
            v[Self::center_ranking(&center)[self.spec.outlier_rank]] = 1.0;
            return v;
        }
        let logits: Vec<f64> = center
            .iter()
            .map(|c| c + self.spec.spread * rng.sample::<f64, _>(StandardNormal))
            .collect();
        softmax(&logits)
    }

    /// Private vectors restricted to the public top-`k`, as the aggregator sees them.
    pub fn restricted_vectors(&self, label: &str, position: usize, m: usize, k: usize) -> Result<Vec<ProbVector>> {
        let public = self.token_distribution(label, position, Subset::Public)?;
        let private = (0..m)
            .map(|i| self.token_distribution(label, position, Subset::Private(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(restrict_topk(&public, &private, k)?.private_vectors)
    }

    fn token_distribution(&self, label: &str, position: usize, subset: Subset) -> Result<TokenDistribution> {
        let probs = self.distribution(label, position, subset);
        TokenDistribution::from_probs(self.vocab.iter().cloned().zip(probs).collect())
    }

    /// Mean over `positions` of the 80%-coverage oracle radius of `m`
    /// restricted vectors.
    pub fn mean_oracle_radius(&self, m: usize, k: usize, positions: usize) -> Result<f64> {
        let mut total = 0.0;
        for pos in 0..positions {
            let v = self.restricted_vectors("calibration", pos, m, k)?;
            total += min_ball_radius_oracle(&v, 0.8);
        }
        Ok(total / positions as f64)
    }

    /// Spread whose mean oracle radius is `target`, by bisection over `[0, 4]`.
    ///
    /// Radius grows with the spread for fixed draws, so the search is
    /// deterministic given the rest of the spec.
    pub fn calibrate_spread(spec: &SyntheticSpec, target: f64, m: usize, k: usize, positions: usize) -> Result<f64> {
        let radius_at = |spread: f64| {
            SyntheticProvider::new(SyntheticSpec {
                spread,
                ..spec.clone()
            })?
            .mean_oracle_radius(m, k, positions)
        };
        let (mut lo, mut hi) = (0.0, 4.0);
        if radius_at(hi)? < target {
            return Err(ProviderError::Config(format!("radius {target} is out of reach")));
        }
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if radius_at(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

impl TokenProvider for SyntheticProvider {
    fn next_token(&self, query: &TokenQuery<'_>) -> Result<TokenDistribution> {
        self.token_distribution(query.label, query.position, query.subset)
    }
}
