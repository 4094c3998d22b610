//! Token-keyed next-token distributions and the public top-K restriction.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use dpsyn_core::simplex::ProbVector;

use crate::error::{ProviderError, Result};

/// A (possibly partial) next-token distribution keyed by token string, in
/// the order the provider listed the tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    entries: Vec<(String, f64)>,
}

impl TokenDistribution {
    pub fn from_probs(entries: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(entries.len());
        for (i, (tok, p)) in entries.iter().enumerate() {
            if !(p.is_finite() && *p >= 0.0) {
                return Err(ProviderError::Response(format!("token {tok:?} has probability {p}")));
            }
            if seen.insert(tok.as_str(), i).is_some() {
                return Err(ProviderError::Response(format!("token {tok:?} listed twice")));
            }
        }
        Ok(Self { entries })
    }

    /// Exponentiates log-probabilities.
    pub fn from_logprobs(entries: Vec<(String, f64)>) -> Result<Self> {
        Self::from_probs(entries.into_iter().map(|(t, lp)| (t, lp.exp())).collect())
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    fn lookup(&self) -> HashMap<&str, f64> {
        self.entries.iter().map(|(t, p)| (t.as_str(), *p)).collect()
    }
}

/// The public support and the private vectors restricted to it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTokenBatch {
    pub support: Vec<String>,
    pub public_vector: ProbVector,
    pub private_vectors: Vec<ProbVector>,
    /// Indices of private vectors with no mass on the support, replaced by uniform.
    pub degenerate: Vec<usize>,
}

impl NextTokenBatch {
    pub fn k(&self) -> usize {
        self.support.len()
    }
}

fn renormalise(raw: Vec<f64>) -> (ProbVector, bool) {
    let mass: f64 = raw.iter().sum();
    if mass > 0.0 && mass.is_finite() {
        let v = raw.into_iter().map(|x| x / mass).collect();
        (ProbVector::new(v).expect("renormalised vector is on the simplex"), false)
    } else {
        (ProbVector::uniform(raw.len()), true)
    }
}

/// Takes the `k` most likely public tokens as the support (ties go to the
/// token listed first), then zeroes every private vector outside it and
/// renormalises over it. Private tokens are matched by string.
///
/// If the public distribution lists fewer than `k` tokens, all of them are kept.
pub fn restrict_topk(public: &TokenDistribution, private: &[TokenDistribution], k: usize) -> Result<NextTokenBatch> {
    if k == 0 {
        return Err(ProviderError::Config("K must be at least 1".into()));
    }
    if public.is_empty() {
        return Err(ProviderError::Response("public distribution is empty".into()));
    }
    let k_eff = k.min(public.len());
    if k_eff < k {
        log::warn!("public distribution lists {} tokens; support shrinks from {k} to {k_eff}", public.len());
    }
    let mut order: Vec<usize> = (0..public.len()).collect();
    // stable sort keeps listing order among equal probabilities
    order.sort_by(|&a, &b| public.entries[b].1.total_cmp(&public.entries[a].1));
    order.truncate(k_eff);
    let support: Vec<String> = order.iter().map(|&i| public.entries[i].0.clone()).collect();

    let (public_vector, _) = renormalise(order.iter().map(|&i| public.entries[i].1).collect());

    let mut private_vectors = Vec::with_capacity(private.len());
    let mut degenerate = Vec::new();
    for (idx, dist) in private.iter().enumerate() {
        let lookup = dist.lookup();
        let raw = support.iter().map(|t| lookup.get(t.as_str()).copied().unwrap_or(0.0)).collect();
        let (v, flagged) = renormalise(raw);
        if flagged {
            degenerate.push(idx);
        }
        private_vectors.push(v);
    }
    Ok(NextTokenBatch {
        support,
        public_vector,
        private_vectors,
        degenerate,
    })
}
