//! Sources of private next-token distributions: datasets, prompt templates,
//! top-K support restriction, and model providers (a seeded synthetic model
//! and an OpenAI-compatible HTTP client).

mod error;

pub mod dataset;
pub mod distribution;
pub mod http;
pub mod provider;
pub mod synthetic;
pub mod template;

pub use error::{ProviderError, Result};

use serde::{Deserialize, Serialize};

/// Which provider to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderSpec {
    Synthetic(synthetic::SyntheticSpec),
    Http(http::HttpSpec),
}

impl ProviderSpec {
    /// Builds the provider for support size `k`.
    pub fn build(&self, k: usize) -> Result<Box<dyn provider::TokenProvider>> {
        Ok(match self {
            ProviderSpec::Synthetic(s) => Box::new(synthetic::SyntheticProvider::new(s.clone())?),
            ProviderSpec::Http(h) => Box::new(http::HttpProvider::new(h.clone(), k)?),
        })
    }
}
