//! The provider interface and one round of next-token collection.

use rand::Rng;

use crate::dataset::{partition_subsets, Example};
use crate::distribution::{restrict_topk, NextTokenBatch, TokenDistribution};
use crate::error::{ProviderError, Result};
use crate::template::PromptTemplate;

/// Which prompt a query belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subset {
    /// The instruction-only prompt that fixes the support.
    Public,
    /// The prompt built from private subset `i`.
    Private(usize),
}

impl std::fmt::Display for Subset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Subset::Public => write!(f, "public"),
            Subset::Private(i) => write!(f, "{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TokenQuery<'a> {
    pub prompt: &'a str,
    pub label: &'a str,
    /// Number of tokens generated so far.
    pub position: usize,
    pub subset: Subset,
}

pub trait TokenProvider: Send + Sync {
    /// Next-token distribution for one prompt.
    fn next_token(&self, query: &TokenQuery<'_>) -> Result<TokenDistribution>;

    /// Whether the private queries of one position should be issued concurrently.
    fn concurrent(&self) -> bool {
        false
    }
}

/// Arguments of one next-token collection round.
#[derive(Debug, Clone, Copy)]
pub struct RoundSpec<'a> {
    pub label: &'a str,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub template: &'a PromptTemplate,
    pub prefix: &'a str,
    pub position: usize,
}

fn query(provider: &dyn TokenProvider, spec: &RoundSpec<'_>, prompt: &str, subset: Subset) -> Result<TokenDistribution> {
    provider
        .next_token(&TokenQuery {
            prompt,
            label: spec.label,
            position: spec.position,
            subset,
        })
        .map_err(|e| ProviderError::AtPosition {
            position: spec.position,
            subset: subset.to_string(),
            source: Box::new(e),
        })
}

/// Draws `M` disjoint subsets of size `N`, queries the public prompt and the
/// `M` private prompts, and restricts everything to the public top-`K`.
///
/// All random draws happen before the first query, and results are assembled
/// in subset order whether or not the queries run concurrently.
pub fn next_token_generation<R: Rng + ?Sized>(
    provider: &dyn TokenProvider,
    data: &[Example],
    spec: &RoundSpec<'_>,
    rng: &mut R,
) -> Result<NextTokenBatch> {
    let subsets = partition_subsets(data, spec.label, spec.m, spec.n, rng)?;
    let public_prompt = spec.template.build_prompt(&[], spec.label, spec.prefix);
    let prompts: Vec<String> = subsets
        .iter()
        .map(|s| spec.template.build_prompt(s, spec.label, spec.prefix))
        .collect();

    let public = query(provider, spec, &public_prompt, Subset::Public)?;
    let private: Vec<TokenDistribution> = if provider.concurrent() {
        std::thread::scope(|scope| {
            let handles: Vec<_> = prompts
                .iter()
                .enumerate()
                .map(|(i, p)| scope.spawn(move || query(provider, spec, p, Subset::Private(i))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("provider query panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        prompts
            .iter()
            .enumerate()
            .map(|(i, p)| query(provider, spec, p, Subset::Private(i)))
            .collect::<Result<Vec<_>>>()?
    };
    let batch = restrict_topk(&public, &private, spec.k)?;
    if !batch.degenerate.is_empty() {
        log::warn!(
            "position {}: {} private vectors had no mass on the support",
            spec.position,
            batch.degenerate.len()
        );
    }
    Ok(batch)
}
