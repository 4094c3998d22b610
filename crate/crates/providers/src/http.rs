//! Client for OpenAI-compatible completion servers that return logprobs.
//!
//! Each query is `POST {base_url}/v1/completions` with
//! `{"model", "prompt", "max_tokens": 1, "logprobs": n}`; the distribution is
//! read from `choices[0].logprobs.top_logprobs[0]`. Tokens the server does
//! not list get probability zero.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::time::Duration;

use crate::distribution::TokenDistribution;
use crate::error::{ProviderError, Result};
use crate::provider::{TokenProvider, TokenQuery};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpSpec {
    pub base_url: String,
    pub model: String,
    /// Largest `logprobs` value the server accepts.
    pub max_logprobs: usize,
    /// Environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub backoff_ms: u64,
}

impl Default for HttpSpec {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000".into(),
            model: "meta-llama/Llama-2-7b-hf".into(),
            max_logprobs: 100,
            auth_env: None,
            timeout_secs: 60.0,
            max_retries: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug)]
pub struct HttpProvider {
    spec: HttpSpec,
    client: reqwest::blocking::Client,
    logprobs: usize,
    token: Option<String>,
}

impl HttpProvider {
    /// `k` is the support size; the request asks for `min(k, max_logprobs)`.
    pub fn new(spec: HttpSpec, k: usize) -> Result<Self> {
        if spec.max_logprobs == 0 || k == 0 {
            return Err(ProviderError::Config("max_logprobs and K must be positive".into()));
        }
        if !(spec.timeout_secs > 0.0 && spec.timeout_secs.is_finite()) {
            return Err(ProviderError::Config(format!("timeout {} must be positive", spec.timeout_secs)));
        }
        let logprobs = k.min(spec.max_logprobs);
        if logprobs < k {
            log::warn!("server caps logprobs at {logprobs}; tokens beyond it in the top-{k} get probability zero");
        }
        let token = match &spec.auth_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| ProviderError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(spec.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            spec,
            client,
            logprobs,
            token,
        })
    }

    pub fn endpoint(&self) -> String {
        format!("{}/v1/completions", self.spec.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> std::result::Result<Value, (bool, ProviderError)> {
        let mut req = self.client.post(self.endpoint()).json(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req
            .send()
            .map_err(|e| (true, ProviderError::Transport(e.to_string())))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| (true, ProviderError::Transport(e.to_string())))?;
        if !status.is_success() {
            let retry = status.is_server_error() || status.as_u16() == 429;
            return Err((
                retry,
                ProviderError::Status {
                    status: status.as_u16(),
                    body: text,
                },
            ));
        }
        serde_json::from_str(&text).map_err(|e| (false, ProviderError::Response(e.to_string())))
    }

    /// Sends one completion request. Transport failures and 429/5xx replies are
    /// retried with exponential backoff.
    pub fn complete(&self, prompt: &str) -> Result<TokenDistribution> {
        let body = json!({
            "model": self.spec.model,
            "prompt": prompt,
            "max_tokens": 1,
            "logprobs": self.logprobs,
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(v) => return parse_completion(&v),
                Err((retry, err)) if retry && attempt < self.spec.max_retries => {
                    let wait = self.spec.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("attempt {} failed ({err}); retrying in {wait} ms", attempt + 1);
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err((_, err)) => return Err(err),
            }
        }
    }
}

/// Reads `choices[0].logprobs.top_logprobs[0]` into a distribution.
pub fn parse_completion(body: &Value) -> Result<TokenDistribution> {
    let top = body
        .pointer("/choices/0/logprobs/top_logprobs/0")
        .and_then(Value::as_object)
        .ok_or_else(|| ProviderError::Response("no choices[0].logprobs.top_logprobs[0] object".into()))?;
    let entries = top
        .iter()
        .map(|(tok, lp)| {
            lp.as_f64()
                .map(|v| (tok.clone(), v))
                .ok_or_else(|| ProviderError::Response(format!("logprob of {tok:?} is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if entries.is_empty() {
        return Err(ProviderError::Response("empty top_logprobs".into()));
    }
    TokenDistribution::from_logprobs(entries)
}

impl TokenProvider for HttpProvider {
    fn next_token(&self, query: &TokenQuery<'_>) -> Result<TokenDistribution> {
        self.complete(query.prompt)
    }

    fn concurrent(&self) -> bool {
        true
    }
}
