//! Run configuration.
//!
//! Every field can be set in a flat `key = value` file (blank lines and `#`
//! comments ignored) and overridden by the matching command-line flag
//! (`t_max` ↔ `--t-max`). Both sources feed the same parser,
//! [`RunConfig::from_pairs`].

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dpsyn_core::accountant::AlphaGrid;
use dpsyn_core::aggregate::AggregationConfig;
use dpsyn_providers::dataset::{load_dataset, DataFormat, Dataset};
use dpsyn_providers::http::HttpSpec;
use dpsyn_providers::synthetic::SyntheticSpec;
use dpsyn_providers::template::PromptTemplate;
use dpsyn_providers::ProviderSpec;

use crate::error::{config, CliError, Result};

/// How the subsampling rate is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GammaMode {
    /// `γ = MN / |D|`, composed over all `n_shots · T_max` tokens.
    Whole,
    /// `γ = MN / min label count`, composed over `T_max` tokens: demos with
    /// different labels read disjoint parts of the data.
    PerLabel,
}

impl FromStr for GammaMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "whole" => Ok(Self::Whole),
            "per-label" | "per_label" => Ok(Self::PerLabel),
            _ => Err(format!("unknown gamma mode `{s}` (expected whole or per-label)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusMode {
    /// Brute-force 80%-coverage radius.
    Oracle,
    /// The private radius search with the configured `sigma0`.
    GoodRadius,
}

impl FromStr for RadiusMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "oracle" => Ok(Self::Oracle),
            "goodradius" | "good-radius" => Ok(Self::GoodRadius),
            _ => Err(format!("unknown radius mode `{s}` (expected oracle or goodradius)")),
        }
    }
}

/// Where the projected-mean noise comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSource {
    Sigma1(f64),
    TargetEpsilon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: String,
    pub data: Option<PathBuf>,
    pub data_format: Option<DataFormat>,
    pub labels: Option<Vec<String>>,
    pub template: Option<PathBuf>,
    pub provider: ProviderSpec,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub t_max: usize,
    pub n_shots: usize,
    pub lambda: f64,
    pub t_hat: u32,
    pub mu: f64,
    pub rho: f64,
    pub theta: f64,
    pub sigma0: f64,
    pub sigma1: Option<f64>,
    pub sigma2: f64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub gamma_mode: GammaMode,
    pub alpha_max: u32,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub stop_tokens: Vec<String>,
    pub runs: usize,
    pub trials: usize,
    pub radius_mode: RadiusMode,
    pub dataset_size: Option<u64>,
    pub min_label_count: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: "agnews".into(),
            data: None,
            data_format: None,
            labels: None,
            template: None,
            provider: ProviderSpec::Synthetic(SyntheticSpec::default()),
            m: 10,
            n: 2,
            k: 100,
            t_max: 100,
            n_shots: 4,
            lambda: 0.2,
            t_hat: 1,
            mu: 0.55,
            rho: 0.8,
            theta: 0.1,
            sigma0: 10.0,
            sigma1: None,
            sigma2: 3.0,
            epsilon: None,
            delta: None,
            gamma_mode: GammaMode::Whole,
            alpha_max: 64,
            seed: 0,
            output: None,
            traces: None,
            stop_tokens: Vec::new(),
            runs: 5,
            trials: 500,
            radius_mode: RadiusMode::Oracle,
            dataset_size: None,
            min_label_count: None,
        }
    }
}

/// Parses a flat `key = value` file into ordered pairs.
pub fn parse_config_file(raw: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config(format!("config line {}: expected key = value", i + 1)))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let raw = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_file(&raw)
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| config(format!("`{key}` = `{v}`: {e}")))
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

impl RunConfig {
    /// Applies `pairs` in order on top of the defaults; later pairs win.
    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut merged: BTreeMap<String, String> = BTreeMap::new();
        for (k, v) in pairs {
            merged.insert(k.as_ref().replace('-', "_"), v.as_ref().to_string());
        }
        let mut c = RunConfig::default();
        let mut synthetic = SyntheticSpec::default();
        let mut http = HttpSpec::default();
        let mut provider_kind = "synthetic".to_string();
        for (key, v) in &merged {
            let (key, v) = (key.as_str(), v.as_str());
            match key {
                "task" => c.task = v.to_string(),
                "data" => c.data = Some(PathBuf::from(v)),
                "data_format" => c.data_format = Some(parse(key, v)?),
                "labels" => c.labels = Some(list(v)),
                "template" => c.template = Some(PathBuf::from(v)),
                "provider" => provider_kind = v.to_string(),
                "synthetic_seed" => synthetic.seed = parse(key, v)?,
                "synthetic_vocab" => synthetic.vocab_size = parse(key, v)?,
                "synthetic_scale" => synthetic.logit_scale = parse(key, v)?,
                "synthetic_spread" => synthetic.spread = parse(key, v)?,
                "synthetic_outliers" => synthetic.outlier_fraction = parse(key, v)?,
                "synthetic_outlier_rank" => synthetic.outlier_rank = parse(key, v)?,
                "http_base_url" => http.base_url = v.to_string(),
                "http_model" => http.model = v.to_string(),
                "http_max_logprobs" => http.max_logprobs = parse(key, v)?,
                "http_auth_env" => http.auth_env = Some(v.to_string()),
                "http_timeout" => http.timeout_secs = parse(key, v)?,
                "http_retries" => http.max_retries = parse(key, v)?,
                "http_backoff_ms" => http.backoff_ms = parse(key, v)?,
                "m" => c.m = parse(key, v)?,
                "n" => c.n = parse(key, v)?,
                "k" => c.k = parse(key, v)?,
                "t_max" => c.t_max = parse(key, v)?,
                "n_shots" => c.n_shots = parse(key, v)?,
                "lambda" => c.lambda = parse(key, v)?,
                "t_hat" => c.t_hat = parse(key, v)?,
                "mu" => c.mu = parse(key, v)?,
                "rho" => c.rho = parse(key, v)?,
                "theta" => c.theta = parse(key, v)?,
                "sigma0" => c.sigma0 = parse(key, v)?,
                "sigma1" => c.sigma1 = Some(parse(key, v)?),
                "sigma2" => c.sigma2 = parse(key, v)?,
                "epsilon" => c.epsilon = Some(parse(key, v)?),
                "delta" => c.delta = Some(parse(key, v)?),
                "gamma_mode" => c.gamma_mode = parse(key, v)?,
                "alpha_max" => c.alpha_max = parse(key, v)?,
                "seed" => c.seed = parse(key, v)?,
                "output" => c.output = Some(PathBuf::from(v)),
                "traces" => c.traces = Some(PathBuf::from(v)),
                "stop_tokens" => {
                    c.stop_tokens = serde_json::from_str(v)
                        .map_err(|e| config(format!("`stop_tokens` must be a JSON array of strings: {e}")))?
                }
                "runs" => c.runs = parse(key, v)?,
                "trials" => c.trials = parse(key, v)?,
                "radius_mode" => c.radius_mode = parse(key, v)?,
                "dataset_size" => c.dataset_size = Some(parse(key, v)?),
                "min_label_count" => c.min_label_count = Some(parse(key, v)?),
                other => return Err(config(format!("unknown key `{other}`"))),
            }
        }
        c.provider = match provider_kind.as_str() {
            "synthetic" => ProviderSpec::Synthetic(synthetic),
            "http" => ProviderSpec::Http(http),
            other => return Err(config(format!("unknown provider `{other}` (expected synthetic or http)"))),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma1.is_some() && self.epsilon.is_some() {
            return Err(config("set either sigma1 or epsilon, not both"));
        }
        for (name, v) in [("m", self.m), ("n", self.n), ("k", self.k), ("t_max", self.t_max), ("n_shots", self.n_shots)] {
            if v == 0 {
                return Err(config(format!("`{name}` must be at least 1")));
            }
        }
        if self.alpha_max < 2 {
            return Err(config("`alpha_max` must be at least 2"));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0 && d < 1.0) {
                return Err(config(format!("delta {d} must lie in (0, 1)")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(config(format!("epsilon {e} must be positive")));
            }
        }
        if let Some(s) = self.sigma1 {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(config(format!("sigma1 {s} must be non-negative")));
            }
        }
        self.aggregation(0.0).validate().map_err(|e| config(e.to_string()))
    }

    /// The one configured noise source; errors unless exactly one is set.
    pub fn noise_source(&self) -> Result<NoiseSource> {
        match (self.sigma1, self.epsilon) {
            (Some(s), None) => Ok(NoiseSource::Sigma1(s)),
            (None, Some(e)) => Ok(NoiseSource::TargetEpsilon(e)),
            (Some(_), Some(_)) => Err(config("set either sigma1 or epsilon, not both")),
            (None, None) => Err(config("set sigma1 or a target epsilon")),
        }
    }

    pub fn aggregation(&self, sigma1: f64) -> AggregationConfig {
        AggregationConfig {
            lambda: self.lambda,
            t_hat: self.t_hat,
            mu: self.mu,
            rho: self.rho,
            sigma0: self.sigma0,
            sigma1,
            sigma2: self.sigma2,
            theta: self.theta,
        }
    }

    pub fn alpha_grid(&self) -> AlphaGrid {
        AlphaGrid::range(2, self.alpha_max).expect("alpha_max validated")
    }

    pub fn prompt_template(&self) -> Result<PromptTemplate> {
        match &self.template {
            Some(path) => Ok(PromptTemplate::from_file(path)?),
            None => PromptTemplate::preset(&self.task)
                .ok_or_else(|| config(format!("no built-in template for task `{}`; set `template`", self.task))),
        }
    }

    pub fn load_data(&self) -> Result<Dataset> {
        let path = self.data.as_ref().ok_or_else(|| config("`data` is not set"))?;
        let format = match self.data_format {
            Some(f) => f,
            None => DataFormat::from_path(path)
                .ok_or_else(|| config(format!("cannot infer the format of {}; set `data_format`", path.display())))?,
        };
        let ds = load_dataset(path, format, self.labels.as_deref())?;
        if ds.is_empty() {
            return Err(config(format!("{} holds no examples", path.display())));
        }
        Ok(ds)
    }

    /// Trace path: `traces` if set, else the output path with `.traces.jsonl`.
    pub fn traces_path(&self) -> Option<PathBuf> {
        self.traces
            .clone()
            .or_else(|| self.output.as_ref().map(|o| o.with_extension("traces.jsonl")))
    }
}
