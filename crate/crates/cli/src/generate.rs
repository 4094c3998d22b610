//! Demo generation, per-token traces and the noise audit.
//!
//! Random streams are derived from the master seed:
//! `labels` draws the shot labels, and for demo `d`, token `t` the node
//! `demo/d/token/t` owns `subsample` (which examples feed the prompts) and
//! the aggregator's `goodradius`, `mean` and `check` streams.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use dpsyn_core::accountant::binary_search_iterations;
use dpsyn_core::aggregate::{adaptive_aggregate, select_token, AggregationConfig, AggregationTrace};
use dpsyn_core::seeding::{NoiseStreams, SeedTree};
use dpsyn_providers::dataset::Dataset;
use dpsyn_providers::provider::{next_token_generation, RoundSpec, TokenProvider};
use dpsyn_providers::template::PromptTemplate;

use crate::config::RunConfig;
use crate::error::{config, CliError, Result};
use crate::privacy::{report_privacy, DataShape, PrivacyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxTokens,
    StopToken,
}

/// `text` is the concatenated tokens with leading whitespace removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDemo {
    pub label: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub token_count: usize,
    pub trace_id: String,
    pub stop_reason: StopReason,
}

/// Noise events the accountant charges for one token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChargedEvents {
    pub mean_estimations: usize,
    pub coverage_checks: usize,
    pub search_draws: usize,
}

impl ChargedEvents {
    pub fn for_config(agg: &AggregationConfig) -> Self {
        Self {
            mean_estimations: agg.t_hat as usize + 1,
            coverage_checks: agg.t_hat as usize,
            search_draws: 2 * binary_search_iterations(agg.theta) as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub trace_id: String,
    pub demo: usize,
    pub position: usize,
    pub label: String,
    pub token: String,
    pub support_size: usize,
    /// Private vectors with no mass on the support (replaced by uniform).
    pub degenerate_inputs: usize,
    pub aggregation: AggregationTrace,
    pub charged: ChargedEvents,
}

/// Draws `n_shots` distinct labels, in draw order.
pub fn draw_labels<R: Rng + ?Sized>(labels: &[String], n_shots: usize, rng: &mut R) -> Result<Vec<String>> {
    if n_shots > labels.len() {
        return Err(config(format!(
            "n_shots = {n_shots} exceeds the {} labels; labels are drawn without replacement",
            labels.len()
        )));
    }
    Ok(sample(rng, labels.len(), n_shots).iter().map(|i| labels[i].clone()).collect())
}

pub struct Generator<'a> {
    pub provider: &'a dyn TokenProvider,
    pub data: &'a Dataset,
    pub template: PromptTemplate,
    pub aggregation: AggregationConfig,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub t_max: usize,
    pub stop_tokens: Vec<String>,
    pub root: SeedTree,
}

impl Generator<'_> {
    pub fn generate_demo(&self, demo: usize, label: &str) -> Result<(SyntheticDemo, Vec<TokenTrace>)> {
        let node = self.root.indexed("demo", demo);
        let trace_id = format!("demo-{demo}");
        let charged = ChargedEvents::for_config(&self.aggregation);
        let mut prefix = String::new();
        let mut tokens = Vec::new();
        let mut traces = Vec::new();
        let mut stop_reason = StopReason::MaxTokens;
        for position in 0..self.t_max {
            let tok_node = node.indexed("token", position);
            let round = RoundSpec {
                label,
                m: self.m,
                n: self.n,
                k: self.k,
                template: &self.template,
                prefix: &prefix,
                position,
            };
            let batch = next_token_generation(
                self.provider,
                &self.data.examples,
                &round,
                &mut tok_node.child("subsample").rng(),
            )
            .map_err(|source| CliError::InDemo { demo, source })?;
            let mut streams = NoiseStreams::from_tree(&tok_node);
            let (p, aggregation) = adaptive_aggregate(&batch.private_vectors, &self.aggregation, &mut streams)?;
            let token = select_token(&p, &batch.support)?.clone();
            prefix.push_str(&token);
            tokens.push(token.clone());
            traces.push(TokenTrace {
                trace_id: trace_id.clone(),
                demo,
                position,
                label: label.to_string(),
                token: token.clone(),
                support_size: batch.k(),
                degenerate_inputs: batch.degenerate.len(),
                aggregation,
                charged,
            });
            if self.stop_tokens.contains(&token) {
                stop_reason = StopReason::StopToken;
                log::info!("demo {demo} stopped at stop token {token:?} after {} tokens", tokens.len());
                break;
            }
        }
        let demo = SyntheticDemo {
            label: label.to_string(),
            text: prefix.trim_start().to_string(),
            token_count: tokens.len(),
            tokens,
            trace_id,
            stop_reason,
        };
        Ok((demo, traces))
    }

    pub fn generate_shots(&self, n_shots: usize) -> Result<(Vec<SyntheticDemo>, Vec<TokenTrace>)> {
        let labels = draw_labels(&self.data.labels, n_shots, &mut self.root.child("labels").rng())?;
        let mut demos = Vec::with_capacity(labels.len());
        let mut traces = Vec::new();
        for (i, label) in labels.iter().enumerate() {
            let (d, t) = self.generate_demo(i, label)?;
            demos.push(d);
            traces.extend(t);
        }
        Ok((demos, traces))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub tokens: usize,
    pub consumed_mean_estimations: usize,
    pub consumed_coverage_checks: usize,
    pub consumed_search_draws: usize,
    pub charged_mean_estimations: usize,
    pub charged_coverage_checks: usize,
    pub charged_search_draws: usize,
    pub violations: Vec<String>,
}

impl AuditReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every token's consumed noise events against its charge, and each
/// demo's length against `t_max`.
pub fn audit(traces: &[TokenTrace], t_max: usize) -> AuditReport {
    let mut r = AuditReport {
        tokens: traces.len(),
        consumed_mean_estimations: 0,
        consumed_coverage_checks: 0,
        consumed_search_draws: 0,
        charged_mean_estimations: 0,
        charged_coverage_checks: 0,
        charged_search_draws: 0,
        violations: Vec::new(),
    };
    let mut per_demo = std::collections::BTreeMap::<usize, usize>::new();
    for t in traces {
        let a = &t.aggregation;
        let c = t.charged;
        r.consumed_mean_estimations += a.mean_estimations;
        r.consumed_coverage_checks += a.coverage_checks();
        r.consumed_search_draws += a.search_draws();
        r.charged_mean_estimations += c.mean_estimations;
        r.charged_coverage_checks += c.coverage_checks;
        r.charged_search_draws += c.search_draws;
        let at = format!("demo {} token {}", t.demo, t.position);
        if a.mean_estimations > c.mean_estimations {
            r.violations.push(format!("{at}: {} means > {} charged", a.mean_estimations, c.mean_estimations));
        }
        if a.coverage_checks() > c.coverage_checks {
            r.violations.push(format!("{at}: {} checks > {} charged", a.coverage_checks(), c.coverage_checks));
        }
        if a.search_draws() > c.search_draws {
            r.violations.push(format!("{at}: {} search draws > {} charged", a.search_draws(), c.search_draws));
        }
        *per_demo.entry(t.demo).or_default() += 1;
    }
    for (demo, n) in per_demo {
        if n > t_max {
            r.violations.push(format!("demo {demo}: {n} tokens > t_max = {t_max}"));
        }
    }
    r
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for item in items {
        let line = serde_json::to_string(item).expect("records serialise");
        writeln!(f, "{line}").map_err(io)?;
    }
    f.flush().map_err(io)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub demos: Vec<SyntheticDemo>,
    pub traces: Vec<TokenTrace>,
    pub privacy: PrivacyReport,
    pub audit: AuditReport,
}

/// The `generate` command. Demos and traces are written when their paths are set.
pub fn run_generate(cfg: &RunConfig) -> Result<GenerationOutput> {
    let data = cfg.load_data()?;
    let privacy = report_privacy(cfg, DataShape::from_dataset(&data))?;
    let provider = cfg.provider.build(cfg.k)?;
    let generator = Generator {
        provider: provider.as_ref(),
        data: &data,
        template: cfg.prompt_template()?,
        aggregation: cfg.aggregation(privacy.sigma1),
        m: cfg.m,
        n: cfg.n,
        k: cfg.k,
        t_max: cfg.t_max,
        stop_tokens: cfg.stop_tokens.clone(),
        root: SeedTree::new(cfg.seed),
    };
    let (demos, traces) = generator.generate_shots(cfg.n_shots)?;
    let audit = audit(&traces, cfg.t_max);
    if let Some(out) = &cfg.output {
        write_jsonl(out, &demos)?;
    }
    if let Some(path) = cfg.traces_path() {
        write_jsonl(&path, &traces)?;
    }
    Ok(GenerationOutput {
        demos,
        traces,
        privacy,
        audit,
    })
}
