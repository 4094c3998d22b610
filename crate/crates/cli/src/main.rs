use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dpsyn::config::{read_config_file, RunConfig};
use dpsyn::privacy::{report_privacy, DataShape};
use dpsyn::{generate, measure, utility, CliError};

#[derive(Parser)]
#[command(name = "dpsyn", version, about = "Differentially private few-shot demonstration synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic demonstrations and per-token traces.
    Generate(Common),
    /// Account a configuration without generating anything.
    ReportPrivacy(Common),
    /// Find the smallest sigma1 meeting the target epsilon.
    Calibrate(Common),
    /// Measure cluster radii of the private next-token vectors.
    MeasureRadius(Common),
    /// Compare adaptive and baseline aggregation at matched privacy.
    CompareUtility(Common),
}

macro_rules! overrides {
    ($($field:ident),* $(,)?) => {
        /// Per-key overrides; each takes precedence over the config file.
        #[derive(Args, Default)]
        struct Overrides {
            $(
                #[arg(long, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl Overrides {
            fn pairs(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field).to_string(), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

overrides!(
    task, data, data_format, labels, template, provider, synthetic_seed, synthetic_vocab, synthetic_scale,
    synthetic_spread, synthetic_outliers, synthetic_outlier_rank, http_base_url, http_model, http_max_logprobs,
    http_auth_env, http_timeout, http_retries, http_backoff_ms, m, n, k, t_max, n_shots, lambda, t_hat, mu, rho,
    theta, sigma0, sigma1, sigma2, epsilon, delta, gamma_mode, alpha_max, seed, output, traces, stop_tokens, runs,
    trials, radius_mode, dataset_size, min_label_count,
);

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

impl Common {
    fn load(&self) -> dpsyn::Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(path) => read_config_file(path)?,
            None => Vec::new(),
        };
        pairs.extend(self.overrides.pairs());
        RunConfig::from_pairs(pairs)
    }
}

#[derive(Serialize)]
struct GenerateSummary<'a> {
    demos: &'a [generate::SyntheticDemo],
    privacy: &'a dpsyn::privacy::PrivacyReport,
    audit: &'a generate::AuditReport,
    output: Option<PathBuf>,
    traces: Option<PathBuf>,
}

fn print<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("reports serialise"));
}

fn run(cli: Cli) -> dpsyn::Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.load()?;
            let out = generate::run_generate(&cfg)?;
            print(&GenerateSummary {
                demos: &out.demos,
                privacy: &out.privacy,
                audit: &out.audit,
                output: cfg.output.clone(),
                traces: cfg.traces_path(),
            });
            if !out.audit.ok() {
                log::warn!("trace audit found inconsistencies");
            }
        }
        Command::ReportPrivacy(c) => {
            let cfg = c.load()?;
            print(&report_privacy(&cfg, DataShape::resolve(&cfg)?)?);
        }
        Command::Calibrate(c) => {
            let cfg = c.load()?;
            if cfg.epsilon.is_none() {
                return Err(CliError::Config("calibrate needs a target `epsilon`".into()));
            }
            print(&report_privacy(&cfg, DataShape::resolve(&cfg)?)?);
        }
        Command::MeasureRadius(c) => print(&measure::run_measure(&c.load()?)?),
        Command::CompareUtility(c) => print(&utility::run_compare(&c.load()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
