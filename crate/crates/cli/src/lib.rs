//! Invariant sweeps, equivalence checks and throughput benchmarks for the
//! `rollpe` kernels, with JSON/CSV reports.

pub mod bench;
pub mod commands;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use rollpe::PeError;

pub use report::{Report, Summary, TrialRow, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Kernel(#[from] PeError),

    #[error("cannot write report to {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    EquivarianceReport,
    RopeEquivalence,
    MultiplexWitness,
    GradCheck,
    Bench,
    AttentionDemo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Parser, Serialize, Deserialize)]
#[command(
    name = "rollpe",
    version,
    about = "Roll/RoPE positional encoding sweeps and benchmarks"
)]
pub struct RunConfig {
    #[arg(long, value_enum)]
    pub command: Command,

    /// Vector (head) dimension.
    #[arg(long, default_value_t = 16)]
    pub n: usize,

    /// Tokens per attention batch.
    #[arg(long, default_value_t = 8)]
    pub t: usize,

    /// Multiplex wave count.
    #[arg(long = "w", default_value_t = 2)]
    pub waves: usize,

    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Trials per sweep; search budget for multiplex-witness; iterations per
    /// sample for bench.
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,

    /// Report destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Replaces the head dimension in the `sqrt(d)` normalizer.
    #[arg(long)]
    pub d_override: Option<f64>,

    /// Timed samples per benchmark; the median is reported.
    #[arg(long, default_value_t = 5)]
    pub bench_samples: usize,

    /// Untimed iterations before sampling.
    #[arg(long, default_value_t = 100)]
    pub bench_warmup: usize,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            n: 16,
            t: 8,
            waves: 2,
            lambda: 1.0,
            seed: 0,
            trials: 1000,
            out: None,
            format: Format::Json,
            d_override: None,
            bench_samples: 5,
            bench_warmup: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.n == 0 || self.t == 0 {
            return fail("n and t must be positive".into());
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return fail(format!("lambda must be positive, got {}", self.lambda));
        }
        if let Some(d) = self.d_override {
            if !(d.is_finite() && d > 0.0) {
                return fail(format!("d-override must be positive, got {d}"));
            }
        }
        match self.command {
            Command::MultiplexWitness if self.n < 3 || self.waves == 0 => {
                fail("multiplex-witness needs n >= 3 and w >= 1".into())
            }
            Command::GradCheck | Command::AttentionDemo | Command::Bench
                if !self.n.is_multiple_of(2) =>
            {
                fail(format!(
                    "{:?} includes RoPE, which needs an even n (got {})",
                    self.command, self.n
                ))
            }
            Command::GradCheck | Command::AttentionDemo if self.waves == 0 => {
                fail("w must be at least 1".into())
            }
            Command::AttentionDemo if self.t > 256 => {
                fail(format!("attention-demo needs t <= 256, got {}", self.t))
            }
            Command::Bench if self.bench_samples == 0 => {
                fail("bench-samples must be at least 1".into())
            }
            _ => Ok(()),
        }
    }

    /// The `d` used in `sqrt(d)`.
    pub fn scale_dim(&self) -> f64 {
        self.d_override.unwrap_or(self.n as f64)
    }
}

/// Independent RNG stream for trial `index`, so sweeps can run in any order.
pub fn trial_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Runs the configured command and writes the report to `config.out` if set.
pub fn run(config: &RunConfig) -> Result<Report> {
    let report = execute(config)?;
    if let Some(path) = &config.out {
        let file = std::fs::File::create(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        report.write(config.format, std::io::BufWriter::new(file))?;
    }
    Ok(report)
}

/// Runs the configured command without touching the filesystem.
pub fn execute(config: &RunConfig) -> Result<Report> {
    config.validate()?;
    let started = std::time::Instant::now();
    let mut report = match config.command {
        Command::EquivarianceReport => commands::equivariance_report(config)?,
        Command::RopeEquivalence => commands::rope_equivalence(config)?,
        Command::MultiplexWitness => commands::multiplex_witness(config)?,
        Command::GradCheck => commands::grad_check(config)?,
        Command::Bench => bench::run_bench(config)?,
        Command::AttentionDemo => commands::attention_demo(config)?,
    };
    report.summary.elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}
