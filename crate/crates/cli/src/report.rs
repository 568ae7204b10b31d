use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{Command, Format, Result, RunConfig};

pub const SCHEMA_VERSION: &str = "1";

/// One row of a sweep or benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub n: usize,
    pub lambda: f64,
    pub p_q: Option<f64>,
    pub p_k: Option<f64>,
    pub residual: Option<f64>,
    /// Command-specific columns, appended after the fixed ones in CSV.
    #[serde(default)]
    pub extras: BTreeMap<String, Value>,
}

impl TrialRow {
    pub fn new(trial: usize, n: usize, lambda: f64) -> Self {
        Self {
            trial,
            n,
            lambda,
            p_q: None,
            p_k: None,
            residual: None,
            extras: BTreeMap::new(),
        }
    }

    pub fn positions(mut self, p_q: f64, p_k: f64) -> Self {
        self.p_q = Some(p_q);
        self.p_k = Some(p_k);
        self
    }

    pub fn residual(mut self, r: f64) -> Self {
        self.residual = Some(r);
        self
    }

    pub fn extra(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.extras.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub max_residual: Option<f64>,
    pub mean_residual: Option<f64>,
    pub threshold: Option<f64>,
    /// `None` for report-only commands.
    pub passed: Option<bool>,
    #[serde(default)]
    pub ops_per_sec: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: BTreeMap<String, Value>,
    /// Wall-clock time of the whole command. Not deterministic.
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: String,
    pub command: Command,
    pub config: RunConfig,
    pub rows: Vec<TrialRow>,
    pub summary: Summary,
}

impl Report {
    /// Builds a report whose residual statistics are taken from `rows`.
    pub fn from_rows(config: &RunConfig, rows: Vec<TrialRow>) -> Self {
        let residuals: Vec<f64> = rows.iter().filter_map(|r| r.residual).collect();
        let (max_residual, mean_residual) = if residuals.is_empty() {
            (None, None)
        } else {
            (
                Some(residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                Some(residuals.iter().sum::<f64>() / residuals.len() as f64),
            )
        };
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            command: config.command,
            config: config.clone(),
            rows,
            summary: Summary {
                max_residual,
                mean_residual,
                ..Summary::default()
            },
        }
    }

    /// Passes when every residual is at most `threshold`.
    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.summary.threshold = Some(threshold);
        self.summary.passed = Some(self.summary.max_residual.is_some_and(|m| m <= threshold));
        self
    }

    /// Process exit status: nonzero iff a threshold failed.
    pub fn exit_code(&self) -> i32 {
        match self.summary.passed {
            Some(false) => 1,
            _ => 0,
        }
    }

    pub fn write<W: Write>(&self, format: Format, mut out: W) -> Result<()> {
        match format {
            Format::Json => {
                serde_json::to_writer_pretty(&mut out, self)?;
                writeln!(out).map_err(csv::Error::from)?;
            }
            Format::Csv => self.write_csv(out)?,
        }
        Ok(())
    }

    pub fn to_string(&self, format: Format) -> Result<String> {
        let mut buf = Vec::new();
        self.write(format, &mut buf)?;
        Ok(String::from_utf8(buf).expect("reports are UTF-8"))
    }

    /// Columns: `trial, n, lambda, p_q, p_k, residual`, then the extras in
    /// first-seen order.
    fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut extra_keys: Vec<&str> = Vec::new();
        for row in &self.rows {
            for key in row.extras.keys() {
                if !extra_keys.contains(&key.as_str()) {
                    extra_keys.push(key);
                }
            }
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["trial", "n", "lambda", "p_q", "p_k", "residual"];
        header.extend(&extra_keys);
        w.write_record(&header)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for row in &self.rows {
            let mut rec = vec![
                row.trial.to_string(),
                row.n.to_string(),
                row.lambda.to_string(),
                opt(row.p_q),
                opt(row.p_k),
                opt(row.residual),
            ];
            for key in &extra_keys {
                rec.push(match row.extras.get(*key) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                });
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}
