//! Report envelope and the output directory writer.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::ScenarioConfig;
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub experiment: &'static str,
    pub checks: Vec<Check>,
    pub results: Value,
}

impl Report {
    pub fn new(experiment: &'static str) -> Self {
        Report {
            experiment,
            checks: Vec::new(),
            results: json!({}),
        }
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self, hash: &str, seed: u64) -> Value {
        json!({
            "experiment": self.experiment,
            "config_hash": hash,
            "seed": seed,
            "passed": self.passed(),
            "checks": self.checks,
            "results": self.results,
        })
    }
}

/// Writes files into one experiment directory, stamping each with the config hash and seed.
pub struct Output {
    pub dir: PathBuf,
    pub hash: String,
    pub seed: u64,
}

impl Output {
    pub fn new(dir: &Path, cfg: &ScenarioConfig) -> CliResult<Output> {
        std::fs::create_dir_all(dir)?;
        Ok(Output {
            dir: dir.to_path_buf(),
            hash: cfg.hash(),
            seed: cfg.seed,
        })
    }

    /// The line embedded in CSV and trajectory files.
    pub fn provenance(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json(&self, name: &str, value: &Value) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    /// Writes the effective configuration next to the reports.
    pub fn write_config(&self, cfg: &ScenarioConfig) -> CliResult<()> {
        self.write_json(
            "config.json",
            &json!({ "config_hash": self.hash, "seed": self.seed, "config": cfg }),
        )
    }

    pub fn write_report(&self, report: &Report) -> CliResult<()> {
        self.write_json("report.json", &report.to_json(&self.hash, self.seed))
    }

    /// CSV with a leading `# config_hash=… seed=…` line. Numbers use 17 significant digits.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> CliResult<()> {
        let mut text = format!("# {}\n{}\n", self.provenance(), header.join(","));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(text, "{}", cells.join(",")).expect("write to string");
        }
        std::fs::write(self.path(name), text)?;
        Ok(())
    }

    /// Writes an already formatted CSV body (header included) behind the provenance line.
    pub fn write_csv_text(&self, name: &str, body: &str) -> CliResult<()> {
        std::fs::write(self.path(name), format!("# {}\n{body}", self.provenance()))?;
        Ok(())
    }
}
