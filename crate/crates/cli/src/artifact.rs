//! Run artifacts: a JSON record with the resolved config and its hash, and
//! an optional CSV table next to it.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;

/// A scalar with its standard error; `stderr = 0` marks an exact value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    pub fn new(name: &str, value: f64, stderr: f64, count: usize) -> Estimate {
        Estimate { name: name.to_string(), value, stderr, count }
    }

    pub fn exact(name: &str, value: f64) -> Estimate {
        Estimate::new(name, value, 0.0, 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Artifact {
    pub command: String,
    pub config: std::collections::BTreeMap<String, String>,
    pub config_hash: String,
    pub version: String,
    pub result: Value,
    pub estimates: Vec<Estimate>,
    pub verdict: Option<String>,
    pub inconclusive: bool,
    /// File name of the CSV table, when there is one.
    pub table: Option<String>,
    #[serde(skip)]
    pub rows: Option<Table>,
}

impl Artifact {
    pub fn new(cfg: &Config, result: Value) -> Artifact {
        Artifact {
            command: cfg.command.clone(),
            config: cfg.values.clone(),
            config_hash: cfg.hash(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            result,
            estimates: Vec::new(),
            verdict: None,
            inconclusive: false,
            table: None,
            rows: None,
        }
    }

    pub fn with_table(mut self, t: Table) -> Artifact {
        self.table = Some(format!("{}.csv", self.stem()));
        self.rows = Some(t);
        self
    }

    pub fn with_estimates(mut self, e: Vec<Estimate>) -> Artifact {
        self.estimates = e;
        self
    }

    pub fn with_verdict(mut self, v: &str, inconclusive: bool) -> Artifact {
        self.verdict = Some(v.to_string());
        self.inconclusive = inconclusive;
        self
    }

    pub fn stem(&self) -> String {
        format!("{}-{}", self.command, &self.config_hash[..12])
    }

    /// The config as it was embedded, rebuilt for hashing.
    pub fn embedded_config(&self) -> Config {
        Config { command: self.command.clone(), values: self.config.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        // `Value` keeps its maps sorted, so this fixes the key order
        let v = serde_json::to_value(self)?;
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }

    /// Writes the JSON and CSV files into `dir` and returns their paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let json = dir.join(format!("{}.json", self.stem()));
        fs::write(&json, self.to_json()?).with_context(|| format!("writing {}", json.display()))?;
        let mut out = vec![json];
        if let (Some(name), Some(t)) = (&self.table, &self.rows) {
            let path = dir.join(name);
            fs::write(&path, csv_bytes(t)?).with_context(|| format!("writing {}", path.display()))?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn read(path: &Path) -> Result<Artifact> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

pub fn csv_bytes(t: &Table) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(&t.header)?;
    for r in &t.rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("flushing csv: {e}"))
}
