use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::rng::{GAUSSIAN_SAMPLER, PRNG_ALGORITHM};

/// Version of the report layout, bumped whenever a column or key changes.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// JSON schema every serialized [`ExperimentReport`] validates against.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the {} columns of table {}",
            self.columns.len(),
            self.name
        );
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric column, `None` entries for non-numbers.
    pub fn column_f64(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let j = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[j].as_f64()).collect())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(cell_text))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:e}"),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrngInfo {
    pub algorithm: String,
    pub gaussian_sampler: String,
}

impl Default for PrngInfo {
    fn default() -> Self {
        Self {
            algorithm: PRNG_ALGORITHM.to_string(),
            gaussian_sampler: GAUSSIAN_SAMPLER.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub regime: String,
    /// Every input needed to regenerate the metrics.
    pub config: Value,
    pub prng: PrngInfo,
    /// RFC 3339, UTC.
    pub timestamp: String,
    /// Scalar results.
    pub metrics: BTreeMap<String, Value>,
    /// One row per experiment cell; this is `report.csv`.
    pub table: Table,
    /// Figure-analogue series, each written to `plotdata/<name>.csv`.
    pub plotdata: Vec<Table>,
    /// Published values for side-by-side comparison, when applicable.
    pub reference: Option<Table>,
    pub warnings: Vec<String>,
}

impl ExperimentReport {
    pub fn new(experiment: &str, regime: &str, config: Value, table: Table) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.to_string(),
            regime: regime.to_string(),
            config,
            prng: PrngInfo::default(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            metrics: BTreeMap::new(),
            table,
            plotdata: Vec::new(),
            reference: None,
            warnings: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: &str, value: impl Into<Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }

    pub fn metric_f64(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).and_then(Value::as_f64)
    }

    pub fn plot(&self, name: &str) -> Option<&Table> {
        self.plotdata.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `<out>/<experiment>/<timestamp>/report.{csv,json}` and
    /// `plotdata/*.csv`; returns the run directory. A numeric suffix keeps
    /// runs within the same second apart.
    pub fn write_to(&self, out: &Path) -> Result<PathBuf> {
        let stamp = self.timestamp.replace([':', '-'], "");
        let base = out.join(&self.experiment);
        let mut dir = base.join(&stamp);
        let mut n = 1;
        while dir.exists() {
            dir = base.join(format!("{stamp}-{n}"));
            n += 1;
        }
        let plot_dir = dir.join("plotdata");
        fs::create_dir_all(&plot_dir).map_err(|e| Error::io(&plot_dir, e))?;
        write_file(&dir.join("report.csv"), &self.table.to_csv()?)?;
        write_file(&dir.join("report.json"), &self.to_json()?)?;
        for t in &self.plotdata {
            write_file(&plot_dir.join(format!("{}.csv", t.name)), &t.to_csv()?)?;
        }
        if let Some(r) = &self.reference {
            write_file(&dir.join("reference.csv"), &r.to_csv()?)?;
        }
        Ok(dir)
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(content.as_bytes()).map_err(|e| Error::io(path, e))
}
