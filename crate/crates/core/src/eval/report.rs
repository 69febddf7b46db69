use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{pearson_r, rmse};
use crate::{Error, Result};

/// Metrics plus raw `(embedded, target)` scatter for one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub config_digest: String,
    pub pearson_r: Option<f64>,
    pub rmse: Option<f64>,
    pub record_count: usize,
    pub metrics: BTreeMap<String, f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub records: Vec<(f64, f64)>,
}

impl ExperimentReport {
    pub fn new(name: impl Into<String>, seed: u64, config_digest: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            seed,
            config_digest: config_digest.into(),
            pearson_r: None,
            rmse: None,
            record_count: 0,
            metrics: BTreeMap::new(),
            series: BTreeMap::new(),
            notes: Vec::new(),
            records: Vec::new(),
        }
    }

    /// Attach scatter records and derive r and RMSE from them. A degenerate
    /// side leaves `pearson_r` empty and adds a note instead of a NaN.
    pub fn with_records(mut self, records: Vec<(f64, f64)>) -> Self {
        let (e, t): (Vec<f64>, Vec<f64>) = records.iter().copied().unzip();
        self.rmse = rmse(&e, &t).ok();
        self.pearson_r = if records.len() > 1 {
            match pearson_r(&e, &t) {
                Ok(r) => Some(r),
                Err(err) => {
                    self.notes.push(format!("pearson_r undefined: {err}"));
                    None
                }
            }
        } else {
            None
        };
        self.record_count = records.len();
        self.records = records;
        self
    }

    pub fn set_metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    pub fn metric(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "embedded,target")?;
        for (e, t) in &self.records {
            writeln!(w, "{e:?},{t:?}")?;
        }
        Ok(())
    }

    /// Writes `<name>.json` and `<name>.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let json = dir.join(format!("{}.json", self.name));
        let csv = dir.join(format!("{}.csv", self.name));
        std::fs::write(&json, self.to_json()?)?;
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(&csv)?))?;
        Ok((json, csv))
    }

    /// Reload a saved report, scatter included.
    pub fn load(dir: impl AsRef<Path>, name: &str) -> Result<Self> {
        let dir = dir.as_ref();
        let mut report: Self = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{name}.json")))?)?;
        let csv = std::fs::read_to_string(dir.join(format!("{name}.csv")))?;
        for line in csv.lines().skip(1) {
            let (e, t) = line.split_once(',').ok_or_else(|| Error::Format(format!("bad scatter row {line:?}")))?;
            let parse = |s: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad number {s:?}")));
            report.records.push((parse(e)?, parse(t)?));
        }
        if report.records.len() != report.record_count {
            return Err(Error::Format("scatter row count does not match the report".into()));
        }
        Ok(report)
    }
}
