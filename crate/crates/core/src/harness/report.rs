use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{HarnessConfig, InstanceFailure, PredictorSpec};
use crate::error::{Error, Result};
use crate::io;
use crate::math::pairwise_sum;
use crate::metrics::MetricResult;

/// One successfully scored instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance_id: String,
    pub category: String,
    pub metrics: MetricResult,
    pub seed: u64,
    /// Subsample Chamfer distance reported by alignment, if it ran.
    pub aligned_cd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdMean {
    pub threshold: f64,
    pub fscore: f64,
}

/// Means over a set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean_cd: f64,
    pub mean_fs: Vec<ThresholdMean>,
}

impl Aggregate {
    /// `None` for zero rows.
    pub fn over(rows: &[&InstanceRow], thresholds: &[f64]) -> Result<Option<Self>> {
        if rows.is_empty() {
            return Ok(None);
        }
        let mean_of = |vals: Vec<f64>| -> Result<f64> {
            let n = vals.len() as f64;
            let m = pairwise_sum(&vals) / n;
            let naive = vals.iter().sum::<f64>() / n;
            if (m - naive).abs() > 1e-12 {
                return Err(Error::Postcondition(format!("aggregate {m} differs from row mean {naive}")));
            }
            Ok(m)
        };
        let mean_cd = mean_of(rows.iter().map(|r| r.metrics.cd).collect())?;
        let mut ts = thresholds.to_vec();
        ts.sort_by(f64::total_cmp);
        let mean_fs = ts
            .iter()
            .map(|&t| {
                let vals = rows
                    .iter()
                    .map(|r| r.metrics.fs(t).ok_or_else(|| Error::Postcondition(format!("row lacks FS@{t}"))))
                    .collect::<Result<Vec<f64>>>()?;
                Ok(ThresholdMean {
                    threshold: t,
                    fscore: mean_of(vals)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Some(Aggregate {
            count: rows.len(),
            mean_cd,
            mean_fs,
        }))
    }

    pub fn fs(&self, threshold: f64) -> Option<f64> {
        self.mean_fs.iter().find(|m| m.threshold == threshold).map(|m| m.fscore)
    }
}

/// Per-instance rows, failures and aggregates for one benchmark run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub engine_version: String,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub generated_at_unix: u64,
    pub config: HarnessConfig,
    pub predictor: PredictorSpec,
    /// Sorted by instance id.
    pub rows: Vec<InstanceRow>,
    /// Sorted by instance id.
    pub failures: Vec<InstanceFailure>,
    pub overall: Option<Aggregate>,
    pub per_category: BTreeMap<String, Aggregate>,
}

fn now_unix() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

/// CSV header label for a threshold: `0.01 -> fs_001`.
pub fn threshold_label(t: f64) -> String {
    let pct = t * 100.0;
    if (pct - pct.round()).abs() < 1e-9 && (0.0..1000.0).contains(&pct) {
        format!("fs_{:03}", pct.round() as u64)
    } else {
        format!("fs_{}", t.to_string().replace('.', "p"))
    }
}

impl EvalReport {
    pub fn new(
        mut rows: Vec<InstanceRow>,
        mut failures: Vec<InstanceFailure>,
        config: HarnessConfig,
        predictor: PredictorSpec,
    ) -> Result<Self> {
        rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        failures.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        let all: Vec<&InstanceRow> = rows.iter().collect();
        let overall = Aggregate::over(&all, &config.thresholds)?;
        let mut by_cat: BTreeMap<String, Vec<&InstanceRow>> = BTreeMap::new();
        for r in &rows {
            by_cat.entry(r.category.clone()).or_default().push(r);
        }
        let mut per_category = BTreeMap::new();
        for (cat, rs) in by_cat {
            if let Some(a) = Aggregate::over(&rs, &config.thresholds)? {
                per_category.insert(cat, a);
            }
        }
        Ok(EvalReport {
            engine_version: env!("CARGO_PKG_VERSION").to_string(),
            generated_at_unix: now_unix(),
            config,
            predictor,
            rows,
            failures,
            overall,
            per_category,
        })
    }

    /// `instance_id,cd,fs_001,fs_002,fs_005,n_points,seed`, one record per
    /// instance sorted by id. Failed instances keep their record with empty
    /// metric fields.
    pub fn to_csv(&self) -> String {
        let mut ts = self.config.thresholds.clone();
        ts.sort_by(f64::total_cmp);
        let mut records: Vec<Vec<String>> = Vec::new();
        for r in &self.rows {
            let mut rec = vec![r.instance_id.clone(), r.metrics.cd.to_string()];
            rec.extend(ts.iter().map(|&t| r.metrics.fs(t).map(|v| v.to_string()).unwrap_or_default()));
            rec.push(r.metrics.n_points.to_string());
            rec.push(r.seed.to_string());
            records.push(rec);
        }
        for f in &self.failures {
            let mut rec = vec![f.instance_id.clone()];
            rec.extend(std::iter::repeat_n(String::new(), ts.len() + 2));
            rec.push(self.config.seed.to_string());
            records.push(rec);
        }
        records.sort_by(|a, b| a[0].cmp(&b[0]));

        let mut header = vec!["instance_id".to_string(), "cd".to_string()];
        header.extend(ts.iter().map(|&t| threshold_label(t)));
        header.extend(["n_points".to_string(), "seed".to_string()]);
        let mut w = csv::Writer::from_writer(Vec::new());
        for rec in std::iter::once(&header).chain(&records) {
            w.write_record(rec).expect("writing to memory cannot fail");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("CSV of UTF-8 fields")
    }

    /// Writes `<stem>.json` and `<stem>.csv`; a `.json` or `.csv` extension
    /// on `path` is replaced. Returns both paths.
    pub fn write(&self, path: &Path) -> Result<(PathBuf, PathBuf)> {
        let stem = match path.extension().and_then(|e| e.to_str()) {
            Some("json" | "csv") => path.with_extension(""),
            _ => path.to_path_buf(),
        };
        let add_ext = |ext: &str| {
            let mut s = stem.clone().into_os_string();
            s.push(".");
            s.push(ext);
            PathBuf::from(s)
        };
        let (json, csv) = (add_ext("json"), add_ext("csv"));
        if let Some(parent) = json.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        io::write_json(&json, self)?;
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        Ok((json, csv))
    }
}
