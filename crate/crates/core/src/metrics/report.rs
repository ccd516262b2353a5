use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{read_wav, AudioBuffer};

use super::{f0rmse, lrmsd, mstft, MetricsError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mstft: f64,
    pub lrmsd: f64,
    pub f0rmse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub output: PathBuf,
    pub ground_truth: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub index: usize,
    pub output: PathBuf,
    pub ground_truth: PathBuf,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean over successful rows with 95% normal-approximation half-widths.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub failed: usize,
    pub mean: Metrics,
    pub ci95: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    pub fn from_rows(rows: Vec<MetricRow>) -> Self {
        let ok: Vec<Metrics> = rows.iter().filter_map(|r| r.metrics).collect();
        let n = ok.len();
        let stat = |f: fn(&Metrics) -> f64| -> (f64, f64) {
            if n == 0 {
                return (0.0, 0.0);
            }
            let mean = ok.iter().map(f).sum::<f64>() / n as f64;
            if n < 2 {
                return (mean, 0.0);
            }
            let var = ok.iter().map(|m| (f(m) - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
        };
        let (ms, ms_ci) = stat(|m| m.mstft);
        let (lr, lr_ci) = stat(|m| m.lrmsd);
        let (f0, f0_ci) = stat(|m| m.f0rmse);
        let aggregate = Aggregate {
            count: n,
            failed: rows.len() - n,
            mean: Metrics {
                mstft: ms,
                lrmsd: lr,
                f0rmse: f0,
            },
            ci95: Metrics {
                mstft: ms_ci,
                lrmsd: lr_ci,
                f0rmse: f0_ci,
            },
        };
        Self { rows, aggregate }
    }

    /// `rows.jsonl` plus `summary.json` under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), MetricsError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| MetricsError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let rows_path = dir.join("rows.jsonl");
        let mut w = BufWriter::new(fs::File::create(&rows_path).map_err(io(&rows_path))?);
        for row in &self.rows {
            let line = serde_json::to_string(row).expect("row serializes");
            writeln!(w, "{line}").map_err(io(&rows_path))?;
        }
        w.flush().map_err(io(&rows_path))?;
        let summary_path = dir.join("summary.json");
        let summary = serde_json::to_string_pretty(&self.aggregate).expect("summary serializes");
        fs::write(&summary_path, summary + "\n").map_err(io(&summary_path))?;
        Ok(())
    }
}

pub fn evaluate_buffers(output: &AudioBuffer, ground_truth: &AudioBuffer) -> Result<Metrics, MetricsError> {
    Ok(Metrics {
        mstft: mstft(output, ground_truth)?,
        lrmsd: lrmsd(output, ground_truth)?,
        f0rmse: f0rmse(output, ground_truth)?,
    })
}

fn evaluate_files(pair: &EvalPair) -> Result<Metrics, MetricsError> {
    let out = read_wav(&pair.output)?;
    let gt = read_wav(&pair.ground_truth)?;
    evaluate_buffers(&out, &gt)
}

/// Score every pair in parallel. Row failures are recorded in the report
/// rather than aborting; rows keep the input order.
pub fn evaluate_pairs(pairs: &[EvalPair], out_dir: Option<&Path>) -> Result<MetricReport, MetricsError> {
    let rows: Vec<MetricRow> = pairs
        .par_iter()
        .enumerate()
        .map(|(index, pair)| {
            let result = evaluate_files(pair);
            if let Err(e) = &result {
                log::warn!("pair {index}: {e}");
            }
            MetricRow {
                index,
                output: pair.output.clone(),
                ground_truth: pair.ground_truth.clone(),
                error: result.as_ref().err().map(|e| e.to_string()),
                metrics: result.ok(),
            }
        })
        .collect();
    let report = MetricReport::from_rows(rows);
    if let Some(dir) = out_dir {
        report.write(dir)?;
    }
    Ok(report)
}

pub fn write_csv(report: &MetricReport, path: &Path) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "output", "ground_truth", "mstft", "lrmsd", "f0rmse", "error"])?;
    for row in &report.rows {
        let num = |f: fn(&Metrics) -> f64| row.metrics.as_ref().map(|m| f(m).to_string()).unwrap_or_default();
        w.write_record([
            row.index.to_string(),
            row.output.display().to_string(),
            row.ground_truth.display().to_string(),
            num(|m| m.mstft),
            num(|m| m.lrmsd),
            num(|m| m.f0rmse),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(())
}
