//! Report files: the run JSON, Table-1-shaped CSVs and the timing-free fingerprint.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{ComparisonTable, CvResult, HarnessConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Object keys holding wall-clock measurements; dropped before hashing.
pub const TIMING_KEYS: [&str; 2] = ["wall_time", "timing"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub schema: u32,
    pub lder: String,
    pub lder_core: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions {
            schema: SCHEMA_VERSION,
            lder: env!("CARGO_PKG_VERSION").to_string(),
            lder_core: lder_core::VERSION.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub command: String,
    pub versions: Versions,
    pub config: HarnessConfig,
    pub table: ComparisonTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub command: String,
    pub versions: Versions,
    pub config: HarnessConfig,
    pub result: CvResult,
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| !TIMING_KEYS.contains(&k.as_str()));
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

/// SHA-256 (hex) of the compact JSON of `report` with all timing fields removed.
pub fn fingerprint<T: Serialize>(report: &T) -> Result<String> {
    let mut v = serde_json::to_value(report)?;
    strip_timing(&mut v);
    let bytes = serde_json::to_vec(&v)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:e}"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(format!("csv write: {e}"))
}

/// `dataset,instances,features,<t>_mape_mean,<t>_mape_std,…`; undefined cells are empty.
pub fn table1_records(table: &ComparisonTable) -> Vec<Vec<String>> {
    let mut header = vec!["dataset".to_string(), "instances".into(), "features".into()];
    for t in &table.trainers {
        header.push(format!("{t}_mape_mean"));
        header.push(format!("{t}_mape_std"));
    }
    let num = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    let mut out = vec![header];
    for r in &table.rows {
        let mut rec = vec![r.dataset.clone(), r.n_samples.to_string(), r.n_features.to_string()];
        for c in &r.cells {
            rec.push(num(c.mape_mean));
            rec.push(num(c.mape_std));
        }
        out.push(rec);
    }
    out
}

/// `dataset,<t>,…` with the min-max normalized mean MAPE.
pub fn normalized_records(table: &ComparisonTable) -> Vec<Vec<String>> {
    let mut header = vec!["dataset".to_string()];
    header.extend(table.trainers.iter().map(|t| t.to_string()));
    let mut out = vec![header];
    for r in &table.rows {
        let mut rec = vec![r.dataset.clone()];
        rec.extend(r.normalized.iter().map(|v| v.map_or_else(String::new, |x| x.to_string())));
        out.push(rec);
    }
    out
}

pub fn write_records(path: &Path, records: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in records {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Human-readable table of `mean ± std` MAPE, the normalized medians,
/// timings and the signed-rank tests.
pub fn format_table(table: &ComparisonTable) -> String {
    let mut head = vec!["dataset (m,n)".to_string()];
    head.extend(table.trainers.iter().map(|t| t.label().to_string()));
    let mut lines = vec![head];
    for r in &table.rows {
        let mut line = vec![format!("{} ({},{})", r.dataset, r.n_samples, r.n_features)];
        for c in &r.cells {
            let cell = match (c.mape_mean, c.mape_std) {
                (Some(m), Some(s)) => format!("{m:.4} ± {s:.4}"),
                _ if c.partial => "partial".to_string(),
                _ => "undefined".to_string(),
            };
            line.push(cell);
        }
        lines.push(line);
    }
    let mut med = vec!["median normalized".to_string()];
    med.extend(table.median_normalized.iter().map(|v| v.map_or("-".into(), |x| format!("{x:.4}"))));
    lines.push(med);
    let mut time = vec!["mean fold seconds".to_string()];
    time.extend(table.timing.iter().map(|t| format!("{:.3}", t.mean_fold_seconds)));
    lines.push(time);

    let widths: Vec<usize> = (0..lines[0].len())
        .map(|j| lines.iter().map(|l| l[j].chars().count()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for (i, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (c, w))| {
                let pad = w - c.chars().count();
                if j == 0 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect();
        s.push_str(cells.join("  ").trim_end());
        s.push('\n');
        if i == 0 || i == table.rows.len() {
            s.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            s.push('\n');
        }
    }
    for w in &table.wilcoxon {
        match (w.w, w.p_two_sided) {
            (Some(stat), Some(p)) => s.push_str(&format!(
                "wilcoxon {} vs {}: n={} W={} p={:.4}{}\n",
                w.a,
                w.b,
                w.n_pairs,
                stat,
                p,
                if w.degenerate == Some(true) { " (all differences zero)" } else { "" }
            )),
            _ => s.push_str(&format!(
                "wilcoxon {} vs {}: not run ({})\n",
                w.a,
                w.b,
                w.note.as_deref().unwrap_or("no result")
            )),
        }
    }
    s
}

/// One line per fold plus the aggregate.
pub fn format_cv(r: &CvResult) -> String {
    let mut s = String::new();
    for f in &r.folds {
        match &f.error {
            Some(e) => s.push_str(&format!("fold {}: failed: {e}\n", f.fold)),
            None => s.push_str(&format!(
                "fold {}: mape={} mse={} ({} iterations, {})\n",
                f.fold,
                fmt_opt(f.mape),
                fmt_opt(f.mse),
                f.iterations,
                f.termination.as_deref().unwrap_or("-")
            )),
        }
    }
    s.push_str(&format!(
        "{} on {}: mape {} ± {}, mse {} ± {}{}\n",
        r.trainer,
        r.dataset,
        fmt_opt(r.mape_mean),
        fmt_opt(r.mape_std),
        fmt_opt(r.mse_mean),
        fmt_opt(r.mse_std),
        if r.partial { " (partial)" } else { "" }
    ));
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
