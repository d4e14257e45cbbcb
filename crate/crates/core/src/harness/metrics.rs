//! CSV metrics persistence.
//!
//! One row per round: `t,k_t,loss,grad_norm_sq,coords_sent,bits_sent,test_acc`
//! with `test_acc` empty on rounds without an evaluation. Values use Rust's
//! shortest round-trip float formatting, so a parsed file reproduces the run
//! exactly and reruns of the same seed are byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::engine::RunMetrics;

use super::HarnessError;

pub const CSV_HEADER: &str = "t,k_t,loss,grad_norm_sq,coords_sent,bits_sent,test_acc";

/// The persisted subset of a round record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub t: usize,
    pub k_t: usize,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub coords_sent: u64,
    pub bits_sent: u64,
    pub test_acc: Option<f64>,
}

fn render(metrics: &RunMetrics) -> String {
    let mut out = String::with_capacity(64 * metrics.records.len() + 64);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &metrics.records {
        let acc = r.test_acc.map(|a| a.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.t, r.k_t, r.loss, r.grad_norm_sq, r.coords_sent, r.bits_sent, acc
        ));
    }
    out
}

/// Writes the per-round CSV atomically (temp file in the same directory,
/// then rename).
pub fn write_metrics(metrics: &RunMetrics, path: &Path) -> Result<(), HarnessError> {
    let rendered = render(metrics);
    let tmp = path.with_extension("csv.tmp");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(rendered.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parses a metrics CSV back into rows.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, HarnessError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(HarnessError::Runtime(format!(
                "{}: unexpected header {:?}",
                path.display(),
                other
            )))
        }
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(HarnessError::Runtime(format!(
                "{}:{}: expected 7 fields, got {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let parse_err = |what: &str| {
            HarnessError::Runtime(format!(
                "{}:{}: bad {what} field",
                path.display(),
                lineno + 2
            ))
        };
        rows.push(MetricsRow {
            t: fields[0].parse().map_err(|_| parse_err("t"))?,
            k_t: fields[1].parse().map_err(|_| parse_err("k_t"))?,
            loss: fields[2].parse().map_err(|_| parse_err("loss"))?,
            grad_norm_sq: fields[3].parse().map_err(|_| parse_err("grad_norm_sq"))?,
            coords_sent: fields[4].parse().map_err(|_| parse_err("coords_sent"))?,
            bits_sent: fields[5].parse().map_err(|_| parse_err("bits_sent"))?,
            test_acc: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| parse_err("test_acc"))?)
            },
        });
    }
    Ok(rows)
}

pub fn rows_of(metrics: &RunMetrics) -> Vec<MetricsRow> {
    metrics
        .records
        .iter()
        .map(|r| MetricsRow {
            t: r.t,
            k_t: r.k_t,
            loss: r.loss,
            grad_norm_sq: r.grad_norm_sq,
            coords_sent: r.coords_sent,
            bits_sent: r.bits_sent,
            test_acc: r.test_acc,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{run_training, Compressor, TrainConfig};
    use crate::problems::QuadraticProblem;

    fn small_run() -> RunMetrics {
        let problem = QuadraticProblem::new(16, 1.0, 0.5, 3);
        let cfg = TrainConfig {
            rounds: 12,
            workers: 2,
            eta: 0.25,
            batch_size: 1,
            compressor: Compressor::Adaptopk,
            gamma: 0.5,
            ratio: 4.0,
            seed: 5,
            eval_every: 4,
            ..TrainConfig::default()
        };
        run_training(&cfg, &problem).unwrap()
    }

    #[test]
    fn roundtrip_reproduces_rows_exactly() {
        let metrics = small_run();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.csv");
        write_metrics(&metrics, &path).unwrap();
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows, rows_of(&metrics));
    }

    #[test]
    fn rewrites_are_byte_identical() {
        let metrics = small_run();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        write_metrics(&metrics, &a).unwrap();
        write_metrics(&metrics, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn rejects_foreign_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "nope\n1,2,3\n").unwrap();
        assert!(read_metrics(&path).is_err());
    }
}
