//! Metrics CSV: the durable record of every run.
//!
//! The header is fixed; a schema comment line pins the version. `wall_ms` is
//! reporting-only and excluded from determinism comparisons.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use asi_core::train::ValidationEvent;
use asi_core::{Error, Result};

pub const METRICS_SCHEMA: &str = "# schema: asi-metrics-v1";
pub const CSV_HEADER: &str =
    "method,seed,epoch,optimizer_step,forward_passes,train_loss,val_accuracy,mean_skip,wall_ms";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub method: String,
    pub seed: u64,
    pub epoch: f64,
    pub optimizer_step: u64,
    pub forward_passes: u64,
    pub train_loss: f64,
    pub val_accuracy: f64,
    pub mean_skip: f64,
    pub wall_ms: u64,
}

impl MetricsRow {
    pub fn from_event(method: &str, seed: u64, e: &ValidationEvent) -> Self {
        MetricsRow {
            method: method.to_string(),
            seed,
            epoch: e.epoch,
            optimizer_step: e.optimizer_step,
            forward_passes: e.forward_passes,
            train_loss: e.train_loss,
            val_accuracy: e.val_accuracy,
            mean_skip: e.val_mean_skip,
            wall_ms: e.wall_ms,
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{:.4},{},{},{:.6},{:.6},{:.6},{}",
            self.method,
            self.seed,
            self.epoch,
            self.optimizer_step,
            self.forward_passes,
            self.train_loss,
            self.val_accuracy,
            self.mean_skip,
            self.wall_ms
        )
    }

    fn parse(line: &str, lineno: usize) -> Result<Self> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Format {
                offset: lineno as u64,
                detail: format!("expected 9 columns, got {}", fields.len()),
            });
        }
        let bad = |what: &str| Error::Format {
            offset: lineno as u64,
            detail: format!("unparsable {what}"),
        };
        Ok(MetricsRow {
            method: fields[0].to_string(),
            seed: fields[1].parse().map_err(|_| bad("seed"))?,
            epoch: fields[2].parse().map_err(|_| bad("epoch"))?,
            optimizer_step: fields[3].parse().map_err(|_| bad("optimizer_step"))?,
            forward_passes: fields[4].parse().map_err(|_| bad("forward_passes"))?,
            train_loss: fields[5].parse().map_err(|_| bad("train_loss"))?,
            val_accuracy: fields[6].parse().map_err(|_| bad("val_accuracy"))?,
            mean_skip: fields[7].parse().map_err(|_| bad("mean_skip"))?,
            wall_ms: fields[8].parse().map_err(|_| bad("wall_ms"))?,
        })
    }
}

pub struct MetricsWriter {
    out: BufWriter<File>,
    last_forward_passes: Option<u64>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{METRICS_SCHEMA}")?;
        writeln!(out, "{CSV_HEADER}")?;
        Ok(MetricsWriter { out, last_forward_passes: None })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        if !(0.0..=1.0).contains(&row.val_accuracy) {
            return Err(Error::Contract(format!(
                "val_accuracy {} outside [0,1]",
                row.val_accuracy
            )));
        }
        if let Some(prev) = self.last_forward_passes {
            if row.forward_passes < prev {
                return Err(Error::Contract(format!(
                    "forward_passes decreased: {} -> {}",
                    prev, row.forward_passes
                )));
            }
        }
        self.last_forward_passes = Some(row.forward_passes);
        writeln!(self.out, "{}", row.to_csv_line())?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == METRICS_SCHEMA => {}
        other => {
            return Err(Error::Format {
                offset: 0,
                detail: format!("missing schema line, got {other:?}"),
            })
        }
    }
    match lines.next() {
        Some((_, l)) if l == CSV_HEADER => {}
        other => {
            return Err(Error::Format {
                offset: 1,
                detail: format!("missing header line, got {other:?}"),
            })
        }
    }
    lines.map(|(n, l)| MetricsRow::parse(l, n)).collect()
}

/// 64-bit FNV-1a over raw bytes; identifies a dataset in logs.
pub fn fingerprint(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(fp: u64) -> MetricsRow {
        MetricsRow {
            method: "asi".into(),
            seed: 1,
            epoch: 0.25,
            optimizer_step: 25,
            forward_passes: fp,
            train_loss: 0.123456,
            val_accuracy: 0.5,
            mean_skip: 2.0,
            wall_ms: 10,
        }
    }

    #[test]
    fn round_trip_and_invariants() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let mut w = MetricsWriter::create(&path).unwrap();
        w.append(&row(100)).unwrap();
        w.append(&row(250)).unwrap();
        assert!(w.append(&row(200)).is_err(), "non-monotone forward_passes");
        drop(w);
        let rows = read_metrics(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].forward_passes, 100);
        assert_eq!(rows[1].epoch, 0.25);
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(fingerprint(b"abc"), fingerprint(b"abc"));
        assert_ne!(fingerprint(b"abc"), fingerprint(b"abd"));
    }
}
