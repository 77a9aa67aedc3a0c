//! Metrics rows and their CSV encoding.
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! runs give equal bytes. NaN (no test set, aborted runs) and a missing λ are
//! written as `NA`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::optimizer::{Algorithm, EpochMetrics};

pub const HEADER: [&str; 12] = [
    "experiment_id",
    "algorithm",
    "lambda",
    "eta",
    "seed",
    "epoch",
    "train_loss",
    "train_accuracy",
    "test_accuracy",
    "constraint_residual",
    "bregman_from_init",
    "stop_reason",
];

pub const NA: &str = "NA";

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub experiment_id: String,
    pub algorithm: String,
    pub lambda: Option<f64>,
    pub eta: f64,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub constraint_residual: f64,
    pub bregman_from_init: f64,
    /// Empty except on a run's final row.
    pub stop_reason: String,
}

impl MetricsRow {
    pub fn from_epoch(
        experiment_id: &str,
        algorithm: Algorithm,
        lambda: Option<f64>,
        eta: f64,
        seed: u64,
        m: &EpochMetrics,
    ) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            algorithm: algorithm.name().to_string(),
            lambda,
            eta,
            seed,
            epoch: m.epoch,
            train_loss: m.train_loss,
            train_accuracy: m.train_accuracy,
            test_accuracy: m.test_accuracy,
            constraint_residual: m.constraint_residual,
            bregman_from_init: m.bregman_from_init,
            stop_reason: m
                .stop_reason
                .map(|r| r.as_str().to_string())
                .unwrap_or_default(),
        }
    }

    pub fn is_final(&self) -> bool {
        !self.stop_reason.is_empty()
    }

    pub fn to_record(&self) -> [String; 12] {
        [
            self.experiment_id.clone(),
            self.algorithm.clone(),
            self.lambda.map_or_else(|| NA.to_string(), fmt_f64),
            fmt_f64(self.eta),
            self.seed.to_string(),
            self.epoch.to_string(),
            fmt_f64(self.train_loss),
            fmt_f64(self.train_accuracy),
            fmt_f64(self.test_accuracy),
            fmt_f64(self.constraint_residual),
            fmt_f64(self.bregman_from_init),
            self.stop_reason.clone(),
        ]
    }

    /// Parses a data record; `row` is the 1-based data row number used in
    /// errors.
    pub fn from_record(record: &csv::StringRecord, row: usize) -> Result<Self> {
        let bad = |message: String| Error::Csv { row, message };
        if record.len() != HEADER.len() {
            return Err(bad(format!(
                "expected {} fields, found {}",
                HEADER.len(),
                record.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            parse_f64(&record[i]).map_err(|m| bad(format!("{}: {m}", HEADER[i])))
        };
        let int = |i: usize| -> Result<u64> {
            record[i]
                .parse()
                .map_err(|_| bad(format!("{}: not an integer: `{}`", HEADER[i], &record[i])))
        };
        let lambda = if &record[2] == NA {
            None
        } else {
            Some(num(2)?)
        };
        Ok(Self {
            experiment_id: record[0].to_string(),
            algorithm: record[1].to_string(),
            lambda,
            eta: num(3)?,
            seed: int(4)?,
            epoch: int(5)? as usize,
            train_loss: num(6)?,
            train_accuracy: num(7)?,
            test_accuracy: num(8)?,
            constraint_residual: num(9)?,
            bregman_from_init: num(10)?,
            stop_reason: record[11].to_string(),
        })
    }
}

pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        NA.to_string()
    } else {
        v.to_string()
    }
}

pub fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    if s == NA {
        Ok(f64::NAN)
    } else {
        s.parse().map_err(|_| format!("not a number: `{s}`"))
    }
}

/// LF-terminated CSV writer.
pub fn csv_writer<W: Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(inner)
}

pub fn write_header<W: Write>(w: &mut csv::Writer<W>) -> Result<()> {
    w.write_record(HEADER).map_err(csv_io)
}

pub fn write_row<W: Write>(w: &mut csv::Writer<W>, row: &MetricsRow) -> Result<()> {
    w.write_record(row.to_record()).map_err(csv_io)
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Csv {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}
