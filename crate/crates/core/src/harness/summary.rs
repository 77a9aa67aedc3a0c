//! Final-epoch summaries of a metrics CSV.
//!
//! Each run (experiment, algorithm, λ, η, seed) contributes its final-epoch
//! row. Runs are averaged over seeds per (algorithm, λ, η). Within each
//! (algorithm, λ) the η with the best mean final test accuracy is marked in
//! the `selected_by_test` column; nothing else is filtered.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use super::metrics::{csv_io, csv_writer, fmt_f64, MetricsRow, HEADER, NA};
use crate::error::{Error, Result};

pub const SUMMARY_HEADER: [&str; 7] = [
    "algorithm",
    "lambda",
    "eta",
    "runs",
    "train_accuracy",
    "test_accuracy",
    "selected_by_test",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub lambda: Option<f64>,
    pub eta: f64,
    pub runs: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub selected_by_test: bool,
}

impl SummaryRow {
    pub fn to_record(&self) -> [String; 7] {
        [
            self.algorithm.clone(),
            self.lambda.map_or_else(|| NA.to_string(), fmt_f64),
            fmt_f64(self.eta),
            self.runs.to_string(),
            fmt_f64(self.train_accuracy),
            fmt_f64(self.test_accuracy),
            if self.selected_by_test { "yes" } else { "" }.to_string(),
        ]
    }
}

/// Reads a metrics CSV; errors name the offending 1-based data row.
pub fn read_metrics<R: Read>(input: R) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = reader.headers().map_err(csv_io)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Csv {
            row: 0,
            message: format!(
                "unexpected header `{}`",
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Csv {
            row,
            message: e.to_string(),
        })?;
        rows.push(MetricsRow::from_record(&record, row)?);
    }
    Ok(rows)
}

pub fn summarize(path: &Path) -> Result<Vec<SummaryRow>> {
    Ok(summarize_rows(&read_metrics(std::fs::File::open(path)?)?))
}

/// Last-epoch row of every run, in no particular order.
pub fn final_rows(rows: &[MetricsRow]) -> Vec<&MetricsRow> {
    let mut last: BTreeMap<(&str, &str, u64, u64, u64), &MetricsRow> = BTreeMap::new();
    for r in rows {
        let key = (
            r.experiment_id.as_str(),
            r.algorithm.as_str(),
            r.lambda.map_or(u64::MAX, f64::to_bits),
            r.eta.to_bits(),
            r.seed,
        );
        last.entry(key)
            .and_modify(|cur| {
                if r.epoch > cur.epoch {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    last.into_values().collect()
}

pub fn summarize_rows(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, LambdaKey, EtaKey), Vec<&MetricsRow>> = BTreeMap::new();
    for r in final_rows(rows) {
        groups
            .entry((r.algorithm.clone(), LambdaKey(r.lambda), EtaKey(r.eta)))
            .or_default()
            .push(r);
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((algorithm, lambda, eta), runs)| SummaryRow {
            algorithm,
            lambda: lambda.0,
            eta: eta.0,
            runs: runs.len(),
            train_accuracy: mean(runs.iter().map(|r| r.train_accuracy)),
            test_accuracy: mean(runs.iter().map(|r| r.test_accuracy)),
            selected_by_test: false,
        })
        .collect();

    let mut best: BTreeMap<(String, LambdaKey), usize> = BTreeMap::new();
    for (i, row) in out.iter().enumerate() {
        if row.test_accuracy.is_nan() {
            continue;
        }
        best.entry((row.algorithm.clone(), LambdaKey(row.lambda)))
            .and_modify(|j| {
                if row.test_accuracy > out[*j].test_accuracy {
                    *j = i;
                }
            })
            .or_insert(i);
    }
    for i in best.into_values() {
        out[i].selected_by_test = true;
    }
    out
}

/// Population standard deviation, across λ, of the selected final test
/// accuracy of one algorithm. NaN with no regularized rows.
pub fn test_accuracy_spread(summary: &[SummaryRow], algorithm: &str) -> f64 {
    let values: Vec<f64> = summary
        .iter()
        .filter(|r| r.algorithm == algorithm && r.selected_by_test && r.lambda.is_some())
        .map(|r| r.test_accuracy)
        .collect();
    if values.is_empty() {
        return f64::NAN;
    }
    let m = mean(values.iter().copied());
    mean(values.iter().map(|v| (v - m) * (v - m))).sqrt()
}

pub fn write_summary<W: Write>(summary: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_io)?;
    for row in summary {
        w.write_record(row.to_record()).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Orders a missing λ first, then numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
struct LambdaKey(Option<f64>);

impl Eq for LambdaKey {}

impl PartialOrd for LambdaKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LambdaKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        match (self.0, other.0) {
            (None, None) => std::cmp::Ordering::Equal,
            (None, Some(_)) => std::cmp::Ordering::Less,
            (Some(_), None) => std::cmp::Ordering::Greater,
            (Some(a), Some(b)) => a.total_cmp(&b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EtaKey(f64);

impl Eq for EtaKey {}

impl PartialOrd for EtaKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EtaKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(algorithm: &str, lambda: Option<f64>, eta: f64, epoch: usize, test: f64) -> MetricsRow {
        MetricsRow {
            experiment_id: "e".into(),
            algorithm: algorithm.into(),
            lambda,
            eta,
            seed: 0,
            epoch,
            train_loss: 0.1,
            train_accuracy: 90.0,
            test_accuracy: test,
            constraint_residual: 0.0,
            bregman_from_init: 0.0,
            stop_reason: String::new(),
        }
    }

    #[test]
    fn single_run_single_row() {
        let rows = vec![
            row("sgd", None, 0.1, 1, 50.0),
            row("sgd", None, 0.1, 2, 60.0),
        ];
        let s = summarize_rows(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].test_accuracy, 60.0);
        assert!(s[0].selected_by_test);
    }

    #[test]
    fn order_independent_and_sorted() {
        let rows = vec![
            row("weight_decay", Some(2.0), 0.1, 1, 30.0),
            row("rmd", Some(2.0), 0.1, 5, 70.0),
            row("rmd", Some(0.5), 0.1, 3, 65.0),
            row("rmd", Some(2.0), 0.1, 2, 10.0),
            row("rmd", Some(0.5), 0.01, 3, 66.0),
        ];
        let mut reversed = rows.clone();
        reversed.reverse();
        let a = summarize_rows(&rows);
        assert_eq!(a, summarize_rows(&reversed));
        let keys: Vec<_> = a
            .iter()
            .map(|r| (r.algorithm.as_str(), r.lambda, r.eta))
            .collect();
        assert_eq!(
            keys,
            vec![
                ("rmd", Some(0.5), 0.01),
                ("rmd", Some(0.5), 0.1),
                ("rmd", Some(2.0), 0.1),
                ("weight_decay", Some(2.0), 0.1)
            ]
        );
        assert_eq!(a[2].test_accuracy, 70.0);
        assert!(a[0].selected_by_test && !a[1].selected_by_test);
    }

    #[test]
    fn spread_over_lambda() {
        let rows = vec![
            row("rmd", Some(1.0), 0.1, 1, 70.0),
            row("rmd", Some(2.0), 0.1, 1, 72.0),
            row("weight_decay", Some(1.0), 0.1, 1, 60.0),
            row("weight_decay", Some(2.0), 0.1, 1, 80.0),
        ];
        let s = summarize_rows(&rows);
        assert!((test_accuracy_spread(&s, "rmd") - 1.0).abs() < 1e-12);
        assert!((test_accuracy_spread(&s, "weight_decay") - 10.0).abs() < 1e-12);
        assert!(test_accuracy_spread(&s, "sgd").is_nan());
    }

    #[test]
    fn malformed_row_is_named() {
        let text = format!(
            "{}\ne,rmd,1,0.1,0,1,0.5,90,80,0,0,\ne,rmd,1,0.1,zero,1,0.5,90,80,0,0,\n",
            HEADER.join(",")
        );
        let e = read_metrics(text.as_bytes()).unwrap_err();
        assert!(matches!(e, Error::Csv { row: 2, .. }), "{e}");
        assert!(read_metrics("a,b\n".as_bytes()).is_err());
    }

    #[test]
    fn summary_csv_format() {
        let mut out = Vec::new();
        write_summary(
            &summarize_rows(&[row("sgd", None, 0.1, 1, f64::NAN)]),
            &mut out,
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "algorithm,lambda,eta,runs,train_accuracy,test_accuracy,selected_by_test\nsgd,NA,0.1,1,90,NA,\n"
        );
    }
}
