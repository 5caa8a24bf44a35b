use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{EpochMetrics, MetricsHistory};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "epoch,test_accuracy,test_loss,train_loss,lr";

pub(crate) fn metrics_csv(history: &MetricsHistory) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for e in &history.epochs {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{:.6}",
            e.epoch, e.test_accuracy, e.test_loss, e.train_loss, e.lr
        );
    }
    s
}

/// Per-epoch accuracy/loss curve as CSV, six fractional digits.
pub fn report_metrics(history: &MetricsHistory, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if history.is_empty() {
        return Err(Error::Empty("no epochs to report".into()));
    }
    fs::write(path, metrics_csv(history)).map_err(|e| Error::io(path, e))
}

/// Reads a metrics CSV back; fields not in the file are left zero.
pub fn parse_metrics_csv(text: &str) -> Result<MetricsHistory> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(Error::Format("metrics CSV header".into()));
    }
    let epochs = lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64> {
                f.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Format(format!("metrics row {line:?}")))
            };
            if f.len() != 5 {
                return Err(Error::Format(format!("metrics row {line:?}")));
            }
            Ok(EpochMetrics {
                epoch: f[0].parse().map_err(|_| Error::Format(format!("epoch in {line:?}")))?,
                test_accuracy: num(1)?,
                test_loss: num(2)?,
                train_loss: num(3)?,
                lr: num(4)?,
                iterations: 0,
                subject_accuracy: 0.0,
                wall_seconds: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    Ok(MetricsHistory { epochs })
}
