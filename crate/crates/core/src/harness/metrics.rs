//! Metric files and the small statistics used on them.

use std::io::Write;
use std::path::Path;

use super::eval::MetricRow;
use super::HarnessError;

/// `(mean, 1.96·s/√n)` with the sample standard deviation `s` (ddof 1);
/// the half-width is 0 for fewer than two values.
pub fn ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * var.sqrt() / (n as f64).sqrt())
}

/// Point-wise [`ci95`] across curves of equal length; `None` entries are skipped.
pub fn mean_ci95(curves: &[Vec<Option<f64>>]) -> Vec<Option<(f64, f64)>> {
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|i| {
            let vals: Vec<f64> = curves.iter().filter_map(|c| c.get(i).copied().flatten()).collect();
            (!vals.is_empty()).then(|| ci95(&vals))
        })
        .collect()
}

/// Trailing moving average; early points average what is available and
/// missing values are skipped.
pub fn moving_average(values: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let window = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            let w: Vec<f64> = values[lo..=i].iter().flatten().copied().collect();
            values[i]?;
            Some(w.iter().sum::<f64>() / w.len() as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub values: Vec<Option<f64>>,
    /// False where the value was carried forward from an earlier step.
    pub exact: Vec<bool>,
}

/// Puts a `(step, value)` series on `grid`, carrying the last value forward.
pub fn resample(series: &[(usize, Option<f64>)], grid: &[usize]) -> Resampled {
    let mut values = Vec::with_capacity(grid.len());
    let mut exact = Vec::with_capacity(grid.len());
    let mut j = 0;
    let mut last: Option<(usize, Option<f64>)> = None;
    for &g in grid {
        while j < series.len() && series[j].0 <= g {
            last = Some(series[j]);
            j += 1;
        }
        match last {
            Some((step, v)) => {
                values.push(v);
                exact.push(step == g);
            }
            None => {
                values.push(None);
                exact.push(false);
            }
        }
    }
    Resampled { values, exact }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsFile {
    pub goal_count: usize,
    pub rows: Vec<MetricRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_header(goal_count: usize) -> Vec<String> {
    let mut h: Vec<String> = ["env_step", "mean_success", "success_ci95", "mean_time_to_goal", "time_ci95"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..goal_count).map(|g| format!("goal_{g}")));
    h
}

pub fn metrics_record(row: &MetricRow) -> Vec<String> {
    let mut r = vec![
        row.env_step.to_string(),
        row.mean_success.to_string(),
        row.success_ci95.to_string(),
        fmt_opt(row.mean_time_to_goal),
        fmt_opt(row.time_ci95),
    ];
    r.extend(row.per_goal_success.iter().map(|v| v.to_string()));
    r
}

pub fn write_metrics(path: &Path, goal_count: usize, rows: &[MetricRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(metrics_header(goal_count)).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(metrics_record(row)).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Appends one line to a CSV file, writing `header` first if the file is new.
pub(crate) fn append_csv(path: &Path, header: &[String], record: &[String]) -> Result<(), HarnessError> {
    let fresh = !path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(header).map_err(|e| csv_err(path, e))?;
    }
    w.write_record(record).map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<MetricsFile, HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let goal_count = header.iter().filter(|h| h.starts_with("goal_")).count();
    if header.len() != 5 + goal_count || header.get(0) != Some("env_step") {
        return Err(HarnessError::Config(format!("{}: not a metrics file", path.display())));
    }
    let num = |s: &str| -> Result<f64, HarnessError> {
        s.parse::<f64>()
            .map_err(|e| HarnessError::Config(format!("{}: bad number '{s}': {e}", path.display())))
    };
    let opt = |s: &str| -> Result<Option<f64>, HarnessError> {
        if s.is_empty() {
            Ok(None)
        } else {
            num(s).map(Some)
        }
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        rows.push(MetricRow {
            env_step: f(0)
                .parse()
                .map_err(|e| HarnessError::Config(format!("{}: bad step: {e}", path.display())))?,
            mean_success: num(f(1))?,
            success_ci95: num(f(2))?,
            mean_time_to_goal: opt(f(3))?,
            time_ci95: opt(f(4))?,
            per_goal_success: (0..goal_count).map(|g| num(f(5 + g))).collect::<Result<_, _>>()?,
        });
    }
    Ok(MetricsFile { goal_count, rows })
}

fn csv_err(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::Config(format!("{}: {other:?}", path.display())),
    }
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    let mut f = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))
}
