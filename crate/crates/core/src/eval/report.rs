use std::fmt::Write as _;
use std::io;

use super::{order_free_mean, NOut};

/// Outcome of one seed of one (task, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub seed: u64,
    /// `None` when the run failed.
    pub mjc: Option<f64>,
    pub error: Option<String>,
    pub wall_clock_s: f64,
}

impl RunResult {
    pub fn ok(seed: u64, mjc: f64, wall_clock_s: f64) -> Self {
        RunResult {
            seed,
            mjc: Some(mjc),
            error: None,
            wall_clock_s,
        }
    }

    pub fn failed(seed: u64, error: String, wall_clock_s: f64) -> Self {
        RunResult {
            seed,
            mjc: None,
            error: Some(error),
            wall_clock_s,
        }
    }
}

/// MJC over several seeds of one (task, method) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub task: String,
    pub method: String,
    pub n_out: NOut,
    /// Sorted by seed.
    pub runs: Vec<RunResult>,
    /// Over the successful runs; `None` if every run failed.
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: Option<f64>,
}

impl MetricsReport {
    pub fn from_runs(task: &str, method: &str, n_out: NOut, mut runs: Vec<RunResult>) -> Self {
        runs.sort_by_key(|r| r.seed);
        let values: Vec<f64> = runs.iter().filter_map(|r| r.mjc).collect();
        let (mean, std) = if values.is_empty() {
            (None, None)
        } else {
            let mean = order_free_mean(&values);
            let std = if values.len() < 2 {
                0.0
            } else {
                let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
                let mut sq = sq;
                sq.sort_by(f64::total_cmp);
                (sq.iter().sum::<f64>() / (values.len() - 1) as f64).sqrt()
            };
            (Some(mean), Some(std))
        };
        MetricsReport {
            task: task.to_string(),
            method: method.to_string(),
            n_out,
            runs,
            mean,
            std,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|r| r.mjc).collect()
    }

    pub fn cell(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.3} ± {s:.3}"),
            _ => "failed".to_string(),
        }
    }
}

/// Writes per-seed rows plus `mean` and `std` rows for every report.
///
/// Timings are left out so that identical runs give identical files; see
/// [`write_timings_csv`].
pub fn write_metrics_csv<W: io::Write>(reports: &[MetricsReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task", "method", "n_out", "seed", "mjc", "status"])?;
    for r in reports {
        let n_out = r.n_out.label();
        for run in &r.runs {
            let (mjc, status) = match (&run.mjc, &run.error) {
                (Some(v), _) => (format!("{v:.17e}"), "ok".to_string()),
                (None, e) => (String::new(), e.clone().unwrap_or_default()),
            };
            w.write_record([&r.task, &r.method, &n_out, &run.seed.to_string(), &mjc, &status])?;
        }
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.17e}")).unwrap_or_default();
        w.write_record([&r.task, &r.method, &n_out, "mean", &fmt(r.mean), ""])?;
        w.write_record([&r.task, &r.method, &n_out, "std", &fmt(r.std), ""])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv<W: io::Write>(reports: &[MetricsReport], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["task", "method", "seed", "wall_clock_s"])?;
    for r in reports {
        for run in &r.runs {
            w.write_record([
                &r.task,
                &r.method,
                &run.seed.to_string(),
                &format!("{:.3}", run.wall_clock_s),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table with one row per method and one column per task.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let mut methods: Vec<&str> = Vec::new();
    let mut tasks: Vec<&str> = Vec::new();
    for r in reports {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
    }
    let cell = |m: &str, t: &str| {
        reports
            .iter()
            .find(|r| r.method == m && r.task == t)
            .map_or_else(|| "-".to_string(), MetricsReport::cell)
    };
    let mut rows: Vec<Vec<String>> = vec![std::iter::once("method".to_string())
        .chain(tasks.iter().map(|t| t.to_string()))
        .collect()];
    for m in &methods {
        rows.push(
            std::iter::once(m.to_string())
                .chain(tasks.iter().map(|t| cell(m, t)))
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    if let Some(r) = reports.first() {
        let _ = writeln!(out, "# MJC, mean ± std over seeds, n_out={}", r.n_out.label());
    }
    for (i, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:<w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
        if i == 0 {
            let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        }
    }
    out
}
