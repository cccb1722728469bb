//! Aggregation of finished runs into a markdown table and a bar chart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bench::experiment::{ResultsFile, RESULTS_SCHEMA_VERSION};
use crate::trainer::Method;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no results.json found under {0}")]
    NoRunsFound(PathBuf),
    #[error("{path}: schema mismatch: {message}")]
    SchemaMismatch { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Every `results.json` below `dir`, in path order.
pub fn find_results(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|source| ReportError::Io { path: d.clone(), source })?;
        for e in entries {
            let p = e.map_err(|source| ReportError::Io { path: d.clone(), source })?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n == "results.json") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn load_results(path: &Path) -> Result<ResultsFile, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let r: ResultsFile = serde_json::from_str(&text).map_err(|e| ReportError::SchemaMismatch {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if r.schema_version != RESULTS_SCHEMA_VERSION {
        return Err(ReportError::SchemaMismatch {
            path: path.to_path_buf(),
            message: format!("schema version {} (expected {RESULTS_SCHEMA_VERSION})", r.schema_version),
        });
    }
    Ok(r)
}

/// Mean and sample standard deviation (`None` for a single value).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// `"96.34 ± 0.11"`, or just `"96.34"` without a spread.
pub fn format_mean_std(mean: f64, std: Option<f64>) -> String {
    match std {
        Some(s) => format!("{mean:.2} ± {s:.2}"),
        None => format!("{mean:.2}"),
    }
}

/// Runs of one method.
#[derive(Debug, Clone)]
pub struct MethodSummary {
    pub method: Method,
    pub seeds: Vec<u64>,
    /// In percent.
    pub acc: Vec<f64>,
    /// In percentage points; empty for methods without BWT.
    pub bwt: Vec<f64>,
    /// Mean final accuracy per task, in percent.
    pub per_task_final: Vec<f64>,
}

pub fn summarize(results: &[ResultsFile]) -> Vec<MethodSummary> {
    let mut groups: BTreeMap<usize, MethodSummary> = BTreeMap::new();
    for r in results {
        let key = Method::ALL.iter().position(|m| *m == r.method).unwrap_or(usize::MAX);
        let g = groups.entry(key).or_insert_with(|| MethodSummary {
            method: r.method,
            seeds: Vec::new(),
            acc: Vec::new(),
            bwt: Vec::new(),
            per_task_final: Vec::new(),
        });
        g.seeds.push(r.seed);
        g.acc.push(100.0 * r.acc);
        if let Some(b) = r.bwt {
            g.bwt.push(100.0 * b);
        }
        if g.per_task_final.len() < r.per_task_final.len() {
            g.per_task_final.resize(r.per_task_final.len(), 0.0);
        }
        for (acc, v) in g.per_task_final.iter_mut().zip(&r.per_task_final) {
            *acc += 100.0 * v;
        }
    }
    let mut out: Vec<MethodSummary> = groups.into_values().collect();
    for g in &mut out {
        let n = g.seeds.len() as f64;
        g.per_task_final.iter_mut().for_each(|v| *v /= n);
    }
    out
}

pub fn render_markdown(summaries: &[MethodSummary]) -> String {
    let mut s = String::from("| Method | Runs | ACC (%) | BWT (pp) |\n|---|---:|---:|---:|\n");
    for g in summaries {
        let (am, asd) = mean_std(&g.acc);
        let bwt = if g.bwt.is_empty() {
            "–".to_string()
        } else {
            let (bm, bsd) = mean_std(&g.bwt);
            format_mean_std(bm, bsd)
        };
        let _ = writeln!(s, "| {} | {} | {} | {} |", g.method, g.seeds.len(), format_mean_std(am, asd), bwt);
    }
    s.push_str("\nFinal accuracy per task (%):\n\n| Method |");
    let tasks = summaries.iter().map(|g| g.per_task_final.len()).max().unwrap_or(0);
    for t in 0..tasks {
        let _ = write!(s, " T{} |", t + 1);
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(tasks));
    s.push('\n');
    for g in summaries {
        let _ = write!(s, "| {} |", g.method);
        for v in &g.per_task_final {
            let _ = write!(s, " {v:.2} |");
        }
        s.push('\n');
    }
    s
}

/// Grouped bar chart of per-task final accuracy, one colour per method.
pub fn render_svg(summaries: &[MethodSummary]) -> String {
    const COLOURS: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];
    let tasks = summaries.iter().map(|g| g.per_task_final.len()).max().unwrap_or(0).max(1);
    let groups = summaries.len().max(1);
    let (w, h, left, bottom, top) = (80.0 + 60.0 * tasks as f64, 320.0, 50.0, 40.0, 30.0);
    let plot_h = h - bottom - top;
    let slot = (w - left - 20.0) / tasks as f64;
    let bar = slot * 0.8 / groups as f64;
    // the y axis starts at the lowest bar rounded down to 10%
    let lo = summaries
        .iter()
        .flat_map(|g| g.per_task_final.iter().copied())
        .fold(100.0f64, f64::min);
    let y0 = ((lo / 10.0).floor() * 10.0).clamp(0.0, 90.0);
    let y = |v: f64| top + plot_h * (1.0 - (v - y0) / (100.0 - y0));
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    let _ = writeln!(s, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
    for tick in 0..=4 {
        let v = y0 + (100.0 - y0) * tick as f64 / 4.0;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" x2=\"{}\" y1=\"{1:.1}\" y2=\"{1:.1}\" stroke=\"#ddd\"/><text x=\"{2}\" y=\"{3:.1}\" text-anchor=\"end\">{v:.0}</text>",
            w - 20.0,
            y(v),
            left - 4.0,
            y(v) + 4.0
        );
    }
    for (gi, g) in summaries.iter().enumerate() {
        let colour = COLOURS[gi % COLOURS.len()];
        for (t, v) in g.per_task_final.iter().enumerate() {
            let x = left + slot * t as f64 + slot * 0.1 + bar * gi as f64;
            let _ = writeln!(
                s,
                "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{bar:.1}\" height=\"{:.1}\" fill=\"{colour}\"><title>{} task {}: {v:.2}%</title></rect>",
                y(*v),
                (top + plot_h - y(*v)).max(0.0),
                g.method,
                t + 1
            );
        }
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"8\" width=\"10\" height=\"10\" fill=\"{colour}\"/><text x=\"{}\" y=\"17\">{}</text>",
            left + 90.0 * gi as f64,
            left + 14.0 + 90.0 * gi as f64,
            g.method
        );
    }
    for t in 0..tasks {
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">T{}</text>",
            left + slot * (t as f64 + 0.5),
            h - bottom + 16.0,
            t + 1
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">final accuracy per task (%)</text>\n</svg>",
        left + (w - left) / 2.0,
        h - 6.0
    );
    s
}

/// Loads every run under `dir` and renders the markdown summary.
pub fn build_report(dir: &Path) -> Result<(String, String), ReportError> {
    let paths = find_results(dir)?;
    if paths.is_empty() {
        return Err(ReportError::NoRunsFound(dir.to_path_buf()));
    }
    let results = paths.iter().map(|p| load_results(p)).collect::<Result<Vec<_>, _>>()?;
    let summaries = summarize(&results);
    Ok((render_markdown(&summaries), render_svg(&summaries)))
}
