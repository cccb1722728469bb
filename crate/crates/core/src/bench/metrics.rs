//! Accuracy matrix and the summary metrics derived from it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("backward transfer needs at least two tasks")]
    BwtUndefined,
    #[error("accuracy matrix is empty")]
    Empty,
    #[error("entry ({row}, {col}) is {value}, outside [0, 1]")]
    OutOfRange { row: usize, col: usize, value: f64 },
    #[error("entry ({row}, {col}) lies above the diagonal")]
    AboveDiagonal { row: usize, col: usize },
}

/// `acc[r][i]` is the accuracy on task `i` after training task `r`
/// (`i ≤ r`), as a fraction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from lower-triangular rows (row `r` has `r + 1` entries).
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, MetricsError> {
        let mut m = Self::new();
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<f64>) -> Result<(), MetricsError> {
        let r = self.rows.len();
        if row.len() > r + 1 {
            return Err(MetricsError::AboveDiagonal { row: r, col: r + 1 });
        }
        if let Some((col, &value)) = row.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(MetricsError::OutOfRange { row: r, col, value });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, row: usize, task: usize) -> Option<f64> {
        self.rows.get(row)?.get(task).copied()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Square form with `None` above the diagonal.
    pub fn to_square(&self) -> Vec<Vec<Option<f64>>> {
        let t = self.rows.len();
        self.rows
            .iter()
            .map(|r| (0..t).map(|i| r.get(i).copied()).collect())
            .collect()
    }

    /// `T` lines, comma-separated, empty cells above the diagonal.
    pub fn to_csv(&self) -> String {
        self.to_square()
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| v.map(|x| format!("{x}")).unwrap_or_default())
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    /// `None` when only one task was learned.
    pub bwt: Option<f64>,
    /// Accuracy on each task right after learning it.
    pub forward: Vec<f64>,
    /// Accuracy on each task after the last one.
    pub per_task_final: Vec<f64>,
}

/// ACC is the mean of the last row; BWT the mean over `i < T` of
/// `A[T][i] − A[i][i]`. Needs a complete lower triangle.
pub fn compute_metrics(a: &AccuracyMatrix) -> Result<MetricsReport, MetricsError> {
    let t = a.num_tasks();
    if t == 0 {
        return Err(MetricsError::Empty);
    }
    let last = &a.rows[t - 1];
    let forward: Vec<f64> = (0..t).map(|i| a.rows[i].get(i).copied().unwrap_or(f64::NAN)).collect();
    let acc = last.iter().sum::<f64>() / last.len() as f64;
    let bwt = if t >= 2 {
        Some((0..t - 1).map(|i| last[i] - forward[i]).sum::<f64>() / (t - 1) as f64)
    } else {
        None
    };
    Ok(MetricsReport {
        acc,
        bwt,
        forward,
        per_task_final: last.clone(),
    })
}

/// BWT, failing when it is undefined.
pub fn backward_transfer(a: &AccuracyMatrix) -> Result<f64, MetricsError> {
    compute_metrics(a)?.bwt.ok_or(MetricsError::BwtUndefined)
}
