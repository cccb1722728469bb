//! Sequential training over a stream with per-task evaluation, and the
//! files a run leaves on disk.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::idx::{load_mnist, IdxError};
use super::metrics::{compute_metrics, AccuracyMatrix, MetricsError, MetricsReport};
use super::stream::{
    gen_permuted_stream, gen_sign_flip_pair, gen_split_synthetic, SplitSyntheticConfig, StreamError, TaskStream,
};
use crate::checkpoint::{Checkpoint, CheckpointError};
use crate::network::Selections;
use crate::seed;
use crate::trainer::{accuracy, train_joint, ContinualLearner, Method, TaskArtifacts, TrainerConfig, TrainerError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Trainer(#[from] TrainerError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("stream has no tasks")]
    EmptyStream,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Which task stream to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StreamConfig {
    /// Pixel-permuted MNIST read from IDX files.
    Permuted {
        mnist_dir: PathBuf,
        num_tasks: usize,
        /// Use a random subset of this many training images.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_subset: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_subset: Option<usize>,
    },
    /// Gaussian clusters in controllable subspaces.
    SplitSynthetic {
        num_tasks: usize,
        classes_per_task: usize,
        dim: usize,
        separation: f64,
        overlap: f64,
        #[serde(default)]
        ambient_noise: f64,
        train_per_class: usize,
        test_per_class: usize,
    },
    /// Two tasks with negated inputs.
    SignFlip { per_class: usize },
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig::Permuted {
            mnist_dir: PathBuf::from("data/mnist"),
            num_tasks: 10,
            train_subset: None,
            test_subset: None,
        }
    }
}

impl StreamConfig {
    pub fn num_tasks(&self) -> usize {
        match self {
            StreamConfig::Permuted { num_tasks, .. } | StreamConfig::SplitSynthetic { num_tasks, .. } => *num_tasks,
            StreamConfig::SignFlip { .. } => 2,
        }
    }

    pub fn set_num_tasks(&mut self, n: usize) {
        match self {
            StreamConfig::Permuted { num_tasks, .. } | StreamConfig::SplitSynthetic { num_tasks, .. } => *num_tasks = n,
            StreamConfig::SignFlip { .. } => {}
        }
    }

    pub fn build(&self, root: u64) -> Result<TaskStream, ExperimentError> {
        Ok(match self {
            StreamConfig::Permuted {
                mnist_dir,
                num_tasks,
                train_subset,
                test_subset,
            } => {
                let (mut train, mut test) = load_mnist(mnist_dir)?;
                if let Some(n) = train_subset {
                    train = train.sample(*n, &mut seed::rng(root, seed::SPLIT, u64::MAX));
                }
                if let Some(n) = test_subset {
                    test = test.sample(*n, &mut seed::rng(root, seed::SPLIT, u64::MAX - 1));
                }
                gen_permuted_stream(&train, &test, *num_tasks, root)?
            }
            StreamConfig::SplitSynthetic {
                num_tasks,
                classes_per_task,
                dim,
                separation,
                overlap,
                ambient_noise,
                train_per_class,
                test_per_class,
            } => gen_split_synthetic(
                &SplitSyntheticConfig {
                    num_tasks: *num_tasks,
                    classes_per_task: *classes_per_task,
                    dim: *dim,
                    separation: *separation,
                    overlap: *overlap,
                    ambient_noise: *ambient_noise,
                    train_per_class: *train_per_class,
                    test_per_class: *test_per_class,
                },
                root,
            )?,
            StreamConfig::SignFlip { per_class } => gen_sign_flip_pair(*per_class, root)?,
        })
    }
}

/// Outcome of one method on one stream.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub method: Method,
    pub seed: u64,
    /// Lower-triangular for sequential methods; a single full row for
    /// multitask.
    pub acc_rows: Vec<Vec<f64>>,
    pub metrics: MetricsReport,
    pub artifacts: Vec<TaskArtifacts>,
    /// Largest weight movement inside any old task's subspace, over the run.
    pub max_frozen_drift: f64,
    pub seconds: f64,
    /// Final learner (absent for multitask).
    pub learner: Option<ContinualLearner>,
}

impl ExperimentResult {
    /// Largest accuracy drop of a task after it was learned, as a fraction.
    pub fn max_accuracy_drift(&self) -> f64 {
        let rows = &self.acc_rows;
        if self.method == Method::Multitask {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for (r, row) in rows.iter().enumerate() {
            for (j, &a) in row.iter().enumerate().take(r) {
                worst = worst.max(rows[j][j] - a);
            }
        }
        worst
    }
}

/// `results.json` contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub method: Method,
    pub seed: u64,
    pub config: serde_json::Value,
    pub acc_matrix: Vec<Vec<Option<f64>>>,
    pub acc: f64,
    pub bwt: Option<f64>,
    pub forward: Vec<f64>,
    pub per_task_final: Vec<f64>,
    pub max_frozen_projection_drift: f64,
    pub seconds: f64,
}

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    /// Where to write results and checkpoints; nothing is written if unset.
    pub out_dir: Option<PathBuf>,
    /// Print one progress line per task to stderr.
    pub progress: bool,
    /// Echoed verbatim into `results.json`.
    pub config_echo: serde_json::Value,
}

/// Trains every task of `stream` in order with `cfg.method`, evaluating all
/// finished tasks after each one.
pub fn run_experiment(
    cfg: &TrainerConfig,
    stream: &TaskStream,
    opts: &ExperimentOptions,
) -> Result<ExperimentResult, ExperimentError> {
    if stream.is_empty() {
        return Err(ExperimentError::EmptyStream);
    }
    let start = Instant::now();
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir.join("checkpoints")).map_err(io_err(dir))?;
    }
    let mut learner = ContinualLearner::new(cfg.clone(), stream.dim(), stream.classes(), stream.len())?;
    let result = if cfg.method == Method::Multitask {
        train_joint(&mut learner.model, &stream.tasks, cfg)?;
        let plain = Selections::empty(learner.model.num_layers());
        let row = stream
            .tasks
            .iter()
            .map(|t| accuracy(&learner.model, &plain, &t.test, t.id))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(dir) = &opts.out_dir {
            let ck = Checkpoint {
                task: stream.len() - 1,
                model: learner.model.clone(),
                scalings: Vec::new(),
            };
            ck.save(&dir.join("checkpoints").join("model_joint.bin"))?;
        }
        let acc = row.iter().sum::<f64>() / row.len() as f64;
        ExperimentResult {
            method: cfg.method,
            seed: cfg.seed,
            metrics: MetricsReport {
                acc,
                bwt: None,
                forward: Vec::new(),
                per_task_final: row.clone(),
            },
            acc_rows: vec![row],
            artifacts: Vec::new(),
            max_frozen_drift: 0.0,
            seconds: start.elapsed().as_secs_f64(),
            learner: None,
        }
    } else {
        let mut matrix = AccuracyMatrix::new();
        let mut max_drift: f64 = 0.0;
        for task in &stream.tasks {
            let t0 = Instant::now();
            learner.learn_task(task)?;
            max_drift = max_drift.max(learner.frozen_projection_drift());
            let row = stream.tasks[..=task.id.min(stream.len() - 1)]
                .iter()
                .map(|t| learner.evaluate(t))
                .collect::<Result<Vec<_>, _>>()?;
            if opts.progress {
                let art = learner.artifacts.last().expect("learned");
                eprintln!(
                    "[{} seed {}] task {}/{}: acc {:.2}%  loss {:.4}  mean acc {:.2}%  ({:.1}s)",
                    cfg.method,
                    cfg.seed,
                    task.id + 1,
                    stream.len(),
                    100.0 * row[row.len() - 1],
                    art.final_train_loss,
                    100.0 * row.iter().sum::<f64>() / row.len() as f64,
                    t0.elapsed().as_secs_f64()
                );
            }
            matrix.push_row(row)?;
            if let Some(dir) = &opts.out_dir {
                let art = learner.artifacts.last().expect("learned");
                let ck = Checkpoint {
                    task: task.id,
                    model: learner.model.clone(),
                    scalings: art.scalings.clone(),
                };
                ck.save(&dir.join("checkpoints").join(format!("model_task{}.bin", task.id)))?;
            }
        }
        ExperimentResult {
            method: cfg.method,
            seed: cfg.seed,
            metrics: compute_metrics(&matrix)?,
            acc_rows: matrix.rows().to_vec(),
            artifacts: learner.artifacts.clone(),
            max_frozen_drift: max_drift,
            seconds: start.elapsed().as_secs_f64(),
            learner: Some(learner),
        }
    };
    if let Some(dir) = &opts.out_dir {
        write_outputs(dir, &result, opts)?;
    }
    Ok(result)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

pub fn results_file(result: &ExperimentResult, config: serde_json::Value) -> ResultsFile {
    let t = result.acc_rows.iter().map(Vec::len).max().unwrap_or(0);
    ResultsFile {
        schema_version: RESULTS_SCHEMA_VERSION,
        method: result.method,
        seed: result.seed,
        config,
        acc_matrix: result
            .acc_rows
            .iter()
            .map(|r| (0..t).map(|i| r.get(i).copied()).collect())
            .collect(),
        acc: result.metrics.acc,
        bwt: result.metrics.bwt,
        forward: result.metrics.forward.clone(),
        per_task_final: result.metrics.per_task_final.clone(),
        max_frozen_projection_drift: result.max_frozen_drift,
        seconds: result.seconds,
    }
}

fn write_outputs(dir: &Path, result: &ExperimentResult, opts: &ExperimentOptions) -> Result<(), ExperimentError> {
    write_json(&dir.join("results.json"), &results_file(result, opts.config_echo.clone()))?;
    let csv = match result.method {
        Method::Multitask => result.acc_rows.iter().map(|r| join(r)).collect::<Vec<_>>().join("\n") + "\n",
        _ => AccuracyMatrix::from_rows(result.acc_rows.clone())?.to_csv(),
    };
    let csv_path = dir.join("acc_matrix.csv");
    std::fs::write(&csv_path, csv).map_err(io_err(&csv_path))?;
    let selections: Vec<_> = result.artifacts.iter().map(|a| &a.selection).collect();
    write_json(&dir.join("selections.json"), &selections)?;
    write_json(&dir.join("artifacts.json"), &result.artifacts)?;
    if let Some(l) = &result.learner {
        if l.cfg.method.uses_memory() {
            let p = dir.join("checkpoints").join("store.bin");
            std::fs::write(&p, l.store.to_bytes()).map_err(io_err(&p))?;
        }
    }
    Ok(())
}

fn join(row: &[f64]) -> String {
    row.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")
}
