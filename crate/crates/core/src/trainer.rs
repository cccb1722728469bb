//! Continual training: TRGP, GPM, plain SGD and a joint multitask bound.
//!
//! Every method shares one mini-batch SGD loop. They differ in what the loop
//! is allowed to change:
//!
//! | method    | weight gradient                 | scaling matrices     |
//! |-----------|---------------------------------|----------------------|
//! | sgd       | raw                             | none                 |
//! | gpm       | orthogonal to the merged memory | none                 |
//! | trgp      | orthogonal to the merged memory | trained, trust region|
//!
//! After a task, [`finalize_task`] extracts its input subspaces and appends
//! them to the memory.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::stream::{Dataset, Task};
use crate::linalg::{frobenius_norm, Matrix};
use crate::network::{
    backward_factored, forward_with_trace, logits, softmax_cross_entropy, HeadMode, Mlp, NetworkError,
    ScaledProjection, ScalingMatrix, Selections,
};
use crate::seed;
use crate::subspace::{
    collect_representations, extract_basis_first_task, extract_basis_with_memory, SubspaceConfig, SubspaceError,
    SubspaceStore,
};
use crate::trust_region::{
    determine_trust_region, probe_gradient, TrustRegionConfig, TrustRegionError, TrustRegionSelection,
};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid trainer config: {0}")]
    InvalidConfig(String),
    #[error("loss diverged on task {task} (epoch {epoch}, step {step})")]
    DivergedLoss { task: usize, epoch: usize, step: usize },
    #[error("task {0} has no training data")]
    EmptyTask(usize),
    #[error("no artifacts recorded for task {0}")]
    UnknownTask(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Subspace(#[from] SubspaceError),
    #[error(transparent)]
    TrustRegion(#[from] TrustRegionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Trgp,
    Gpm,
    Sgd,
    Multitask,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Trgp, Method::Gpm, Method::Sgd, Method::Multitask];

    pub fn name(self) -> &'static str {
        match self {
            Method::Trgp => "trgp",
            Method::Gpm => "gpm",
            Method::Sgd => "sgd",
            Method::Multitask => "multitask",
        }
    }

    /// Whether the method keeps a subspace memory.
    pub fn uses_memory(self) -> bool {
        matches!(self, Method::Trgp | Method::Gpm)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| format!("unknown method {s:?} (expected one of trgp, gpm, sgd, multitask)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub method: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate of the scaling matrices; `lr` when unset.
    pub scale_lr: Option<f64>,
    pub hidden: Vec<usize>,
    pub head: HeadMode,
    pub seed: u64,
    /// Stop a task after this many epochs without validation improvement
    /// and keep the best epoch. Off when unset.
    pub patience: Option<usize>,
    pub trust: TrustRegionConfig,
    pub subspace: SubspaceConfig,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            method: Method::Trgp,
            epochs: 5,
            batch_size: 10,
            lr: 0.01,
            scale_lr: None,
            hidden: vec![100, 100],
            head: HeadMode::Single,
            seed: 0,
            patience: None,
            trust: TrustRegionConfig::default(),
            subspace: SubspaceConfig {
                eps_th: vec![0.95, 0.99, 0.99],
                ..SubspaceConfig::default()
            },
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |msg: String| Err(TrainerError::InvalidConfig(msg));
        if self.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if let Some(s) = self.scale_lr.filter(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad(format!("scale_lr must be a non-negative number, got {s}"));
        }
        if !(0.0..=1.0).contains(&self.trust.epsilon) {
            return bad(format!("trust.epsilon must lie in [0, 1], got {}", self.trust.epsilon));
        }
        if self.trust.probe_batch == 0 {
            return bad("trust.probe_batch must be at least 1".into());
        }
        if self.subspace.eps_th.is_empty() {
            return bad("subspace.eps_th needs at least one value".into());
        }
        if let Some(e) = self.subspace.eps_th.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return bad(format!("subspace.eps_th values must lie in (0, 1), got {e}"));
        }
        if self.subspace.samples == 0 {
            return bad("subspace.samples must be at least 1".into());
        }
        if self.head == HeadMode::PerTask && self.hidden.is_empty() {
            return bad("per-task heads need at least one hidden layer".into());
        }
        Ok(())
    }

    fn scale_lr(&self) -> f64 {
        self.scale_lr.unwrap_or(self.lr)
    }
}

/// What one task leaves behind besides the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskArtifacts {
    pub task: usize,
    pub method: Method,
    pub selection: TrustRegionSelection,
    /// Trained scaling matrix per selected (layer, old task) pair.
    #[serde(skip)]
    pub scalings: Vec<ScalingMatrix>,
    /// Per layer: `‖g − gMM'‖_F / ‖g‖_F` of the probe gradient before training.
    pub start_residual_ratio: Vec<f64>,
    /// Mean training loss over the full training split after the task.
    pub final_train_loss: f64,
    pub epochs_run: usize,
    /// Rank of the basis added per layer (empty before finalization).
    pub basis_ranks: Vec<usize>,
    /// Merged memory columns per layer after finalization.
    pub merged_columns: Vec<usize>,
}

/// Builds a task's scaled projections from its scalings and the store.
pub fn selections_from_scalings(
    store: &SubspaceStore,
    scalings: &[ScalingMatrix],
    num_layers: usize,
) -> Result<Selections, TrainerError> {
    let mut sel = Selections::empty(num_layers);
    for s in scalings {
        let b = store
            .basis(s.old_task, s.layer)
            .ok_or(TrainerError::UnknownTask(s.old_task))?;
        sel.layer_mut(s.layer)
            .push(ScaledProjection::new(b.basis.clone(), s.clone())?);
    }
    Ok(sel)
}

fn identity_selections(
    store: &SubspaceStore,
    selection: &TrustRegionSelection,
    num_layers: usize,
) -> Result<Selections, TrainerError> {
    let scalings: Vec<ScalingMatrix> = selection
        .layers
        .iter()
        .flat_map(|l| l.chosen.iter().map(move |c| (l.layer, c.old_task)))
        .filter_map(|(layer, j)| {
            let rank = store.basis(j, layer)?.rank();
            (rank > 0).then(|| ScalingMatrix::identity(j, layer, rank))
        })
        .collect();
    selections_from_scalings(store, &scalings, num_layers)
}

/// Head index used for `task` in the model.
fn head_index(model: &Mlp, task: usize) -> usize {
    match model.head_mode() {
        HeadMode::Single => 0,
        HeadMode::PerTask => task,
    }
}

/// Mean loss over a dataset.
pub fn mean_loss(model: &Mlp, sel: &Selections, data: &Dataset, task: usize) -> Result<f64, TrainerError> {
    let mut total = 0.0;
    for chunk in (0..data.len()).collect::<Vec<_>>().chunks(500) {
        let (x, y) = data.batch(chunk);
        let z = logits(model, sel, &x, head_index(model, task))?;
        total += softmax_cross_entropy(&z, &y).1 * chunk.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

/// Fraction of correctly classified examples.
pub fn accuracy(model: &Mlp, sel: &Selections, data: &Dataset, task: usize) -> Result<f64, TrainerError> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for chunk in (0..data.len()).collect::<Vec<_>>().chunks(500) {
        let (x, y) = data.batch(chunk);
        let z = logits(model, sel, &x, head_index(model, task))?;
        for (i, &label) in y.iter().enumerate() {
            let row = z.row(i);
            let pred = (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best });
            correct += usize::from(pred == label);
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// One SGD step on a batch. `memory[l]` (if any) is the merged basis whose
/// span the weight update of layer `l` must avoid.
fn sgd_step(
    model: &mut Mlp,
    sel: &mut Selections,
    x: &Matrix,
    y: &[usize],
    task: usize,
    memory: Option<&[&Matrix]>,
    cfg: &TrainerConfig,
) -> Result<f64, NetworkError> {
    let head = head_index(model, task);
    let trace = forward_with_trace(model, sel, x, y, head)?;
    let grads = backward_factored(&trace, model, sel)?;
    for (l, g) in grads.layers.iter().enumerate() {
        let m = memory.and_then(|m| m.get(l)).filter(|m| m.cols() > 0);
        match m {
            Some(m) => {
                // Δ'·(X̃ − X̃MM') keeps the update's rows orthogonal to span(M)
                let coords = g.input.matmul(m)?;
                let mut input = g.input.clone();
                input.gemm_acc(-1.0, &coords, false, m, true)?;
                model.layer_mut(l).gemm_acc(-cfg.lr, &g.delta, true, &input, false)?;
            }
            None => model.layer_mut(l).gemm_acc(-cfg.lr, &g.delta, true, &g.input, false)?,
        }
    }
    if let Some(g) = &grads.head {
        model.head_mut(head).gemm_acc(-cfg.lr, &g.delta, true, &g.input, false)?;
    }
    let scale_lr = cfg.scale_lr();
    for (l, dqs) in grads.scales.iter().enumerate() {
        for (s, dq) in sel.layer_mut(l).iter_mut().zip(dqs) {
            s.scaling.q.axpy(-scale_lr, dq)?;
        }
    }
    Ok(trace.loss)
}

fn diverged(e: NetworkError, task: usize, epoch: usize, step: usize) -> TrainerError {
    match e {
        NetworkError::NonFiniteLoss => TrainerError::DivergedLoss { task, epoch, step },
        other => other.into(),
    }
}

/// The shared epoch loop. Returns the number of epochs kept.
fn run_epochs(
    model: &mut Mlp,
    sel: &mut Selections,
    task: &Task,
    memory: Option<&[&Matrix]>,
    cfg: &TrainerConfig,
) -> Result<usize, TrainerError> {
    let n = task.train.len();
    if n == 0 {
        return Err(TrainerError::EmptyTask(task.id));
    }
    let mut rng = seed::rng(cfg.seed, seed::SHUFFLE, task.id as u64);
    let mut order: Vec<usize> = (0..n).collect();
    let early_stop = cfg.patience.filter(|_| !task.validation.is_empty());
    let mut best: Option<(f64, Mlp, Selections, usize)> = None;
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = task.train.batch(chunk);
            let loss = sgd_step(model, sel, &x, &y, task.id, memory, cfg)
                .map_err(|e| diverged(e, task.id, epoch, step))?;
            if !loss.is_finite() {
                return Err(TrainerError::DivergedLoss { task: task.id, epoch, step });
            }
        }
        epochs_run = epoch + 1;
        if let Some(patience) = early_stop {
            let val = mean_loss(model, sel, &task.validation, task.id)?;
            if !val.is_finite() {
                return Err(TrainerError::DivergedLoss {
                    task: task.id,
                    epoch,
                    step: n.div_ceil(cfg.batch_size),
                });
            }
            if best.as_ref().is_none_or(|b| val < b.0) {
                best = Some((val, model.clone(), sel.clone(), epochs_run));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, m, s, e)) = best {
        *model = m;
        *sel = s;
        epochs_run = e;
    }
    Ok(epochs_run)
}

/// `‖g − gMM'‖_F / ‖g‖_F` per layer; 0 for a zero gradient.
fn residual_ratios(grads: &[Matrix], store: &SubspaceStore) -> Vec<f64> {
    grads
        .iter()
        .enumerate()
        .map(|(l, g)| {
            let n = frobenius_norm(g);
            if n == 0.0 {
                return 0.0;
            }
            let m = &store.merged(l).basis;
            frobenius_norm(&crate::linalg::reject_rows_unchecked(g, m)) / n
        })
        .collect()
}

fn probe_batch(task: &Task, cfg: &TrainerConfig) -> (Matrix, Vec<usize>) {
    let mut idx: Vec<usize> = (0..task.train.len()).collect();
    idx.shuffle(&mut seed::rng(cfg.seed, seed::PROBE, task.id as u64));
    idx.truncate(cfg.trust.probe_batch);
    task.train.batch(&idx)
}

/// Projected training with a trust region of at most `cfg.trust.top_k`
/// old tasks per layer (none on the first task, which is plain SGD).
pub fn train_task_trgp(
    model: &mut Mlp,
    store: &SubspaceStore,
    task: &Task,
    cfg: &TrainerConfig,
) -> Result<TaskArtifacts, TrainerError> {
    train_projected(model, store, task, cfg, Method::Trgp, cfg.trust.top_k)
}

/// Projected training with every old-subspace component frozen.
pub fn train_task_gpm(
    model: &mut Mlp,
    store: &SubspaceStore,
    task: &Task,
    cfg: &TrainerConfig,
) -> Result<TaskArtifacts, TrainerError> {
    train_projected(model, store, task, cfg, Method::Gpm, 0)
}

fn train_projected(
    model: &mut Mlp,
    store: &SubspaceStore,
    task: &Task,
    cfg: &TrainerConfig,
    method: Method,
    top_k: usize,
) -> Result<TaskArtifacts, TrainerError> {
    cfg.validate()?;
    if task.train.is_empty() {
        return Err(TrainerError::EmptyTask(task.id));
    }
    let layers = model.num_layers();
    if store.num_layers() != layers {
        return Err(TrainerError::InvalidConfig(format!(
            "store has {} layers, network has {layers}",
            store.num_layers()
        )));
    }
    let trust_cfg = TrustRegionConfig { top_k, ..cfg.trust.clone() };
    let (px, py) = probe_batch(task, cfg);
    let probe = probe_gradient(model, &px, &py, head_index(model, task.id))?;
    let start_residual_ratio = residual_ratios(&probe, store);
    let selection = determine_trust_region(&probe, store, task.id, &trust_cfg)?;

    let mut sel = identity_selections(store, &selection, layers)?;
    let memory: Vec<&Matrix> = (0..layers).map(|l| &store.merged(l).basis).collect();
    let epochs_run = run_epochs(model, &mut sel, task, Some(&memory), cfg)?;
    let final_train_loss = mean_loss(model, &sel, &task.train, task.id)?;
    Ok(TaskArtifacts {
        task: task.id,
        method,
        selection,
        scalings: sel.scalings(),
        start_residual_ratio,
        final_train_loss,
        epochs_run,
        basis_ranks: Vec::new(),
        merged_columns: Vec::new(),
    })
}

/// Unconstrained mini-batch SGD.
pub fn train_task_sgd(model: &mut Mlp, task: &Task, cfg: &TrainerConfig) -> Result<TaskArtifacts, TrainerError> {
    cfg.validate()?;
    let layers = model.num_layers();
    let mut sel = Selections::empty(layers);
    let epochs_run = run_epochs(model, &mut sel, task, None, cfg)?;
    let final_train_loss = mean_loss(model, &sel, &task.train, task.id)?;
    Ok(TaskArtifacts {
        task: task.id,
        method: Method::Sgd,
        selection: TrustRegionSelection::empty(task.id, layers, &cfg.trust),
        scalings: Vec::new(),
        start_residual_ratio: vec![1.0; layers],
        final_train_loss,
        epochs_run,
        basis_ranks: Vec::new(),
        merged_columns: Vec::new(),
    })
}

/// Joint SGD over the union of all tasks for `cfg.epochs` epochs.
///
/// Each task's data is cut into batches and the batches of all tasks are
/// visited in one shuffled order, so every batch stays within one task
/// (which per-task heads require).
pub fn train_joint(model: &mut Mlp, tasks: &[Task], cfg: &TrainerConfig) -> Result<f64, TrainerError> {
    cfg.validate()?;
    if let Some(t) = tasks.iter().find(|t| t.train.is_empty()) {
        return Err(TrainerError::EmptyTask(t.id));
    }
    let mut sel = Selections::empty(model.num_layers());
    if let [only] = tasks {
        run_epochs(model, &mut sel, only, None, cfg)?;
    } else {
        let mut rng = seed::rng(cfg.seed, seed::SHUFFLE, u64::MAX);
        let mut orders: Vec<Vec<usize>> = tasks.iter().map(|t| (0..t.train.len()).collect()).collect();
        for epoch in 0..cfg.epochs {
            let mut batches: Vec<(usize, Vec<usize>)> = Vec::new();
            for (k, order) in orders.iter_mut().enumerate() {
                order.shuffle(&mut rng);
                batches.extend(order.chunks(cfg.batch_size).map(|c| (k, c.to_vec())));
            }
            batches.shuffle(&mut rng);
            for (step, (k, idx)) in batches.iter().enumerate() {
                let task = &tasks[*k];
                let (x, y) = task.train.batch(idx);
                sgd_step(model, &mut sel, &x, &y, task.id, None, cfg)
                    .map_err(|e| diverged(e, task.id, epoch, step))?;
            }
        }
    }
    let mut total = 0.0;
    for t in tasks {
        total += mean_loss(model, &sel, &t.train, t.id)?;
    }
    Ok(total / tasks.len().max(1) as f64)
}

/// Extracts the task's input subspaces under its own effective weights and
/// appends them to the store. A task can be finalized once.
pub fn finalize_task(
    model: &Mlp,
    store: &mut SubspaceStore,
    task: &Task,
    artifacts: &mut TaskArtifacts,
    cfg: &TrainerConfig,
) -> Result<(), TrainerError> {
    if store.is_finalized(task.id) {
        return Err(SubspaceError::AlreadyFinalized(task.id).into());
    }
    let sel = selections_from_scalings(store, &artifacts.scalings, model.num_layers())?;
    let samples = task
        .train
        .sample(cfg.subspace.samples, &mut seed::rng(cfg.seed, seed::REPRESENTATION, task.id as u64));
    let (x, _) = samples.all();
    let reps = collect_representations(model, &sel, &x, task.id)?;
    let first = store.finalized_tasks().next().is_none();
    let mut bases = Vec::with_capacity(reps.len());
    for r in &reps {
        let eps = cfg.subspace.threshold(r.layer);
        let b = if first {
            extract_basis_first_task(r, eps, &cfg.subspace.svd)?
        } else {
            extract_basis_with_memory(r, &store.merged(r.layer).basis, eps, &cfg.subspace.svd)?
        };
        bases.push(b);
    }
    artifacts.basis_ranks = bases.iter().map(|b| b.rank()).collect();
    store.insert_task(task.id, bases)?;
    artifacts.merged_columns = (0..store.num_layers()).map(|l| store.merged(l).num_columns()).collect();
    Ok(())
}

/// A model, its subspace memory, and everything recorded per task.
#[derive(Debug, Clone)]
pub struct ContinualLearner {
    pub cfg: TrainerConfig,
    pub model: Mlp,
    pub store: SubspaceStore,
    pub artifacts: Vec<TaskArtifacts>,
    /// Shared-layer weights right after each finished task, in task order.
    pub snapshots: Vec<(usize, Vec<Matrix>)>,
}

impl ContinualLearner {
    pub fn new(cfg: TrainerConfig, input: usize, classes: usize, num_tasks: usize) -> Result<Self, TrainerError> {
        cfg.validate()?;
        let model = Mlp::new(
            input,
            &cfg.hidden,
            classes,
            cfg.head,
            num_tasks,
            &mut seed::rng(cfg.seed, seed::INIT, 0),
        );
        Ok(Self::with_model(cfg, model))
    }

    pub fn with_model(cfg: TrainerConfig, model: Mlp) -> Self {
        let store = SubspaceStore::new(model.layer_input_widths(), cfg.subspace.dedup_tolerance);
        Self {
            cfg,
            model,
            store,
            artifacts: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    /// Trains and (for memory-based methods) finalizes one task.
    pub fn learn_task(&mut self, task: &Task) -> Result<&TaskArtifacts, TrainerError> {
        let mut art = match self.cfg.method {
            Method::Trgp => train_task_trgp(&mut self.model, &self.store, task, &self.cfg)?,
            Method::Gpm => train_task_gpm(&mut self.model, &self.store, task, &self.cfg)?,
            Method::Sgd => train_task_sgd(&mut self.model, task, &self.cfg)?,
            Method::Multitask => {
                return Err(TrainerError::InvalidConfig(
                    "multitask trains all tasks at once; use train_joint".into(),
                ))
            }
        };
        if self.cfg.method.uses_memory() {
            finalize_task(&self.model, &mut self.store, task, &mut art, &self.cfg)?;
        }
        self.snapshots.push((task.id, self.model.layers().to_vec()));
        self.artifacts.push(art);
        Ok(self.artifacts.last().expect("just pushed"))
    }

    pub fn artifacts_for(&self, task: usize) -> Option<&TaskArtifacts> {
        self.artifacts.iter().find(|a| a.task == task)
    }

    /// Scaled projections used when running `task`.
    pub fn selections_for(&self, task: usize) -> Result<Selections, TrainerError> {
        let art = self.artifacts_for(task).ok_or(TrainerError::UnknownTask(task))?;
        selections_from_scalings(&self.store, &art.scalings, self.model.num_layers())
    }

    /// Test accuracy on a learned task with its own scaling matrices.
    pub fn evaluate(&self, task: &Task) -> Result<f64, TrainerError> {
        accuracy(&self.model, &self.selections_for(task.id)?, &task.test, task.id)
    }

    /// Largest `‖(W_now − W_j)·B_j·B_j'‖_F` over finished tasks `j` and
    /// layers: how far the weight component inside each old subspace moved.
    pub fn frozen_projection_drift(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (task, weights) in &self.snapshots {
            for (l, (now, then)) in self.model.layers().iter().zip(weights).enumerate() {
                if let Some(b) = self.store.basis(*task, l) {
                    let diff = now.sub(then).expect("same shapes");
                    worst = worst.max(frobenius_norm(&crate::linalg::project_rows_unchecked(&diff, &b.basis)));
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::stream::{gen_sign_flip_pair, gen_split_synthetic, SplitSyntheticConfig};

    fn small_cfg(method: Method) -> TrainerConfig {
        TrainerConfig {
            method,
            epochs: 2,
            batch_size: 8,
            lr: 0.05,
            hidden: vec![16],
            head: HeadMode::PerTask,
            seed: 3,
            subspace: SubspaceConfig {
                eps_th: vec![0.97],
                samples: 100,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn stream() -> crate::bench::stream::TaskStream {
        gen_split_synthetic(
            &SplitSyntheticConfig {
                num_tasks: 3,
                dim: 12,
                train_per_class: 60,
                test_per_class: 20,
                ..Default::default()
            },
            11,
        )
        .unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ewc".parse::<Method>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainerConfig::default().validate().is_ok());
        let bad = TrainerConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(TrainerError::InvalidConfig(_))));
        let mut bad = TrainerConfig::default();
        bad.subspace.eps_th = vec![1.0];
        assert!(bad.validate().is_err());
        let mut bad = TrainerConfig::default();
        bad.trust.epsilon = 1.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn first_task_matches_plain_sgd() {
        let s = stream();
        let mut a = ContinualLearner::new(small_cfg(Method::Trgp), 12, 2, 3).unwrap();
        let mut b = ContinualLearner::new(small_cfg(Method::Sgd), 12, 2, 3).unwrap();
        a.learn_task(&s.tasks[0]).unwrap();
        b.learn_task(&s.tasks[0]).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn zero_top_k_matches_gpm() {
        let s = stream();
        let mut cfg = small_cfg(Method::Trgp);
        cfg.trust.top_k = 0;
        let mut a = ContinualLearner::new(cfg, 12, 2, 3).unwrap();
        let mut b = ContinualLearner::new(small_cfg(Method::Gpm), 12, 2, 3).unwrap();
        for t in &s.tasks {
            a.learn_task(t).unwrap();
            b.learn_task(t).unwrap();
        }
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let s = stream();
        let mut cfg = small_cfg(Method::Sgd);
        cfg.lr = 0.0;
        let mut l = ContinualLearner::new(cfg, 12, 2, 3).unwrap();
        let before = l.model.clone();
        l.learn_task(&s.tasks[0]).unwrap();
        assert_eq!(before, l.model);
    }

    #[test]
    fn memory_grows_and_old_projections_stay_frozen() {
        let s = stream();
        let mut l = ContinualLearner::new(small_cfg(Method::Trgp), 12, 2, 3).unwrap();
        let mut cols = vec![0; 2];
        for t in &s.tasks {
            let art = l.learn_task(t).unwrap().clone();
            assert!(art.merged_columns.iter().zip(&cols).all(|(a, b)| a >= b));
            cols = art.merged_columns.clone();
            assert!(l.frozen_projection_drift() < 1e-5);
        }
        l.store.check_orthonormal(1e-6).unwrap();
        let mut art = l.artifacts[0].clone();
        assert!(matches!(
            finalize_task(&l.model, &mut l.store, &s.tasks[0], &mut art, &l.cfg),
            Err(TrainerError::Subspace(SubspaceError::AlreadyFinalized(0)))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let s = stream();
        let mut cfg = small_cfg(Method::Sgd);
        cfg.lr = 1e200;
        let mut l = ContinualLearner::new(cfg, 12, 2, 3).unwrap();
        assert!(matches!(
            l.learn_task(&s.tasks[0]),
            Err(TrainerError::DivergedLoss { task: 0, .. }) | Err(TrainerError::Network(_))
        ));
    }

    #[test]
    fn joint_on_one_task_equals_sgd() {
        let s = stream();
        let mut a = ContinualLearner::new(small_cfg(Method::Sgd), 12, 2, 3).unwrap();
        a.learn_task(&s.tasks[0]).unwrap();
        let mut b = ContinualLearner::new(small_cfg(Method::Multitask), 12, 2, 3).unwrap();
        train_joint(&mut b.model, &s.tasks[..1], &b.cfg).unwrap();
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn sign_flip_single_layer_runs() {
        let s = gen_sign_flip_pair(50, 1).unwrap();
        let cfg = TrainerConfig {
            hidden: vec![],
            ..small_cfg(Method::Trgp)
        };
        let cfg = TrainerConfig {
            head: HeadMode::Single,
            ..cfg
        };
        let mut l = ContinualLearner::new(cfg, 2, 2, 2).unwrap();
        l.learn_task(&s.tasks[0]).unwrap();
        l.learn_task(&s.tasks[1]).unwrap();
        assert!(l.evaluate(&s.tasks[1]).unwrap() > 0.5);
    }
}
