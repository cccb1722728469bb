//! Bias-free fully connected network with explicit forward traces.
//!
//! Each projected layer may carry a list of [`ScaledProjection`]s, which
//! turn its weight into the effective weight
//!
//! ```text
//! W_eff = W + Σ_j W·B_j·(Q_j − I)·B_j'  =  W · P,   P = I + Σ_j B_j (Q_j − I) B_j'
//! ```
//!
//! The forward pass never materializes `W_eff`: it feeds `x̃ = P·x` through
//! `W`, so each selection costs `O(batch · in · k)` instead of `O(out · in · k)`.
//! The same `x̃` gives the weight gradient `dL/dW = Δ'·X̃` in factored form.
//!
//! Layers have no bias terms, so orthogonality of an update to an input
//! subspace is exactly orthogonality of `ΔW·x`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{LinalgError, Matrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("trace does not belong to this model/selection")]
    TraceMismatch,
    #[error("batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeadMode {
    /// One output layer shared by every task; it is projected like the rest.
    #[default]
    Single,
    /// One output layer per task, trained only during its own task.
    PerTask,
}

/// Weights of the network.
///
/// `layers` are the shared, projected layers (`out × in`). In single-head
/// mode the last of them is the output layer; in per-task mode every shared
/// layer is hidden and `heads[t]` maps the last hidden width to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Matrix>,
    heads: Vec<Matrix>,
}

impl Mlp {
    /// Uniform `±1/√fan_in` initialization.
    pub fn new(
        input: usize,
        hidden: &[usize],
        classes: usize,
        head: HeadMode,
        num_tasks: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut init = |out: usize, inp: usize| {
            let bound = 1.0 / (inp as f64).sqrt();
            Matrix::from_fn(out, inp, |_, _| rng.random_range(-bound..bound))
        };
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        let mut layers: Vec<Matrix> = widths.windows(2).map(|w| init(w[1], w[0])).collect();
        let last = *widths.last().expect("input width");
        let heads = match head {
            HeadMode::Single => {
                layers.push(init(classes, last));
                Vec::new()
            }
            HeadMode::PerTask => (0..num_tasks.max(1)).map(|_| init(classes, last)).collect(),
        };
        Self { layers, heads }
    }

    pub fn from_layers(layers: Vec<Matrix>, heads: Vec<Matrix>) -> Result<Self, NetworkError> {
        if layers.is_empty() {
            return Err(NetworkError::ShapeMismatch("network needs at least one layer".into()));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[1].cols() != w[0].rows() {
                return Err(NetworkError::ShapeMismatch(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    w[0].rows(),
                    i + 1,
                    w[1].cols()
                )));
            }
        }
        let last_out = layers.last().map(|w| w.rows()).unwrap_or(0);
        for (t, h) in heads.iter().enumerate() {
            if h.cols() != last_out || h.rows() != heads[0].rows() {
                return Err(NetworkError::ShapeMismatch(format!("head {t} has shape {:?}", h.shape())));
            }
        }
        if layers.iter().chain(&heads).any(|w| !w.all_finite()) {
            return Err(NetworkError::ShapeMismatch("non-finite weight".into()));
        }
        Ok(Self { layers, heads })
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut Matrix {
        &mut self.layers[l]
    }

    pub fn heads(&self) -> &[Matrix] {
        &self.heads
    }

    pub fn head_mut(&mut self, task: usize) -> &mut Matrix {
        &mut self.heads[task]
    }

    pub fn head_mode(&self) -> HeadMode {
        if self.heads.is_empty() {
            HeadMode::Single
        } else {
            HeadMode::PerTask
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].cols()
    }

    /// Input width of each projected layer.
    pub fn layer_input_widths(&self) -> Vec<usize> {
        self.layers.iter().map(|w| w.cols()).collect()
    }

    pub fn num_classes(&self) -> usize {
        match self.heads.first() {
            Some(h) => h.rows(),
            None => self.layers.last().expect("layer").rows(),
        }
    }

    fn head_for(&self, task: usize) -> Result<Option<&Matrix>, NetworkError> {
        if self.heads.is_empty() {
            return Ok(None);
        }
        self.heads
            .get(task)
            .map(Some)
            .ok_or_else(|| NetworkError::ShapeMismatch(format!("no head for task {task}")))
    }

    /// Whether shared layer `l` is followed by a ReLU.
    fn is_hidden(&self, l: usize) -> bool {
        !self.heads.is_empty() || l + 1 < self.layers.len()
    }
}

/// Learnable square matrix `Q` rescaling one old task's frozen weight
/// projection at one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingMatrix {
    pub old_task: usize,
    pub layer: usize,
    pub q: Matrix,
}

impl ScalingMatrix {
    pub fn identity(old_task: usize, layer: usize, rank: usize) -> Self {
        Self {
            old_task,
            layer,
            q: Matrix::identity(rank),
        }
    }
}

/// An old task's basis paired with the scaling matrix applied to it.
#[derive(Debug, Clone)]
pub struct ScaledProjection {
    pub basis: Arc<Matrix>,
    pub scaling: ScalingMatrix,
}

impl ScaledProjection {
    pub fn new(basis: Arc<Matrix>, scaling: ScalingMatrix) -> Result<Self, NetworkError> {
        let k = basis.cols();
        if scaling.q.shape() != (k, k) {
            return Err(NetworkError::ShapeMismatch(format!(
                "scaling matrix {:?} does not match basis rank {k}",
                scaling.q.shape()
            )));
        }
        Ok(Self { basis, scaling })
    }

    /// `Q − I`
    fn q_minus_identity(&self) -> Matrix {
        let mut d = self.scaling.q.clone();
        for i in 0..d.rows() {
            d.set(i, i, d.get(i, i) - 1.0);
        }
        d
    }
}

/// Per-layer scaled projections active for one task.
#[derive(Debug, Clone, Default)]
pub struct Selections {
    layers: Vec<Vec<ScaledProjection>>,
}

impl Selections {
    pub fn empty(num_layers: usize) -> Self {
        Self {
            layers: vec![Vec::new(); num_layers],
        }
    }

    pub fn from_layers(layers: Vec<Vec<ScaledProjection>>) -> Self {
        Self { layers }
    }

    pub fn layer(&self, l: usize) -> &[ScaledProjection] {
        self.layers.get(l).map_or(&[], |v| v.as_slice())
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut Vec<ScaledProjection> {
        &mut self.layers[l]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(|l| l.is_empty())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &ScaledProjection)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(l, v)| v.iter().map(move |s| (l, s)))
    }

    pub fn scalings(&self) -> Vec<ScalingMatrix> {
        self.iter().map(|(_, s)| s.scaling.clone()).collect()
    }

    fn check(&self, model: &Mlp) -> Result<(), NetworkError> {
        if self.layers.len() > model.num_layers() {
            return Err(NetworkError::ShapeMismatch("more selection layers than network layers".into()));
        }
        for (l, s) in self.iter() {
            let k = s.basis.cols();
            if s.basis.rows() != model.layers[l].cols() || s.scaling.q.shape() != (k, k) {
                return Err(NetworkError::ShapeMismatch(format!(
                    "selection for task {} at layer {l} has basis {:?}, Q {:?}, layer input {}",
                    s.scaling.old_task,
                    s.basis.shape(),
                    s.scaling.q.shape(),
                    model.layers[l].cols()
                )));
            }
        }
        Ok(())
    }
}

/// `W + Σ_j W·B_j·(Q_j − I)·B_j'`.
pub fn effective_weight(w: &Matrix, selections: &[ScaledProjection]) -> Result<Matrix, NetworkError> {
    let mut out = w.clone();
    for s in selections {
        if s.basis.rows() != w.cols() {
            return Err(LinalgError::DimensionMismatch {
                op: "effective_weight",
                left: w.shape(),
                right: s.basis.shape(),
            }
            .into());
        }
        let wb = w.matmul(&s.basis)?;
        let scaled = wb.matmul(&s.q_minus_identity())?;
        out.gemm_acc(1.0, &scaled, false, &s.basis, true)?;
    }
    Ok(out)
}

/// `X̃ = X + Σ_j (X·B_j)·(Q_j − I)'·B_j'` together with the coordinates `X·B_j`.
fn effective_input(x: &Matrix, selections: &[ScaledProjection]) -> Result<(Matrix, Vec<Matrix>), NetworkError> {
    let mut xt = x.clone();
    let mut coords = Vec::with_capacity(selections.len());
    for s in selections {
        let c = x.matmul(&s.basis)?;
        let shifted = c.matmul_t(&s.q_minus_identity())?;
        xt.gemm_acc(1.0, &shifted, false, &s.basis, true)?;
        coords.push(c);
    }
    Ok((xt, coords))
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Layer input `X` (`batch × in`), i.e. the representations.
    pub input: Matrix,
    /// `X̃ = X · P'`.
    pub effective_input: Matrix,
    /// `X · B_j` for each selection, in selection order.
    pub coords: Vec<Matrix>,
    /// `X̃ · W'` (`batch × out`).
    pub pre_activation: Matrix,
}

#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
    pub head: Option<LayerTrace>,
    pub probabilities: Matrix,
    pub labels: Vec<usize>,
    pub loss: f64,
    pub task: usize,
}

impl ForwardTrace {
    pub fn logits(&self) -> &Matrix {
        match &self.head {
            Some(h) => &h.pre_activation,
            None => &self.layers.last().expect("layer").pre_activation,
        }
    }

    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }
}

fn relu_in_place(m: &mut Matrix) {
    m.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Runs the batch (`batch × input`) through the effective weights and
/// records every layer's input. The loss is mean softmax cross-entropy.
pub fn forward_with_trace(
    model: &Mlp,
    selections: &Selections,
    batch: &Matrix,
    labels: &[usize],
    task: usize,
) -> Result<ForwardTrace, NetworkError> {
    if batch.rows() == 0 {
        return Err(NetworkError::EmptyBatch);
    }
    if batch.cols() != model.input_width() || labels.len() != batch.rows() {
        return Err(NetworkError::ShapeMismatch(format!(
            "batch {:?} with {} labels for input width {}",
            batch.shape(),
            labels.len(),
            model.input_width()
        )));
    }
    selections.check(model)?;
    let classes = model.num_classes();
    if let Some(bad) = labels.iter().find(|&&y| y >= classes) {
        return Err(NetworkError::ShapeMismatch(format!("label {bad} out of range for {classes} classes")));
    }
    let head = model.head_for(task)?;

    let mut traces = Vec::with_capacity(model.num_layers());
    let mut x = batch.clone();
    for (l, w) in model.layers.iter().enumerate() {
        let (xt, coords) = effective_input(&x, selections.layer(l))?;
        let z = xt.matmul_t(w)?;
        let mut next = z.clone();
        if model.is_hidden(l) {
            relu_in_place(&mut next);
        }
        traces.push(LayerTrace {
            input: std::mem::replace(&mut x, next),
            effective_input: xt,
            coords,
            pre_activation: z,
        });
    }
    let head_trace = match head {
        Some(h) => {
            let z = x.matmul_t(h)?;
            Some(LayerTrace {
                effective_input: x.clone(),
                input: x,
                coords: Vec::new(),
                pre_activation: z,
            })
        }
        None => None,
    };
    let logits = match &head_trace {
        Some(h) => &h.pre_activation,
        None => &traces.last().expect("layer").pre_activation,
    };
    let (probabilities, loss) = softmax_cross_entropy(logits, labels);
    if !loss.is_finite() {
        return Err(NetworkError::NonFiniteLoss);
    }
    Ok(ForwardTrace {
        layers: traces,
        head: head_trace,
        probabilities,
        labels: labels.to_vec(),
        loss,
        task,
    })
}

/// Row-wise softmax and the mean negative log-likelihood of `labels`.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> (Matrix, f64) {
    let mut probs = logits.clone();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = probs.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let log_sum = sum.ln();
        total += -(logits.get(i, y) - max - log_sum);
        row.iter_mut().for_each(|v| *v /= sum);
    }
    (probs, total / labels.len() as f64)
}

/// Logits for a batch, without keeping the trace.
pub fn logits(model: &Mlp, selections: &Selections, batch: &Matrix, task: usize) -> Result<Matrix, NetworkError> {
    if batch.cols() != model.input_width() {
        return Err(NetworkError::ShapeMismatch(format!(
            "batch width {} for input width {}",
            batch.cols(),
            model.input_width()
        )));
    }
    selections.check(model)?;
    let head = model.head_for(task)?;
    let mut x = batch.clone();
    for (l, w) in model.layers.iter().enumerate() {
        let (xt, _) = effective_input(&x, selections.layer(l))?;
        x = xt.matmul_t(w)?;
        if model.is_hidden(l) {
            relu_in_place(&mut x);
        }
    }
    match head {
        Some(h) => Ok(x.matmul_t(h)?),
        None => Ok(x),
    }
}

/// Layer inputs (representations) for a batch, one `batch × in` matrix per
/// projected layer.
pub fn layer_inputs(model: &Mlp, selections: &Selections, batch: &Matrix) -> Result<Vec<Matrix>, NetworkError> {
    if batch.cols() != model.input_width() {
        return Err(NetworkError::ShapeMismatch(format!(
            "batch width {} for input width {}",
            batch.cols(),
            model.input_width()
        )));
    }
    selections.check(model)?;
    let mut out = Vec::with_capacity(model.num_layers());
    let mut x = batch.clone();
    for (l, w) in model.layers.iter().enumerate() {
        let (xt, _) = effective_input(&x, selections.layer(l))?;
        let mut next = xt.matmul_t(w)?;
        if model.is_hidden(l) {
            relu_in_place(&mut next);
        }
        out.push(std::mem::replace(&mut x, next));
    }
    Ok(out)
}

/// Weight gradient kept as the product `delta' · input` (`out × in`).
#[derive(Debug, Clone)]
pub struct FactoredGradient {
    /// `dL/dZ`, `batch × out`.
    pub delta: Matrix,
    /// `X̃`, `batch × in`.
    pub input: Matrix,
}

impl FactoredGradient {
    pub fn dense(&self) -> Matrix {
        self.delta.t_matmul(&self.input).expect("factor shapes")
    }
}

#[derive(Debug, Clone)]
pub struct FactoredGradients {
    pub layers: Vec<FactoredGradient>,
    pub head: Option<FactoredGradient>,
    /// `dL/dQ` per layer, aligned with the selections of that layer.
    pub scales: Vec<Vec<Matrix>>,
}

/// Dense gradients: `dL/dW` per layer, the head gradient, and `dL/dQ` per
/// selection.
#[derive(Debug, Clone)]
pub struct LayerGradients {
    pub weights: Vec<Matrix>,
    pub head: Option<Matrix>,
    pub scales: Vec<Vec<Matrix>>,
}

impl From<&FactoredGradients> for LayerGradients {
    fn from(f: &FactoredGradients) -> Self {
        Self {
            weights: f.layers.iter().map(FactoredGradient::dense).collect(),
            head: f.head.as_ref().map(FactoredGradient::dense),
            scales: f.scales.clone(),
        }
    }
}

fn check_trace(trace: &ForwardTrace, model: &Mlp, selections: &Selections) -> Result<(), NetworkError> {
    if trace.layers.len() != model.num_layers() || trace.head.is_some() != !model.heads.is_empty() {
        return Err(NetworkError::TraceMismatch);
    }
    for (l, lt) in trace.layers.iter().enumerate() {
        if lt.coords.len() != selections.layer(l).len()
            || lt.input.cols() != model.layers[l].cols()
            || lt.pre_activation.cols() != model.layers[l].rows()
        {
            return Err(NetworkError::TraceMismatch);
        }
    }
    Ok(())
}

/// Backpropagation through the effective-weight map, in factored form.
///
/// With `G = dL/dW_eff`: `dL/dW = G·P'` (returned as `Δ'·X̃`) and
/// `dL/dQ_j = B_j'·W'·G·B_j = (Δ·W·B_j)'·(X·B_j)`.
pub fn backward_factored(
    trace: &ForwardTrace,
    model: &Mlp,
    selections: &Selections,
) -> Result<FactoredGradients, NetworkError> {
    check_trace(trace, model, selections)?;
    let b = trace.batch_size() as f64;
    // dL/dlogits for mean cross-entropy
    let mut delta = trace.probabilities.clone();
    for (i, &y) in trace.labels.iter().enumerate() {
        delta.set(i, y, delta.get(i, y) - 1.0);
    }
    delta.as_mut_slice().iter_mut().for_each(|v| *v /= b);

    let head = match (&trace.head, model.head_for(trace.task)?) {
        (Some(ht), Some(h)) => {
            let upstream = delta.matmul(h)?;
            let g = FactoredGradient {
                delta,
                input: ht.input.clone(),
            };
            delta = upstream;
            mask_relu(&mut delta, &trace.layers.last().expect("layer").pre_activation);
            Some(g)
        }
        _ => None,
    };

    let n = model.num_layers();
    let mut layers: Vec<Option<FactoredGradient>> = vec![None; n];
    let mut scales: Vec<Vec<Matrix>> = vec![Vec::new(); n];
    for l in (0..n).rev() {
        let lt = &trace.layers[l];
        let w = &model.layers[l];
        let sel = selections.layer(l);
        let need_upstream = l > 0;
        let dw_input = if need_upstream || !sel.is_empty() {
            Some(delta.matmul(w)?)
        } else {
            None
        };
        let mut upstream = if need_upstream { dw_input.clone() } else { None };
        let mut dq = Vec::with_capacity(sel.len());
        for (s, coords) in sel.iter().zip(&lt.coords) {
            let dwb = dw_input.as_ref().expect("computed when selections exist").matmul(&s.basis)?;
            dq.push(dwb.t_matmul(coords)?);
            if let Some(up) = upstream.as_mut() {
                let shifted = dwb.matmul(&s.q_minus_identity())?;
                up.gemm_acc(1.0, &shifted, false, &s.basis, true)?;
            }
        }
        scales[l] = dq;
        layers[l] = Some(FactoredGradient {
            delta: std::mem::replace(&mut delta, Matrix::zeros(0, 0)),
            input: lt.effective_input.clone(),
        });
        if need_upstream {
            let mut up = upstream.expect("upstream gradient");
            mask_relu(&mut up, &trace.layers[l - 1].pre_activation);
            delta = up;
        }
    }
    Ok(FactoredGradients {
        layers: layers.into_iter().map(|g| g.expect("every layer visited")).collect(),
        head,
        scales,
    })
}

pub fn backward(trace: &ForwardTrace, model: &Mlp, selections: &Selections) -> Result<LayerGradients, NetworkError> {
    Ok(LayerGradients::from(&backward_factored(trace, model, selections)?))
}

fn mask_relu(grad: &mut Matrix, pre_activation: &Matrix) {
    for (g, z) in grad.as_mut_slice().iter_mut().zip(pre_activation.as_slice()) {
        if *z <= 0.0 {
            *g = 0.0;
        }
    }
}

/// `grad − grad·M·M'`: removes the part of each gradient row lying in the
/// span of the merged old-task basis `M` (`in × K`).
pub fn project_gradient(grad: &Matrix, merged: &Matrix) -> Result<Matrix, NetworkError> {
    if merged.cols() > 0 && merged.rows() != grad.cols() {
        return Err(LinalgError::DimensionMismatch {
            op: "project_gradient",
            left: grad.shape(),
            right: merged.shape(),
        }
        .into());
    }
    Ok(crate::linalg::reject_rows_unchecked(grad, merged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthogonalize_against;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormal(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        while cols.len() < k {
            let mut c: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = orthogonalize_against(&mut c, &Matrix::from_columns(m, &cols));
            if n > 1e-3 {
                cols.push(c.iter().map(|v| v / n).collect());
            }
        }
        Matrix::from_columns(m, &cols)
    }

    fn selection(basis: Matrix, q: Matrix, task: usize, layer: usize) -> ScaledProjection {
        ScaledProjection::new(Arc::new(basis), ScalingMatrix { old_task: task, layer, q }).unwrap()
    }

    /// Independent per-sample forward pass with explicit effective weights.
    fn naive_loss(model: &Mlp, sel: &Selections, x: &Matrix, labels: &[usize], task: usize) -> f64 {
        let weights: Vec<Matrix> = model
            .layers()
            .iter()
            .enumerate()
            .map(|(l, w)| effective_weight(w, sel.layer(l)).unwrap())
            .collect();
        let mut total = 0.0;
        for i in 0..x.rows() {
            let mut h: Vec<f64> = x.row(i).to_vec();
            for (l, w) in weights.iter().enumerate() {
                let mut z: Vec<f64> = (0..w.rows())
                    .map(|o| (0..w.cols()).map(|c| w.get(o, c) * h[c]).sum())
                    .collect();
                if model.is_hidden(l) {
                    z.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                h = z;
            }
            if let Some(head) = model.heads().get(task) {
                h = (0..head.rows())
                    .map(|o| (0..head.cols()).map(|c| head.get(o, c) * h[c]).sum())
                    .collect();
            }
            let max = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = h.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += lse - h[labels[i]];
        }
        total / x.rows() as f64
    }

    #[test]
    fn effective_weight_examples() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(effective_weight(&w, &[]).unwrap(), w);

        let e1 = Matrix::from_rows(&[[1.0], [0.0]]);
        let ident = selection(e1.clone(), Matrix::identity(1), 0, 0);
        assert!(effective_weight(&w, &[ident]).unwrap().max_abs_diff(&w) <= 1e-12);

        let doubled = selection(e1, Matrix::from_rows(&[[2.0]]), 0, 0);
        let eff = effective_weight(&w, &[doubled]).unwrap();
        assert_eq!(eff, Matrix::from_rows(&[[2.0, 2.0], [6.0, 4.0]]));

        let wrong = selection(Matrix::identity(3), Matrix::identity(3), 0, 0);
        assert!(effective_weight(&w, &[wrong]).is_err());
        assert!(ScaledProjection::new(Arc::new(Matrix::identity(2)), ScalingMatrix::identity(0, 0, 1)).is_err());
    }

    #[test]
    fn zero_network_gives_uniform_loss() {
        let model = Mlp::from_layers(vec![Matrix::zeros(4, 3), Matrix::zeros(5, 4)], vec![]).unwrap();
        let x = Matrix::from_rows(&[[1.0, -2.0, 0.5], [0.0, 3.0, 1.0]]);
        let tr = forward_with_trace(&model, &Selections::empty(2), &x, &[0, 4], 0).unwrap();
        assert!((tr.loss - (5.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit_gives_near_zero_loss() {
        let model = Mlp::from_layers(vec![Matrix::from_rows(&[[100.0, 0.0], [0.0, -100.0]])], vec![]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 0.0]]);
        let tr = forward_with_trace(&model, &Selections::empty(1), &x, &[0], 0).unwrap();
        assert!(tr.loss < 1e-40);
    }

    #[test]
    fn forward_matches_naive_per_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = Mlp::new(6, &[5, 4], 3, HeadMode::Single, 1, &mut rng);
        let b = orthonormal(5, 2, &mut rng);
        let q = Matrix::identity(2).add(&random(2, 2, &mut rng).scale(0.3)).unwrap();
        let mut sel = Selections::empty(3);
        sel.layer_mut(1).push(selection(b, q, 0, 1));
        let x = random(7, 6, &mut rng);
        let labels = [0, 1, 2, 0, 1, 2, 1];
        let tr = forward_with_trace(&model, &sel, &x, &labels, 0).unwrap();
        let expect = naive_loss(&model, &sel, &x, &labels, 0);
        assert!((tr.loss - expect).abs() <= 1e-10);
        let lg = logits(&model, &sel, &x, 0).unwrap();
        assert!(lg.max_abs_diff(tr.logits()) < 1e-12);
    }

    #[test]
    fn forward_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Mlp::new(3, &[2], 2, HeadMode::Single, 1, &mut rng);
        let sel = Selections::empty(2);
        assert_eq!(
            forward_with_trace(&model, &sel, &Matrix::zeros(0, 3), &[], 0).unwrap_err(),
            NetworkError::EmptyBatch
        );
        assert!(matches!(
            forward_with_trace(&model, &sel, &Matrix::zeros(1, 4), &[0], 0),
            Err(NetworkError::ShapeMismatch(_))
        ));
        let nan = Mlp::from_layers(vec![Matrix::from_rows(&[[1e308, 0.0], [-1e308, 0.0]])], vec![]).unwrap();
        let x = Matrix::from_rows(&[[10.0, 0.0]]);
        assert_eq!(
            forward_with_trace(&nan, &Selections::empty(1), &x, &[1], 0).unwrap_err(),
            NetworkError::NonFiniteLoss
        );
    }

    #[test]
    fn q_identity_leaves_function_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = Mlp::new(5, &[6], 3, HeadMode::Single, 1, &mut rng);
        let mut sel = Selections::empty(2);
        sel.layer_mut(0).push(selection(orthonormal(5, 3, &mut rng), Matrix::identity(3), 0, 0));
        sel.layer_mut(1).push(selection(orthonormal(6, 2, &mut rng), Matrix::identity(2), 1, 1));
        let x = random(20, 5, &mut rng);
        let a = logits(&model, &Selections::empty(2), &x, 0).unwrap();
        let b = logits(&model, &sel, &x, 0).unwrap();
        assert!(a.max_abs_diff(&b) <= 1e-10);
    }

    #[test]
    fn single_layer_gradient_closed_form() {
        let w = Matrix::from_rows(&[[0.2, -0.1, 0.4], [0.3, 0.5, -0.2]]);
        let model = Mlp::from_layers(vec![w], vec![]).unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0, -1.0]]);
        let tr = forward_with_trace(&model, &Selections::empty(1), &x, &[1], 0).unwrap();
        let g = backward(&tr, &model, &Selections::empty(1)).unwrap();
        let p = tr.probabilities.row(0).to_vec();
        let onehot = [0.0, 1.0];
        let expect = Matrix::from_fn(2, 3, |i, j| (p[i] - onehot[i]) * x.get(0, j));
        assert!(g.weights[0].max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        // logits ±7.5e4 make the softmax exactly one-hot, so dL/dlogits is 0
        let w1 = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        let w2 = Matrix::from_rows(&[[1e4, 1e4, 1e4], [-1e4, -1e4, -1e4]]);
        let model = Mlp::from_layers(vec![w1, w2], vec![]).unwrap();
        let mut sel = Selections::empty(2);
        let e1 = Matrix::from_rows(&[[1.0], [0.0]]);
        sel.layer_mut(0).push(selection(e1, Matrix::from_rows(&[[1.5]]), 0, 0));
        let x = Matrix::from_rows(&[[1.0, 1.0]]);
        let tr = forward_with_trace(&model, &sel, &x, &[0], 0).unwrap();
        assert_eq!(tr.probabilities.row(0), &[1.0, 0.0]);
        let g = backward(&tr, &model, &sel).unwrap();
        assert!(g.weights.iter().all(|m| m.frobenius_norm() == 0.0));
        assert!(g.scales.iter().flatten().all(|m| m.frobenius_norm() == 0.0));
    }

    #[test]
    fn empty_selection_matches_plain_backprop() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Mlp::new(4, &[3], 2, HeadMode::Single, 1, &mut rng);
        let x = random(5, 4, &mut rng);
        let labels = [0, 1, 1, 0, 1];
        let sel = Selections::empty(2);
        let tr = forward_with_trace(&model, &sel, &x, &labels, 0).unwrap();
        let g = backward(&tr, &model, &sel).unwrap();
        // hand-rolled two-layer backprop
        let mut d2 = tr.probabilities.clone();
        for (i, &y) in labels.iter().enumerate() {
            d2.set(i, y, d2.get(i, y) - 1.0);
        }
        let d2 = d2.scale(1.0 / 5.0);
        let h = &tr.layers[1].input;
        let gw2 = d2.t_matmul(h).unwrap();
        let mut d1 = d2.matmul(&model.layers()[1]).unwrap();
        for i in 0..5 {
            for j in 0..3 {
                if tr.layers[0].pre_activation.get(i, j) <= 0.0 {
                    d1.set(i, j, 0.0);
                }
            }
        }
        let gw1 = d1.t_matmul(&x).unwrap();
        assert!(g.weights[1].max_abs_diff(&gw2) < 1e-14);
        assert!(g.weights[0].max_abs_diff(&gw1) < 1e-14);
    }

    #[test]
    fn per_task_heads_route_by_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = Mlp::new(4, &[3], 2, HeadMode::PerTask, 2, &mut rng);
        assert_eq!(model.heads().len(), 2);
        let x = random(3, 4, &mut rng);
        let sel = Selections::empty(1);
        let a = logits(&model, &sel, &x, 0).unwrap();
        let b = logits(&model, &sel, &x, 1).unwrap();
        assert!(a.max_abs_diff(&b) > 0.0);
        let labels = [0, 1, 0];
        let tr = forward_with_trace(&model, &sel, &x, &labels, 1).unwrap();
        assert!((tr.loss - naive_loss(&model, &sel, &x, &labels, 1)).abs() < 1e-12);
        let g = backward(&tr, &model, &sel).unwrap();
        assert!(g.head.is_some());
        assert!(logits(&model, &sel, &x, 2).is_err());
    }

    #[test]
    fn projection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random(3, 4, &mut rng);
        assert_eq!(project_gradient(&g, &Matrix::zeros(4, 0)).unwrap(), g);
        let full = project_gradient(&g, &Matrix::identity(4)).unwrap();
        assert!(full.frobenius_norm() < 1e-15);
        let m = orthonormal(4, 2, &mut rng);
        let p = project_gradient(&g, &m).unwrap();
        assert!(p.matmul(&m).unwrap().frobenius_norm() <= 1e-8);
        assert!(project_gradient(&g, &Matrix::identity(3)).is_err());

        // the factored path agrees with the dense one
        let delta = random(2, 3, &mut rng);
        let input = random(2, 4, &mut rng);
        let dense = delta.t_matmul(&input).unwrap();
        let factored = delta
            .t_matmul(&crate::linalg::reject_rows_unchecked(&input, &m))
            .unwrap();
        assert!(project_gradient(&dense, &m).unwrap().max_abs_diff(&factored) < 1e-14);
    }
}
