//! Single-shot selection of the old tasks most correlated with a new one.
//!
//! One batch of the new task is pushed through the previous model to get the
//! gradient of every layer. An old task `j` is trusted at layer `l` when the
//! gradient keeps at least a fraction `epsilon` of its Frobenius norm after
//! projection onto `span(B_j^l)`; the `top_k` largest ratios are kept.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{frobenius_norm, LinalgError, Matrix};
use crate::network::{backward, forward_with_trace, Mlp, NetworkError, Selections};
use crate::subspace::SubspaceStore;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrustRegionError {
    #[error("probe batch is empty")]
    EmptyBatch,
    #[error("gradient is zero")]
    ZeroGradient,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TrustMode {
    /// Independent selection per layer.
    #[default]
    Layerwise,
    /// One selection from the whole-network gradient, shared by all layers.
    Taskwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrustRegionConfig {
    pub epsilon: f64,
    pub top_k: usize,
    pub probe_batch: usize,
    pub mode: TrustMode,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.5,
            top_k: 2,
            probe_batch: 64,
            mode: TrustMode::Layerwise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub old_task: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSelection {
    pub layer: usize,
    /// Every old task with its ratio, in task order.
    pub candidates: Vec<Candidate>,
    /// The trusted tasks, by ratio descending.
    pub chosen: Vec<Candidate>,
}

/// Trust region of one new task: the record written to the selection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionSelection {
    pub new_task: usize,
    pub epsilon: f64,
    pub top_k: usize,
    pub mode: TrustMode,
    pub layers: Vec<LayerSelection>,
}

impl TrustRegionSelection {
    pub fn empty(new_task: usize, num_layers: usize, cfg: &TrustRegionConfig) -> Self {
        Self {
            new_task,
            epsilon: cfg.epsilon,
            top_k: cfg.top_k,
            mode: cfg.mode,
            layers: (0..num_layers)
                .map(|layer| LayerSelection {
                    layer,
                    candidates: Vec::new(),
                    chosen: Vec::new(),
                })
                .collect(),
        }
    }

    pub fn chosen(&self, layer: usize) -> &[Candidate] {
        self.layers.get(layer).map_or(&[], |l| l.chosen.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.layers.iter().all(|l| l.chosen.is_empty())
    }
}

/// Gradient of the loss of `batch` at every projected layer of `model`,
/// from one forward-backward pass with no scaled projections.
pub fn probe_gradient(model: &Mlp, batch: &Matrix, labels: &[usize], task: usize) -> Result<Vec<Matrix>, TrustRegionError> {
    if batch.rows() == 0 {
        return Err(TrustRegionError::EmptyBatch);
    }
    let plain = Selections::empty(model.num_layers());
    let trace = forward_with_trace(model, &plain, batch, labels, task)?;
    Ok(backward(&trace, model, &plain)?.weights)
}

/// `‖grad·B·B'‖_F / ‖grad‖_F`.
pub fn projection_ratio(grad: &Matrix, basis: &Matrix) -> Result<f64, TrustRegionError> {
    Ok(projected_norm(grad, basis)? / nonzero_norm(grad)?)
}

fn nonzero_norm(grad: &Matrix) -> Result<f64, TrustRegionError> {
    let n = frobenius_norm(grad);
    if n > 0.0 {
        Ok(n)
    } else {
        Err(TrustRegionError::ZeroGradient)
    }
}

fn projected_norm(grad: &Matrix, basis: &Matrix) -> Result<f64, TrustRegionError> {
    if grad.cols() != basis.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "projection_ratio",
            left: grad.shape(),
            right: basis.shape(),
        }
        .into());
    }
    Ok(frobenius_norm(&crate::linalg::project_rows_unchecked(grad, basis)))
}

/// Keeps ratios `≥ epsilon`, sorted descending (ties to the smaller task id),
/// truncated to `k`.
pub fn select_top_k(ratios: &[Candidate], epsilon: f64, k: usize) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = ratios.iter().copied().filter(|c| c.ratio >= epsilon).collect();
    kept.sort_by(|a, b| b.ratio.total_cmp(&a.ratio).then(a.old_task.cmp(&b.old_task)));
    kept.truncate(k);
    kept
}

/// Builds the trust region of `new_task` from probe gradients and the bases
/// of every finalized task in `store`.
pub fn determine_trust_region(
    grads: &[Matrix],
    store: &SubspaceStore,
    new_task: usize,
    cfg: &TrustRegionConfig,
) -> Result<TrustRegionSelection, TrustRegionError> {
    let mut sel = TrustRegionSelection::empty(new_task, grads.len(), cfg);
    let old: Vec<usize> = store.finalized_tasks().filter(|&t| t != new_task).collect();
    if old.is_empty() || cfg.top_k == 0 {
        return Ok(sel);
    }
    match cfg.mode {
        TrustMode::Layerwise => {
            for (l, g) in grads.iter().enumerate() {
                let gnorm = frobenius_norm(g);
                let mut candidates = Vec::with_capacity(old.len());
                for &j in &old {
                    let Some(b) = store.basis(j, l) else { continue };
                    let ratio = if gnorm > 0.0 { projected_norm(g, &b.basis)? / gnorm } else { 0.0 };
                    candidates.push(Candidate { old_task: j, ratio });
                }
                // a zero gradient carries no correlation information
                let chosen = if gnorm > 0.0 {
                    select_top_k(&candidates, cfg.epsilon, cfg.top_k)
                } else {
                    Vec::new()
                };
                sel.layers[l].candidates = candidates;
                sel.layers[l].chosen = chosen;
            }
        }
        TrustMode::Taskwise => {
            let total: f64 = grads.iter().map(|g| frobenius_norm(g).powi(2)).sum::<f64>().sqrt();
            let mut candidates = Vec::with_capacity(old.len());
            for &j in &old {
                let mut proj = 0.0;
                for (l, g) in grads.iter().enumerate() {
                    if let Some(b) = store.basis(j, l) {
                        proj += projected_norm(g, &b.basis)?.powi(2);
                    }
                }
                let ratio = if total > 0.0 { proj.sqrt() / total } else { 0.0 };
                candidates.push(Candidate { old_task: j, ratio });
            }
            let chosen = if total > 0.0 {
                select_top_k(&candidates, cfg.epsilon, cfg.top_k)
            } else {
                Vec::new()
            };
            for layer in &mut sel.layers {
                layer.candidates = candidates.clone();
                layer.chosen = chosen.clone();
            }
        }
    }
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subspace::LayerBasis;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn c(old_task: usize, ratio: f64) -> Candidate {
        Candidate { old_task, ratio }
    }

    #[test]
    fn ratio_examples() {
        let e1 = Matrix::from_rows(&[[1.0], [0.0]]);
        let inside = Matrix::from_rows(&[[2.0, 0.0], [-1.0, 0.0]]);
        assert!((projection_ratio(&inside, &e1).unwrap() - 1.0).abs() < 1e-9);
        let outside = Matrix::from_rows(&[[0.0, 3.0]]);
        assert!(projection_ratio(&outside, &e1).unwrap().abs() < 1e-9);
        let diag = Matrix::from_rows(&[[1.0, 1.0]]);
        assert!((projection_ratio(&diag, &e1).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert_eq!(
            projection_ratio(&Matrix::zeros(1, 2), &e1).unwrap_err(),
            TrustRegionError::ZeroGradient
        );
        assert!(matches!(
            projection_ratio(&Matrix::zeros(1, 3), &e1),
            Err(TrustRegionError::Linalg(_))
        ));
    }

    #[test]
    fn top_k_examples() {
        let ratios = [c(1, 0.9), c(2, 0.6), c(3, 0.3)];
        assert_eq!(select_top_k(&ratios, 0.5, 2), vec![c(1, 0.9), c(2, 0.6)]);
        assert!(select_top_k(&ratios, 0.95, 2).is_empty());
        let tied = [c(4, 0.7), c(2, 0.7), c(3, 0.8)];
        assert_eq!(select_top_k(&tied, 0.5, 2), vec![c(3, 0.8), c(2, 0.7)]);
    }

    #[test]
    fn defaults_match_reported_setup() {
        let cfg = TrustRegionConfig::default();
        assert_eq!(cfg.epsilon, 0.5);
        assert_eq!(cfg.top_k, 2);
    }

    #[test]
    fn zero_gradient_layer_selects_nothing() {
        let mut store = SubspaceStore::new(vec![2], 1e-3);
        store
            .insert_task(
                0,
                vec![LayerBasis {
                    task: 0,
                    layer: 0,
                    basis: Arc::new(Matrix::identity(2)),
                    reused: vec![false; 2],
                }],
            )
            .unwrap();
        let cfg = TrustRegionConfig::default();
        let sel = determine_trust_region(&[Matrix::zeros(3, 2)], &store, 1, &cfg).unwrap();
        assert!(sel.is_empty());
        let sel = determine_trust_region(&[Matrix::from_rows(&[[1.0, 0.0]])], &store, 1, &cfg).unwrap();
        assert_eq!(sel.chosen(0), &[c(0, 1.0)]);
        let task_cfg = TrustRegionConfig {
            mode: TrustMode::Taskwise,
            ..cfg
        };
        let sel = determine_trust_region(&[Matrix::from_rows(&[[1.0, 0.0]])], &store, 1, &task_cfg).unwrap();
        assert_eq!(sel.chosen(0), &[c(0, 1.0)]);
    }

    proptest! {
        #[test]
        fn k1_is_prefix_of_k2(r in proptest::collection::vec(0.0f64..1.0, 0..8), eps in 0.0f64..1.0) {
            let ratios: Vec<Candidate> = r.iter().enumerate().map(|(i, &x)| c(i, x)).collect();
            let one = select_top_k(&ratios, eps, 1);
            let two = select_top_k(&ratios, eps, 2);
            prop_assert!(two.starts_with(&one));
            prop_assert!(two.iter().all(|x| x.ratio >= eps));
        }
    }
}
