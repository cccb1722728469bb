//! Per-task input subspaces and the merged memory used for gradient
//! projection.
//!
//! After a task finishes, each projected layer's inputs on a sample of the
//! task's data form a representation matrix `R` (`m × n`). Its dominant
//! left singular directions, chosen by an energy threshold, become the task's
//! [`LayerBasis`]. For later tasks the candidates are the old memory
//! directions (scored by `u'RR'u`) together with fresh directions from the SVD
//! of the residual `R − MM'R`. New directions are appended to the layer's
//! [`MergedBasis`], which only ever grows.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CodecError, Reader, Writer};
use crate::linalg::{
    frobenius_norm, norm, orthogonalize_against, orthonormality_error, svd_thin, LinalgError, Matrix, SvdConfig,
};
use crate::network::{layer_inputs, Mlp, NetworkError, Selections};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubspaceError {
    #[error("no samples to build representations from")]
    EmptyDataset,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("representation matrix is zero; no basis can meet the energy threshold")]
    ZeroMatrix,
    #[error("available energy {available:.6e} is below the target {target:.6e}")]
    ThresholdUnreachable { available: f64, target: f64 },
    #[error("energy threshold {0} must lie in (0, 1)")]
    InvalidThreshold(f64),
    #[error("task {0} is already finalized")]
    AlreadyFinalized(usize),
    #[error("basis for task {task} layer {layer} is not orthonormal (deviation {deviation:.3e})")]
    NotOrthonormal { task: usize, layer: usize, deviation: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// Settings for basis extraction and merging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceConfig {
    /// Energy fraction per layer; the last value repeats for deeper layers.
    pub eps_th: Vec<f64>,
    /// Number of samples forwarded to build each representation matrix.
    pub samples: usize,
    /// A candidate direction whose residual against the merged basis is at
    /// most this is treated as already present.
    pub dedup_tolerance: f64,
    pub svd: SvdConfig,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self {
            eps_th: vec![0.97],
            samples: 300,
            dedup_tolerance: 1e-3,
            svd: SvdConfig::default(),
        }
    }
}

impl SubspaceConfig {
    pub fn threshold(&self, layer: usize) -> f64 {
        *self
            .eps_th
            .get(layer)
            .or(self.eps_th.last())
            .expect("at least one threshold")
    }
}

/// Relative slack on the energy comparison so that a threshold met exactly
/// in exact arithmetic is not missed by rounding.
const ENERGY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationMatrix {
    pub task: usize,
    pub layer: usize,
    /// `m` features × `n` samples.
    pub matrix: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerBasis {
    pub task: usize,
    pub layer: usize,
    /// `m × k`, orthonormal columns.
    pub basis: Arc<Matrix>,
    /// Whether each column was taken from an older task's memory.
    pub reused: Vec<bool>,
}

impl LayerBasis {
    pub fn rank(&self) -> usize {
        self.basis.cols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedBasis {
    pub layer: usize,
    /// `m × K`, orthonormal columns.
    pub basis: Matrix,
    /// Tasks that appended at least one direction, in order.
    pub contributors: Vec<usize>,
    /// Set once the basis spans the whole input space.
    pub saturated: bool,
}

impl MergedBasis {
    pub fn empty(layer: usize, width: usize) -> Self {
        Self {
            layer,
            basis: Matrix::zeros(width, 0),
            contributors: Vec::new(),
            saturated: false,
        }
    }

    pub fn width(&self) -> usize {
        self.basis.rows()
    }

    pub fn num_columns(&self) -> usize {
        self.basis.cols()
    }
}

/// Forwards `samples` (`n × input`) under the given effective weights and
/// returns one `m × n` representation matrix per projected layer.
pub fn collect_representations(
    model: &Mlp,
    selections: &Selections,
    samples: &Matrix,
    task: usize,
) -> Result<Vec<RepresentationMatrix>, SubspaceError> {
    if samples.rows() == 0 {
        return Err(SubspaceError::EmptyDataset);
    }
    if samples.cols() != model.input_width() {
        return Err(SubspaceError::ShapeMismatch(format!(
            "samples have width {} but the network expects {}",
            samples.cols(),
            model.input_width()
        )));
    }
    let inputs = layer_inputs(model, selections, samples)?;
    Ok(inputs
        .into_iter()
        .enumerate()
        .map(|(layer, x)| RepresentationMatrix {
            task,
            layer,
            matrix: x.transpose(),
        })
        .collect())
}

fn check_threshold(eps_th: f64) -> Result<(), SubspaceError> {
    if eps_th > 0.0 && eps_th < 1.0 {
        Ok(())
    } else {
        Err(SubspaceError::InvalidThreshold(eps_th))
    }
}

/// Smallest `k` with `Σ_{i≤k} energies[i] ≥ eps_th · total`, for energies
/// already sorted descending.
fn minimal_prefix(energies: impl Iterator<Item = f64>, eps_th: f64, total: f64) -> Option<usize> {
    let target = eps_th * total * (1.0 - ENERGY_SLACK);
    let mut acc = 0.0;
    for (i, e) in energies.enumerate() {
        acc += e;
        if acc >= target {
            return Some(i + 1);
        }
    }
    None
}

/// Leading left singular vectors of `R` holding at least `eps_th` of its
/// squared Frobenius norm.
pub fn extract_basis_first_task(
    r: &RepresentationMatrix,
    eps_th: f64,
    svd: &SvdConfig,
) -> Result<LayerBasis, SubspaceError> {
    check_threshold(eps_th)?;
    let total = frobenius_norm(&r.matrix).powi(2);
    if total == 0.0 {
        return Err(SubspaceError::ZeroMatrix);
    }
    let s = svd_thin(&r.matrix, svd)?;
    let k = minimal_prefix(s.singular_values.iter().map(|v| v * v), eps_th, total).ok_or_else(|| {
        SubspaceError::ThresholdUnreachable {
            available: s.singular_values.iter().map(|v| v * v).sum(),
            target: eps_th * total,
        }
    })?;
    let idx: Vec<usize> = (0..k).collect();
    Ok(LayerBasis {
        task: r.task,
        layer: r.layer,
        basis: Arc::new(s.u.select_columns(&idx)),
        reused: vec![false; k],
    })
}

/// Later-task extraction given the old bases of this layer.
///
/// The old bases are first concatenated with common directions removed
/// (the same merge used for the global memory), then scored together with
/// the residual's singular directions.
pub fn extract_basis_later_task(
    r: &RepresentationMatrix,
    old_bases: &[LayerBasis],
    eps_th: f64,
    cfg: &SubspaceConfig,
) -> Result<LayerBasis, SubspaceError> {
    let mut merged = MergedBasis::empty(r.layer, r.matrix.rows());
    for b in old_bases {
        merged = merge_into_global(&merged, b, cfg.dedup_tolerance)?;
    }
    extract_basis_with_memory(r, &merged.basis, eps_th, &cfg.svd)
}

#[derive(Clone, Copy)]
enum Source {
    Old(usize),
    New(usize),
}

/// Later-task extraction against an already deduplicated memory `M`.
pub fn extract_basis_with_memory(
    r: &RepresentationMatrix,
    memory: &Matrix,
    eps_th: f64,
    svd: &SvdConfig,
) -> Result<LayerBasis, SubspaceError> {
    check_threshold(eps_th)?;
    if memory.cols() == 0 {
        return extract_basis_first_task(r, eps_th, svd);
    }
    let m = r.matrix.rows();
    if memory.rows() != m {
        return Err(SubspaceError::ShapeMismatch(format!(
            "memory has {} rows but representations have {m}",
            memory.rows()
        )));
    }
    let total = frobenius_norm(&r.matrix).powi(2);
    if total == 0.0 {
        return Err(SubspaceError::ZeroMatrix);
    }

    // (1) importance of each memory direction: δ_i = u_i' R R' u_i = ‖R' u_i‖²
    let coords = memory.t_matmul(&r.matrix)?;
    let mut candidates: Vec<(f64, Source)> = (0..memory.cols())
        .map(|i| (coords.row(i).iter().map(|v| v * v).sum(), Source::Old(i)))
        .collect();

    // (2) fresh directions from the residual R − M M' R
    let mut residual = r.matrix.clone();
    residual.gemm_acc(-1.0, memory, false, &coords, false)?;
    let rs = svd_thin(&residual, svd)?;
    candidates.extend(rs.singular_values.iter().enumerate().map(|(h, s)| (s * s, Source::New(h))));

    // (3) pick the most important directions overall
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let k = minimal_prefix(candidates.iter().map(|c| c.0), eps_th, total).ok_or_else(|| {
        SubspaceError::ThresholdUnreachable {
            available: candidates.iter().map(|c| c.0).sum(),
            target: eps_th * total,
        }
    })?;

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut reused = Vec::with_capacity(k);
    let mut fresh: Vec<Vec<f64>> = Vec::new();
    for &(_, src) in &candidates[..k] {
        match src {
            Source::Old(i) => {
                columns.push(memory.column(i));
                reused.push(true);
            }
            Source::New(h) => {
                // directions of (near-)zero singular values are arbitrary and
                // may overlap the memory; keep only genuinely new ones
                let mut v = rs.u.column(h);
                let n1 = orthogonalize_against(&mut v, memory);
                let n2 = orthogonalize_against(&mut v, &Matrix::from_columns(m, &fresh));
                if n1 > 0.5 && n2 > 0.5 {
                    let v: Vec<f64> = v.iter().map(|x| x / n2).collect();
                    fresh.push(v.clone());
                    columns.push(v);
                    reused.push(false);
                }
            }
        }
    }
    Ok(LayerBasis {
        task: r.task,
        layer: r.layer,
        basis: Arc::new(Matrix::from_columns(m, &columns)),
        reused,
    })
}

/// Appends the directions of `new_basis` not already spanned by `merged`.
///
/// A column is appended, after Gram–Schmidt against the current memory, when
/// its residual exceeds `dedup_tolerance`. Once the memory spans the whole
/// space it is flagged saturated and nothing more is appended.
pub fn merge_into_global(
    merged: &MergedBasis,
    new_basis: &LayerBasis,
    dedup_tolerance: f64,
) -> Result<MergedBasis, SubspaceError> {
    let m = merged.width();
    if new_basis.basis.rows() != m {
        return Err(SubspaceError::ShapeMismatch(format!(
            "basis has {} rows, memory has {m}",
            new_basis.basis.rows()
        )));
    }
    let mut columns = merged.basis.columns();
    let mut appended = false;
    let mut saturated = merged.saturated;
    for j in 0..new_basis.rank() {
        if columns.len() >= m {
            saturated = true;
            break;
        }
        let mut u = new_basis.basis.column(j);
        let current = Matrix::from_columns(m, &columns);
        let residual = orthogonalize_against(&mut u, &current);
        if residual > dedup_tolerance {
            let n = norm(&u);
            columns.push(u.into_iter().map(|v| v / n).collect());
            appended = true;
        }
    }
    if columns.len() >= m {
        saturated = true;
    }
    let mut contributors = merged.contributors.clone();
    if appended {
        contributors.push(new_basis.task);
    }
    Ok(MergedBasis {
        layer: merged.layer,
        basis: Matrix::from_columns(m, &columns),
        contributors,
        saturated,
    })
}

/// Append-only store of task bases and the merged memory per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceStore {
    widths: Vec<usize>,
    bases: BTreeMap<(usize, usize), LayerBasis>,
    merged: Vec<MergedBasis>,
    finalized: BTreeSet<usize>,
    dedup_tolerance: f64,
}

const STORE_TAG: &[u8; 8] = b"TRGPSUBS";
const STORE_VERSION: u32 = 1;

impl SubspaceStore {
    pub fn new(widths: Vec<usize>, dedup_tolerance: f64) -> Self {
        let merged = widths.iter().enumerate().map(|(l, &w)| MergedBasis::empty(l, w)).collect();
        Self {
            widths,
            bases: BTreeMap::new(),
            merged,
            finalized: BTreeSet::new(),
            dedup_tolerance,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn merged(&self, layer: usize) -> &MergedBasis {
        &self.merged[layer]
    }

    pub fn basis(&self, task: usize, layer: usize) -> Option<&LayerBasis> {
        self.bases.get(&(task, layer))
    }

    /// Bases of every finalized task at `layer`, in task order.
    pub fn layer_bases(&self, layer: usize) -> Vec<&LayerBasis> {
        self.finalized.iter().filter_map(|&t| self.bases.get(&(t, layer))).collect()
    }

    pub fn finalized_tasks(&self) -> impl Iterator<Item = usize> + '_ {
        self.finalized.iter().copied()
    }

    pub fn is_finalized(&self, task: usize) -> bool {
        self.finalized.contains(&task)
    }

    /// Records the bases of `task` (one per layer) and merges them into the
    /// memory. Each task can be recorded once.
    pub fn insert_task(&mut self, task: usize, bases: Vec<LayerBasis>) -> Result<(), SubspaceError> {
        if self.finalized.contains(&task) {
            return Err(SubspaceError::AlreadyFinalized(task));
        }
        if bases.len() != self.widths.len() {
            return Err(SubspaceError::ShapeMismatch(format!(
                "{} bases for {} layers",
                bases.len(),
                self.widths.len()
            )));
        }
        let mut merged = Vec::with_capacity(bases.len());
        for (l, b) in bases.iter().enumerate() {
            if b.layer != l || b.task != task || b.basis.rows() != self.widths[l] {
                return Err(SubspaceError::ShapeMismatch(format!(
                    "basis for task {} layer {} does not fit slot ({task}, {l})",
                    b.task, b.layer
                )));
            }
            merged.push(merge_into_global(&self.merged[l], b, self.dedup_tolerance)?);
        }
        self.merged = merged;
        for b in bases {
            self.bases.insert((task, b.layer), b);
        }
        self.finalized.insert(task);
        Ok(())
    }

    /// Checks every stored and merged basis against `tolerance`.
    pub fn check_orthonormal(&self, tolerance: f64) -> Result<(), SubspaceError> {
        for b in self.bases.values() {
            let deviation = orthonormality_error(&b.basis);
            if deviation > tolerance {
                return Err(SubspaceError::NotOrthonormal {
                    task: b.task,
                    layer: b.layer,
                    deviation,
                });
            }
        }
        for m in &self.merged {
            let deviation = orthonormality_error(&m.basis);
            if deviation > tolerance {
                return Err(SubspaceError::NotOrthonormal {
                    task: usize::MAX,
                    layer: m.layer,
                    deviation,
                });
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(STORE_TAG, STORE_VERSION);
        w.f64(self.dedup_tolerance);
        w.usize(self.widths.len());
        for &x in &self.widths {
            w.usize(x);
        }
        w.usize(self.finalized.len());
        for &t in &self.finalized {
            w.usize(t);
        }
        w.usize(self.bases.len());
        for b in self.bases.values() {
            w.usize(b.task);
            w.usize(b.layer);
            w.matrix(&b.basis);
            for &r in &b.reused {
                w.u8(r as u8);
            }
        }
        for m in &self.merged {
            w.matrix(&m.basis);
            w.usize(m.contributors.len());
            for &c in &m.contributors {
                w.usize(c);
            }
            w.u8(m.saturated as u8);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SubspaceError> {
        let mut r = Reader::with_header(bytes, STORE_TAG, STORE_VERSION)?;
        let dedup_tolerance = r.f64()?;
        let widths = (0..r.usize()?).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
        let finalized = (0..r.usize()?).map(|_| r.usize()).collect::<Result<BTreeSet<_>, _>>()?;
        let mut bases = BTreeMap::new();
        for _ in 0..r.usize()? {
            let task = r.usize()?;
            let layer = r.usize()?;
            let basis = r.matrix()?;
            let reused = (0..basis.cols()).map(|_| r.u8().map(|b| b != 0)).collect::<Result<Vec<_>, _>>()?;
            bases.insert(
                (task, layer),
                LayerBasis {
                    task,
                    layer,
                    basis: Arc::new(basis),
                    reused,
                },
            );
        }
        let mut merged = Vec::with_capacity(widths.len());
        for layer in 0..widths.len() {
            let basis = r.matrix()?;
            let contributors = (0..r.usize()?).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
            let saturated = r.u8()? != 0;
            merged.push(MergedBasis {
                layer,
                basis,
                contributors,
                saturated,
            });
        }
        r.finish()?;
        Ok(Self {
            widths,
            bases,
            merged,
            finalized,
            dedup_tolerance,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rep(matrix: Matrix) -> RepresentationMatrix {
        RepresentationMatrix { task: 0, layer: 0, matrix }
    }

    fn basis(task: usize, cols: &[Vec<f64>]) -> LayerBasis {
        LayerBasis {
            task,
            layer: 0,
            basis: Arc::new(Matrix::from_columns(cols[0].len(), cols)),
            reused: vec![false; cols.len()],
        }
    }

    fn svd() -> SvdConfig {
        SvdConfig::default()
    }

    #[test]
    fn first_task_rank_follows_energy() {
        // singular values [3, 1]
        let r = rep(Matrix::from_rows(&[[3.0, 0.0], [0.0, 1.0]]));
        assert_eq!(extract_basis_first_task(&r, 0.9, &svd()).unwrap().rank(), 1);
        assert_eq!(extract_basis_first_task(&r, 0.95, &svd()).unwrap().rank(), 2);
    }

    #[test]
    fn first_task_rank_one() {
        let u = [0.6, 0.8, 0.0];
        let v = [1.0, -2.0, 0.5, 3.0];
        let r = rep(Matrix::from_fn(3, 4, |i, j| 2.5 * u[i] * v[j]));
        for eps in [0.1, 0.5, 0.99] {
            let b = extract_basis_first_task(&r, eps, &svd()).unwrap();
            assert_eq!(b.rank(), 1);
            let dot: f64 = (0..3).map(|i| b.basis.get(i, 0) * u[i]).sum();
            assert!((dot.abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_task_errors() {
        let zero = rep(Matrix::zeros(3, 2));
        assert_eq!(extract_basis_first_task(&zero, 0.9, &svd()).unwrap_err(), SubspaceError::ZeroMatrix);
        let r = rep(Matrix::identity(2));
        assert!(matches!(
            extract_basis_first_task(&r, 1.0, &svd()),
            Err(SubspaceError::InvalidThreshold(_))
        ));
    }

    #[test]
    fn later_task_fully_covered_reuses_memory() {
        let old = basis(0, &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let r = RepresentationMatrix {
            task: 1,
            layer: 0,
            matrix: Matrix::from_rows(&[[1.0, 2.0, 0.5], [-1.0, 0.3, 2.0], [0.0, 0.0, 0.0]]),
        };
        let b = extract_basis_later_task(&r, &[old], 0.99, &SubspaceConfig::default()).unwrap();
        assert!(b.reused.iter().all(|&x| x));
        assert!(b.rank() <= 2);
    }

    #[test]
    fn later_task_picks_new_direction() {
        let old = basis(0, &[vec![1.0, 0.0]]);
        let r = RepresentationMatrix {
            task: 1,
            layer: 0,
            matrix: Matrix::from_rows(&[[0.0, 0.0], [0.0, 5.0]]),
        };
        let b = extract_basis_later_task(&r, &[old], 0.9, &SubspaceConfig::default()).unwrap();
        assert_eq!(b.rank(), 1);
        assert_eq!(b.reused, vec![false]);
        assert!(b.basis.get(0, 0).abs() < 1e-12);
        assert!((b.basis.get(1, 0).abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn later_task_without_memory_matches_first_task() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = rep(Matrix::from_fn(6, 9, |_, _| rng.random_range(-1.0..1.0)));
        let a = extract_basis_first_task(&r, 0.8, &svd()).unwrap();
        let b = extract_basis_later_task(&r, &[], 0.8, &SubspaceConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn merge_examples() {
        let e1 = vec![1.0, 0.0];
        let e2 = vec![0.0, 1.0];
        let m0 = MergedBasis::empty(0, 2);
        let m1 = merge_into_global(&m0, &basis(0, std::slice::from_ref(&e1)), 1e-3).unwrap();
        assert_eq!(m1.num_columns(), 1);
        assert_eq!(m1.contributors, vec![0]);

        let same = merge_into_global(&m1, &basis(1, std::slice::from_ref(&e1)), 1e-3).unwrap();
        assert_eq!(same.basis, m1.basis);
        assert_eq!(same.contributors, vec![0]);

        let both = merge_into_global(&m1, &basis(1, &[e2]), 1e-3).unwrap();
        assert_eq!(both.num_columns(), 2);
        assert!(both.saturated);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let diag = merge_into_global(&m1, &basis(2, &[vec![s, s]]), 1e-3).unwrap();
        assert_eq!(diag.num_columns(), 2);
        assert!(diag.basis.get(0, 1).abs() < 1e-15);
        assert!((diag.basis.get(1, 1).abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn store_insert_and_roundtrip() {
        let mut store = SubspaceStore::new(vec![2], 1e-3);
        store.insert_task(0, vec![basis(0, &[vec![1.0, 0.0]])]).unwrap();
        assert_eq!(
            store.insert_task(0, vec![basis(0, &[vec![0.0, 1.0]])]).unwrap_err(),
            SubspaceError::AlreadyFinalized(0)
        );
        store.insert_task(1, vec![basis(1, &[vec![0.6, 0.8]])]).unwrap();
        assert_eq!(store.merged(0).num_columns(), 2);
        store.check_orthonormal(1e-6).unwrap();
        let bytes = store.to_bytes();
        let back = SubspaceStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.to_bytes(), bytes);
        assert!(SubspaceStore::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(matches!(SubspaceStore::from_bytes(&wrong), Err(SubspaceError::Codec(CodecError::BadTag { .. }))));
    }

    #[test]
    fn representations_identity_network() {
        let model = Mlp::from_layers(vec![Matrix::identity(2)], vec![]).unwrap();
        let samples = Matrix::identity(2);
        let reps = collect_representations(&model, &Selections::empty(1), &samples, 0).unwrap();
        assert_eq!(reps.len(), 1);
        assert_eq!(reps[0].matrix, Matrix::identity(2));
        assert_eq!(
            collect_representations(&model, &Selections::empty(1), &Matrix::zeros(0, 2), 0).unwrap_err(),
            SubspaceError::EmptyDataset
        );
    }

    #[test]
    fn representations_two_layer_columns() {
        let w1 = Matrix::from_rows(&[[1.0, -1.0], [2.0, 0.5], [-1.0, -1.0]]);
        let w2 = Matrix::from_rows(&[[1.0, 1.0, 1.0]]);
        let model = Mlp::from_layers(vec![w1, w2], vec![]).unwrap();
        let samples = Matrix::from_rows(&[[1.0, 2.0], [-1.0, 0.0]]);
        let reps = collect_representations(&model, &Selections::empty(2), &samples, 3).unwrap();
        // hand-computed relu(W1 x)
        let expect = Matrix::from_rows(&[[0.0, 0.0], [3.0, 0.0], [0.0, 1.0]]);
        assert_eq!(reps[1].matrix, expect);
        assert_eq!(reps[1].task, 3);
    }
}
