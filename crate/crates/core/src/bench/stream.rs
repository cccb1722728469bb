//! Task streams: ordered tasks with train/validation/test splits.
//!
//! A [`Dataset`] is a cheap view: it shares its source rows and labels
//! behind `Arc`s and keeps only a row index list and an optional pixel
//! permutation. Ten permuted copies of MNIST therefore cost one copy of the
//! pixels, and rows are gathered (and permuted) only when a batch is built.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::codec::Writer;
use crate::linalg::{orthogonalize_against, Matrix};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("base dataset is empty")]
    EmptyBase,
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Clone)]
pub struct Dataset {
    features: Arc<Vec<f64>>,
    labels: Arc<Vec<usize>>,
    dim: usize,
    rows: Arc<Vec<usize>>,
    /// `x'[i] = x[permutation[i]]`.
    permutation: Option<Arc<Vec<usize>>>,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("len", &self.len())
            .field("dim", &self.dim)
            .field("permuted", &self.permutation.is_some())
            .finish()
    }
}

impl Dataset {
    /// `features` is row-major `labels.len() × dim`.
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize) -> Result<Self, StreamError> {
        if features.len() != labels.len() * dim {
            return Err(StreamError::Invalid(format!(
                "{} values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(StreamError::Invalid("non-finite feature".into()));
        }
        let n = labels.len();
        Ok(Self {
            features: Arc::new(features),
            labels: Arc::new(labels),
            dim,
            rows: Arc::new((0..n).collect()),
            permutation: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[self.rows[i]]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|&r| self.labels[r]).collect()
    }

    /// Number of classes, i.e. the largest label plus one.
    pub fn num_classes(&self) -> usize {
        self.rows.iter().map(|&r| self.labels[r] + 1).max().unwrap_or(0)
    }

    pub fn permutation(&self) -> Option<&[usize]> {
        self.permutation.as_deref().map(Vec::as_slice)
    }

    /// Writes example `i` into `out` (length `dim`).
    pub fn fill_row(&self, i: usize, out: &mut [f64]) {
        let r = self.rows[i];
        let src = &self.features[r * self.dim..(r + 1) * self.dim];
        match &self.permutation {
            Some(p) => out.iter_mut().zip(p.iter()).for_each(|(o, &j)| *o = src[j]),
            None => out.copy_from_slice(src),
        }
    }

    /// Gathers the listed examples into a `len × dim` matrix plus labels.
    pub fn batch(&self, idx: &[usize]) -> (Matrix, Vec<usize>) {
        let mut m = Matrix::zeros(idx.len(), self.dim);
        for (k, &i) in idx.iter().enumerate() {
            self.fill_row(i, m.row_mut(k));
        }
        (m, idx.iter().map(|&i| self.label(i)).collect())
    }

    pub fn all(&self) -> (Matrix, Vec<usize>) {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }

    /// View of the listed examples (indices into this view).
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            rows: Arc::new(idx.iter().map(|&i| self.rows[i]).collect()),
            ..self.clone()
        }
    }

    /// `n` examples drawn without replacement, in random order.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        idx.truncate(n);
        self.subset(&idx)
    }

    /// The same examples with pixels reordered by `permutation`, composed
    /// with any permutation already applied.
    pub fn permuted(&self, permutation: Vec<usize>) -> Result<Self, StreamError> {
        if permutation.len() != self.dim {
            return Err(StreamError::Invalid(format!(
                "permutation of length {} for width {}",
                permutation.len(),
                self.dim
            )));
        }
        let composed = match &self.permutation {
            Some(p) => permutation.iter().map(|&j| p[j]).collect(),
            None => permutation,
        };
        Ok(Self {
            permutation: Some(Arc::new(composed)),
            ..self.clone()
        })
    }

    /// Splits off a seeded `fraction` as the second part.
    pub fn split(&self, fraction: f64, rng: &mut impl Rng) -> (Self, Self) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(rng);
        let held = ((self.len() as f64) * fraction).round() as usize;
        let (held_idx, kept_idx) = idx.split_at(held.min(self.len()));
        let mut kept_idx = kept_idx.to_vec();
        let mut held_idx = held_idx.to_vec();
        kept_idx.sort_unstable();
        held_idx.sort_unstable();
        (self.subset(&kept_idx), self.subset(&held_idx))
    }

    pub fn write(&self, w: &mut Writer) {
        w.usize(self.len());
        w.usize(self.dim);
        let mut row = vec![0.0; self.dim];
        for i in 0..self.len() {
            self.fill_row(i, &mut row);
            row.iter().for_each(|&v| w.f64(v));
            w.usize(self.label(i));
        }
    }
}

#[derive(Debug, Clone)]
pub struct Task {
    pub id: usize,
    /// Human-readable description, e.g. the permutation seed.
    pub descriptor: String,
    pub classes: usize,
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone)]
pub struct TaskStream {
    pub name: String,
    pub tasks: Vec<Task>,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.tasks.first().map_or(0, |t| t.train.dim())
    }

    pub fn classes(&self) -> usize {
        self.tasks.iter().map(|t| t.classes).max().unwrap_or(0)
    }

    /// Serialization of every split, used to check determinism.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::with_header(b"TRGPSTRM", 1);
        w.usize(self.tasks.len());
        for t in &self.tasks {
            w.usize(t.id);
            w.usize(t.classes);
            t.train.write(&mut w);
            t.validation.write(&mut w);
            t.test.write(&mut w);
        }
        w.finish()
    }
}

/// Fraction of every task's training data held out for validation.
pub const VALIDATION_FRACTION: f64 = 0.1;

fn make_task(
    id: usize,
    descriptor: String,
    train: Dataset,
    test: Dataset,
    classes: usize,
    root: u64,
) -> Task {
    let (train, validation) = train.split(VALIDATION_FRACTION, &mut seed::rng(root, seed::SPLIT, id as u64));
    Task {
        id,
        descriptor,
        classes,
        train,
        validation,
        test,
    }
}

/// Task `k` applies a fixed random pixel permutation to the base data; the
/// first task keeps the identity.
pub fn gen_permuted_stream(
    base_train: &Dataset,
    base_test: &Dataset,
    num_tasks: usize,
    root: u64,
) -> Result<TaskStream, StreamError> {
    if base_train.is_empty() || base_test.is_empty() {
        return Err(StreamError::EmptyBase);
    }
    if base_train.dim() != base_test.dim() {
        return Err(StreamError::Invalid("train and test widths differ".into()));
    }
    let classes = base_train.num_classes().max(base_test.num_classes());
    let dim = base_train.dim();
    let tasks = (0..num_tasks)
        .map(|k| {
            let mut perm: Vec<usize> = (0..dim).collect();
            if k > 0 {
                perm.shuffle(&mut seed::rng(root, seed::STREAM, k as u64));
            }
            let train = base_train.permuted(perm.clone())?;
            let test = base_test.permuted(perm)?;
            let desc = if k == 0 { "identity".to_string() } else { format!("permutation {k}") };
            Ok(make_task(k, desc, train, test, classes, root))
        })
        .collect::<Result<_, StreamError>>()?;
    Ok(TaskStream {
        name: "permuted".into(),
        tasks,
    })
}

/// Geometry of a synthetic split stream.
///
/// Task `t` lives in the `classes_per_task`-dimensional subspace spanned by
/// `U_t = √o·S + √(1−o)·P_t`, where `S` is shared by every task and the
/// `P_t` are private and mutually orthogonal. Class `c` of task `t` is a
/// Gaussian cluster with mean `separation·U_t·e_c` and unit in-subspace
/// covariance, plus optional isotropic `ambient_noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSyntheticConfig {
    pub num_tasks: usize,
    pub classes_per_task: usize,
    pub dim: usize,
    pub separation: f64,
    pub overlap: f64,
    pub ambient_noise: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

impl Default for SplitSyntheticConfig {
    fn default() -> Self {
        Self {
            num_tasks: 5,
            classes_per_task: 2,
            dim: 32,
            separation: 3.0,
            overlap: 0.5,
            ambient_noise: 0.0,
            train_per_class: 200,
            test_per_class: 100,
        }
    }
}

fn random_orthonormal(dim: usize, count: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(count);
    while cols.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let r = orthogonalize_against(&mut v, &Matrix::from_columns(dim, &cols));
        if r > 1e-6 {
            let n = crate::linalg::norm(&v);
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    cols
}

pub fn gen_split_synthetic(cfg: &SplitSyntheticConfig, root: u64) -> Result<TaskStream, StreamError> {
    let r = cfg.classes_per_task;
    if r == 0 || cfg.num_tasks == 0 {
        return Err(StreamError::InvalidGeometry("need at least one task and one class".into()));
    }
    if cfg.dim < r {
        return Err(StreamError::InvalidGeometry(format!("dim {} < classes {r}", cfg.dim)));
    }
    if !(0.0..=1.0).contains(&cfg.overlap) {
        return Err(StreamError::InvalidGeometry(format!("overlap {} outside [0, 1]", cfg.overlap)));
    }
    let shared_dims = if cfg.overlap > 0.0 { r } else { 0 };
    let private_dims = if cfg.overlap < 1.0 { r * cfg.num_tasks } else { 0 };
    if shared_dims + private_dims > cfg.dim {
        return Err(StreamError::InvalidGeometry(format!(
            "{} directions requested in dimension {}",
            shared_dims + private_dims,
            cfg.dim
        )));
    }
    let mut rng = seed::rng(root, seed::STREAM, 0);
    let dirs = random_orthonormal(cfg.dim, shared_dims + private_dims, &mut rng);
    let (shared, private) = dirs.split_at(shared_dims);
    let (a, b) = (cfg.overlap.sqrt(), (1.0 - cfg.overlap).sqrt());

    let mut tasks = Vec::with_capacity(cfg.num_tasks);
    for t in 0..cfg.num_tasks {
        let u: Vec<Vec<f64>> = (0..r)
            .map(|c| {
                (0..cfg.dim)
                    .map(|i| {
                        let s = shared.get(c).map_or(0.0, |v| a * v[i]);
                        let p = if private.is_empty() { 0.0 } else { b * private[t * r + c][i] };
                        s + p
                    })
                    .collect()
            })
            .collect();
        let mut task_rng = seed::rng(root, seed::STREAM, 1 + t as u64);
        let mut sample = |per_class: usize| {
            let mut features = Vec::with_capacity(per_class * r * cfg.dim);
            let mut labels = Vec::with_capacity(per_class * r);
            for _ in 0..per_class {
                for c in 0..r {
                    let mut x = vec![0.0; cfg.dim];
                    for (h, uh) in u.iter().enumerate() {
                        let z: f64 = StandardNormal.sample(&mut task_rng);
                        let coef = z + if h == c { cfg.separation } else { 0.0 };
                        x.iter_mut().zip(uh).for_each(|(xi, ui)| *xi += coef * ui);
                    }
                    if cfg.ambient_noise > 0.0 {
                        for xi in &mut x {
                            let z: f64 = StandardNormal.sample(&mut task_rng);
                            *xi += cfg.ambient_noise * z;
                        }
                    }
                    features.extend_from_slice(&x);
                    labels.push(c);
                }
            }
            Dataset::new(features, labels, cfg.dim)
        };
        let train = sample(cfg.train_per_class)?;
        let test = sample(cfg.test_per_class)?;
        tasks.push(make_task(t, format!("overlap {}", cfg.overlap), train, test, r, root));
    }
    Ok(TaskStream {
        name: "split-synthetic".into(),
        tasks,
    })
}

/// Two tasks on the same 2-d inputs with opposite signs: task 1 holds
/// `(x, y)` and task 2 holds `(−x, y)`. The classes are two Gaussian
/// clusters whose means differ along a fixed direction.
pub fn gen_sign_flip_pair(per_class: usize, root: u64) -> Result<TaskStream, StreamError> {
    let mut rng = seed::rng(root, seed::STREAM, 0);
    let means = [[2.0, 1.0], [-2.0, -1.0]];
    let mut draw = |n: usize| {
        let mut features = Vec::with_capacity(n * 4);
        let mut labels = Vec::with_capacity(n * 2);
        for _ in 0..n {
            for (c, m) in means.iter().enumerate() {
                for mi in m {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    features.push(mi + 0.5 * z);
                }
                labels.push(c);
            }
        }
        (features, labels)
    };
    let (train_x, train_y) = draw(per_class);
    let (test_x, test_y) = draw(per_class.div_ceil(2));
    let negate = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
    let tasks = vec![
        make_task(
            0,
            "x".into(),
            Dataset::new(train_x.clone(), train_y.clone(), 2)?,
            Dataset::new(test_x.clone(), test_y.clone(), 2)?,
            2,
            root,
        ),
        make_task(
            1,
            "-x".into(),
            Dataset::new(negate(&train_x), train_y, 2)?,
            Dataset::new(negate(&test_x), test_y, 2)?,
            2,
            root,
        ),
    ];
    Ok(TaskStream {
        name: "sign-flip".into(),
        tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        Dataset::new((0..12).map(f64::from).collect(), vec![0, 1, 2, 1], 3).unwrap()
    }

    #[test]
    fn views_gather_and_permute() {
        let d = tiny();
        let (m, y) = d.batch(&[2, 0]);
        assert_eq!(m.row(0), &[6.0, 7.0, 8.0]);
        assert_eq!(y, vec![2, 0]);
        let p = d.permuted(vec![2, 0, 1]).unwrap();
        assert_eq!(p.batch(&[1]).0.row(0), &[5.0, 3.0, 4.0]);
        let pp = p.permuted(vec![2, 0, 1]).unwrap();
        assert_eq!(pp.batch(&[0]).0.row(0), &[1.0, 2.0, 0.0]);
        let s = d.subset(&[3, 1]);
        assert_eq!(s.labels(), vec![1, 1]);
        assert_eq!(s.batch(&[0]).0.row(0), &[9.0, 10.0, 11.0]);
        assert_eq!(d.num_classes(), 3);
        assert!(Dataset::new(vec![1.0], vec![0, 1], 1).is_err());
    }

    #[test]
    fn split_is_disjoint_and_covering() {
        let d = Dataset::new((0..100).map(f64::from).collect(), vec![0; 100], 1).unwrap();
        let (a, b) = d.split(0.1, &mut seed::rng(1, seed::SPLIT, 0));
        assert_eq!((a.len(), b.len()), (90, 10));
        let mut all: Vec<f64> = a.all().0.into_vec();
        all.extend(b.all().0.into_vec());
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..100).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn permuted_stream_first_task_is_identity() {
        let d = tiny();
        let s = gen_permuted_stream(&d, &d, 1, 7).unwrap();
        assert!(s.tasks[0].test.permutation().unwrap().iter().enumerate().all(|(i, &j)| i == j));
        assert_eq!(s.tasks[0].test.all().0, d.all().0);
        let a = gen_permuted_stream(&d, &d, 3, 7).unwrap();
        let b = gen_permuted_stream(&d, &d, 3, 7).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        let empty = Dataset::new(vec![], vec![], 3).unwrap();
        assert_eq!(gen_permuted_stream(&empty, &d, 2, 0).unwrap_err(), StreamError::EmptyBase);
    }

    #[test]
    fn split_synthetic_geometry() {
        let cfg = SplitSyntheticConfig {
            num_tasks: 3,
            dim: 8,
            ..Default::default()
        };
        let a = gen_split_synthetic(&cfg, 3).unwrap();
        assert_eq!(a.to_bytes(), gen_split_synthetic(&cfg, 3).unwrap().to_bytes());
        assert_eq!(a.len(), 3);
        let too_many = SplitSyntheticConfig {
            num_tasks: 3,
            dim: 7,
            overlap: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            gen_split_synthetic(&too_many, 3),
            Err(StreamError::InvalidGeometry(_))
        ));
        // disjoint tasks are exactly orthogonal
        let ortho = SplitSyntheticConfig {
            num_tasks: 2,
            dim: 4,
            overlap: 0.0,
            ..Default::default()
        };
        let s = gen_split_synthetic(&ortho, 5).unwrap();
        let x0 = s.tasks[0].train.all().0;
        let x1 = s.tasks[1].train.all().0;
        assert!(x0.matmul_t(&x1).unwrap().frobenius_norm() < 1e-9 * x0.frobenius_norm() * x1.frobenius_norm());
    }

    #[test]
    fn sign_flip_tasks_are_negations() {
        let s = gen_sign_flip_pair(20, 1).unwrap();
        let a = s.tasks[0].test.all();
        let b = s.tasks[1].test.all();
        assert_eq!(a.0.scale(-1.0), b.0);
        assert_eq!(a.1, b.1);
    }
}
