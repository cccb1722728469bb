//! Fast property checks shared by `trgp selftest`, the examples and the
//! test suite: finite-difference gradients, projection algebra, and the
//! two two-task toy problems.

use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::bench::metrics::{compute_metrics, AccuracyMatrix};
use crate::bench::stream::{gen_sign_flip_pair, gen_split_synthetic, SplitSyntheticConfig};
use crate::linalg::{
    frobenius_norm, orthogonalize_against, orthonormality_error, project_rows_unchecked, svd_thin, Matrix, SvdConfig,
};
use crate::network::{
    backward, forward_with_trace, project_gradient, HeadMode, Mlp, ScaledProjection, ScalingMatrix, Selections,
};
use crate::seed;
use crate::subspace::{
    extract_basis_first_task, extract_basis_later_task, extract_basis_with_memory, LayerBasis, RepresentationMatrix,
    SubspaceConfig,
};
use crate::trainer::{mean_loss, ContinualLearner, Method, TrainerConfig};
use crate::trust_region::{probe_gradient, TrustRegionConfig};

pub fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `m × k` matrix with orthonormal columns.
pub fn random_basis(m: usize, k: usize, rng: &mut impl Rng) -> Matrix {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(k);
    while cols.len() < k {
        let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let r = orthogonalize_against(&mut v, &Matrix::from_columns(m, &cols));
        if r > 1e-3 {
            cols.push(v.iter().map(|x| x / r).collect());
        }
    }
    Matrix::from_columns(m, &cols)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub weight_coords: usize,
    pub scale_coords: usize,
    pub max_rel_err_weights: f64,
    pub max_rel_err_scales: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Compares analytic `dL/dW` and `dL/dQ` of a random 3-layer network with
/// random scaled projections against central differences on `coords`
/// random coordinates each.
pub fn gradient_check(root: u64, coords: usize) -> GradientCheck {
    let mut rng = seed::rng(root, "gradient-check", 0);
    let mut model = Mlp::new(6, &[5, 4], 3, HeadMode::Single, 1, &mut rng);
    let widths = model.layer_input_widths();
    let mut sel = Selections::empty(model.num_layers());
    for (l, &w) in widths.iter().enumerate() {
        for old in 0..2 {
            let k = 1 + (l + old) % 3;
            let basis = Arc::new(random_basis(w, k, &mut rng));
            let mut q = Matrix::identity(k);
            q.axpy(0.3, &random_matrix(k, k, &mut rng)).expect("same shape");
            let s = ScaledProjection::new(basis, ScalingMatrix { old_task: old, layer: l, q }).expect("shapes");
            sel.layer_mut(l).push(s);
        }
    }
    let x = random_matrix(7, 6, &mut rng);
    let y: Vec<usize> = (0..7).map(|_| rng.random_range(0..3)).collect();
    let trace = forward_with_trace(&model, &sel, &x, &y, 0).expect("forward");
    let grads = backward(&trace, &model, &sel).expect("backward");
    let h = 1e-5;
    let loss = |m: &Mlp, s: &Selections| forward_with_trace(m, s, &x, &y, 0).expect("forward").loss;

    let mut worst_w: f64 = 0.0;
    for _ in 0..coords {
        let l = rng.random_range(0..model.num_layers());
        let (r, c) = (rng.random_range(0..model.layers()[l].rows()), rng.random_range(0..model.layers()[l].cols()));
        let orig = model.layers()[l].get(r, c);
        model.layer_mut(l).set(r, c, orig + h);
        let up = loss(&model, &sel);
        model.layer_mut(l).set(r, c, orig - h);
        let down = loss(&model, &sel);
        model.layer_mut(l).set(r, c, orig);
        worst_w = worst_w.max(rel_err(grads.weights[l].get(r, c), (up - down) / (2.0 * h)));
    }
    let mut worst_q: f64 = 0.0;
    for _ in 0..coords {
        let l = rng.random_range(0..sel.num_layers());
        let i = rng.random_range(0..sel.layer(l).len());
        let k = sel.layer(l)[i].scaling.q.rows();
        let (r, c) = (rng.random_range(0..k), rng.random_range(0..k));
        let orig = sel.layer(l)[i].scaling.q.get(r, c);
        sel.layer_mut(l)[i].scaling.q.set(r, c, orig + h);
        let up = loss(&model, &sel);
        sel.layer_mut(l)[i].scaling.q.set(r, c, orig - h);
        let down = loss(&model, &sel);
        sel.layer_mut(l)[i].scaling.q.set(r, c, orig);
        worst_q = worst_q.max(rel_err(grads.scales[l][i].get(r, c), (up - down) / (2.0 * h)));
    }
    GradientCheck {
        weight_coords: coords,
        scale_coords: coords,
        max_rel_err_weights: worst_w,
        max_rel_err_scales: worst_q,
    }
}

/// Outcome of the sign-flip toy: task 2 inputs are task 1 inputs negated.
#[derive(Debug, Clone, PartialEq)]
pub struct SignFlipOutcome {
    /// `‖g − gMM'‖_F / ‖g‖_F` of GPM's task-2 probe gradient.
    pub gpm_residual_ratio: f64,
    pub gpm_task2_loss: f64,
    pub trgp_task2_loss: f64,
    /// Trust-region ratio of task 1 seen by TRGP at task 2.
    pub trgp_ratio: f64,
}

/// Single-layer 2-d classifier trained on the sign-flip pair by GPM and TRGP.
pub fn toy_sign_flip(root: u64) -> SignFlipOutcome {
    let stream = gen_sign_flip_pair(200, root).expect("valid toy stream");
    let cfg = |method| TrainerConfig {
        method,
        epochs: 5,
        batch_size: 10,
        lr: 0.05,
        hidden: vec![],
        head: HeadMode::Single,
        seed: root,
        subspace: SubspaceConfig {
            eps_th: vec![0.99],
            samples: 300,
            ..Default::default()
        },
        trust: TrustRegionConfig {
            epsilon: 0.5,
            top_k: 2,
            ..Default::default()
        },
        ..TrainerConfig::default()
    };
    let run = |method| {
        let mut l = ContinualLearner::new(cfg(method), 2, 2, 2).expect("valid config");
        for t in &stream.tasks {
            l.learn_task(t).expect("toy training");
        }
        let sel = l.selections_for(1).expect("learned");
        let loss = mean_loss(&l.model, &sel, &stream.tasks[1].train, 1).expect("loss");
        (l.artifacts[1].clone(), loss)
    };
    let (gpm, gpm_loss) = run(Method::Gpm);
    let (trgp, trgp_loss) = run(Method::Trgp);
    SignFlipOutcome {
        gpm_residual_ratio: gpm.start_residual_ratio[0],
        gpm_task2_loss: gpm_loss,
        trgp_task2_loss: trgp_loss,
        trgp_ratio: trgp.selection.layers[0].candidates.first().map_or(0.0, |c| c.ratio),
    }
}

/// A single-layer network learns one task; the full-batch gradient of a
/// second task with inputs orthogonal to the first is then projected
/// against the memory. Returns the largest `‖g − proj(g)‖_F` over layers.
pub fn toy_orthogonal(root: u64) -> f64 {
    let stream = gen_split_synthetic(
        &SplitSyntheticConfig {
            num_tasks: 2,
            classes_per_task: 3,
            dim: 8,
            overlap: 0.0,
            train_per_class: 100,
            test_per_class: 20,
            ..Default::default()
        },
        root,
    )
    .expect("valid geometry");
    let cfg = TrainerConfig {
        method: Method::Gpm,
        epochs: 2,
        lr: 0.05,
        hidden: vec![],
        head: HeadMode::Single,
        seed: root,
        subspace: SubspaceConfig {
            eps_th: vec![0.99],
            ..Default::default()
        },
        ..TrainerConfig::default()
    };
    let mut l = ContinualLearner::new(cfg, 8, 3, 2).expect("valid config");
    l.learn_task(&stream.tasks[0]).expect("training");
    let (x, y) = stream.tasks[1].train.all();
    let grads = probe_gradient(&l.model, &x, &y, 1).expect("probe");
    let mut worst: f64 = 0.0;
    for (layer, g) in grads.iter().enumerate() {
        let p = project_gradient(g, &l.store.merged(layer).basis).expect("shapes");
        worst = worst.max(frobenius_norm(&g.sub(&p).expect("shapes")));
    }
    worst
}

/// Result of checking basis extraction against a brute-force rank oracle.
#[derive(Debug, Clone, Default)]
pub struct SubspaceOracle {
    pub cases: usize,
    /// One message per case where the extracted basis missed the energy
    /// target or was not of minimal rank.
    pub failures: Vec<String>,
    pub max_orthonormality_error: f64,
}

impl SubspaceOracle {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.failures.is_empty() && self.max_orthonormality_error <= tolerance
    }
}

/// `‖B'R‖²_F`: energy of `R` captured by the orthonormal columns of `B`.
fn captured_energy(r: &Matrix, b: &Matrix) -> f64 {
    frobenius_norm(&b.t_matmul(r).expect("shapes")).powi(2)
}

/// Smallest `k` whose best `k` candidate energies reach `target`, by
/// enumerating every `k`.
fn brute_force_rank(mut energies: Vec<f64>, target: f64) -> Option<usize> {
    energies.sort_by(|a, b| b.total_cmp(a));
    (1..=energies.len()).find(|&k| energies[..k].iter().sum::<f64>() >= target)
}

/// Matrix with a decaying spectrum so that thresholds select varied ranks.
fn decaying_matrix(m: usize, n: usize, rng: &mut impl Rng) -> Matrix {
    let mut a = random_matrix(m, n, rng);
    let decay: f64 = rng.random_range(0.3..0.9);
    for i in 0..m {
        let f = decay.powi(i as i32);
        a.row_mut(i).iter_mut().for_each(|v| *v *= f);
    }
    // mix rows so the dominant directions are not coordinate axes
    random_basis(m, m, rng).matmul(&a).expect("shapes")
}

/// Checks `extract_basis_first_task`, `extract_basis_later_task` and
/// `extract_basis_with_memory` on `cases` random matrices each: the basis
/// must capture at least `eps_th` of the energy, and no smaller number of
/// candidate directions may do so.
///
/// Candidate energies are recomputed here from scratch: squared singular
/// values of `R'` (first task), and `‖R'u‖²` for memory columns plus the
/// squared singular values of the residual (later tasks).
pub fn subspace_oracle(root: u64, cases: usize) -> SubspaceOracle {
    let mut rng = seed::rng(root, "subspace-oracle", 0);
    let svd = SvdConfig::default();
    let mut out = SubspaceOracle::default();
    let slack = 1.0 - 1e-9;
    let judge = |name: String, r: &Matrix, basis: &LayerBasis, energies: Vec<f64>, eps: f64, out: &mut SubspaceOracle| {
        out.cases += 1;
        let target = eps * frobenius_norm(r).powi(2);
        let k = basis.rank();
        let got = captured_energy(r, &basis.basis);
        let oracle_k = brute_force_rank(energies, target * slack);
        out.max_orthonormality_error = out.max_orthonormality_error.max(orthonormality_error(&basis.basis));
        if got < target * slack {
            out.failures.push(format!("{name}: captured {got:.6e} < target {target:.6e}"));
        } else if oracle_k != Some(k) {
            out.failures.push(format!("{name}: rank {k}, oracle {oracle_k:?}"));
        }
    };
    for i in 0..cases {
        let m = rng.random_range(3..=16);
        let n = rng.random_range(2..=24);
        let eps = rng.random_range(0.5..0.99);
        let r = decaying_matrix(m, n, &mut rng);
        let rep = RepresentationMatrix {
            task: 0,
            layer: 0,
            matrix: r.clone(),
        };

        // first task: candidates are the singular directions of R
        let sv = svd_thin(&r.transpose(), &svd).expect("svd");
        let basis = extract_basis_first_task(&rep, eps, &svd).expect("extraction");
        judge(format!("first #{i}"), &r, &basis, sv.singular_values.iter().map(|s| s * s).collect(), eps, &mut out);

        // later task: a memory partially aligned with R
        let km = rng.random_range(1..m);
        let mut memory_cols = Vec::with_capacity(km);
        let mix = random_basis(m, km, &mut rng);
        let dominant = svd_thin(&r, &svd).expect("svd").u;
        for j in 0..km {
            // blend a dominant direction of R with a random one
            let t: f64 = rng.random_range(0.0..1.0);
            let mut v: Vec<f64> = (0..m)
                .map(|x| t * dominant.get(x, j.min(dominant.cols() - 1)) + (1.0 - t) * mix.get(x, j))
                .collect();
            let nrm = orthogonalize_against(&mut v, &Matrix::from_columns(m, &memory_cols));
            if nrm > 1e-3 {
                memory_cols.push(v.iter().map(|x| x / nrm).collect::<Vec<f64>>());
            }
        }
        let memory = Matrix::from_columns(m, &memory_cols);
        let coords = memory.t_matmul(&r).expect("shapes");
        let mut energies: Vec<f64> = (0..memory.cols()).map(|c| coords.row(c).iter().map(|v| v * v).sum()).collect();
        let residual = r.sub(&memory.matmul(&coords).expect("shapes")).expect("shapes");
        let rs = svd_thin(&residual.transpose(), &svd).expect("svd");
        energies.extend(rs.singular_values.iter().map(|s| s * s));

        let basis = extract_basis_with_memory(&rep, &memory, eps, &svd).expect("extraction");
        judge(format!("with-memory #{i}"), &r, &basis, energies.clone(), eps, &mut out);

        // the same memory handed over as two old task bases
        let split = memory.cols().div_ceil(2);
        let old = |task: usize, idx: Vec<usize>| LayerBasis {
            task,
            layer: 0,
            reused: vec![false; idx.len()],
            basis: Arc::new(memory.select_columns(&idx)),
        };
        let olds = vec![old(0, (0..split).collect()), old(1, (split..memory.cols()).collect())];
        let cfg = SubspaceConfig::default();
        let basis = extract_basis_later_task(&rep, &olds, eps, &cfg).expect("extraction");
        judge(format!("later #{i}"), &r, &basis, energies, eps, &mut out);
    }
    out
}

/// Outcome of a single property.
#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Test hooks that deliberately break a property (negative controls).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultInjection {
    /// Perturb an extracted basis so it is no longer orthonormal.
    pub basis_orthonormality: bool,
}

fn check(name: &'static str, passed: bool, detail: String) -> PropertyResult {
    PropertyResult { name, passed, detail }
}

/// Runs every property; the caller decides how to report.
pub fn run_properties(root: u64, faults: FaultInjection) -> Vec<PropertyResult> {
    let mut rng = seed::rng(root, "selftest", 0);
    let mut out = Vec::new();

    // thin SVD
    let mut worst_rec: f64 = 0.0;
    let mut worst_orth: f64 = 0.0;
    for _ in 0..10 {
        let (m, n) = (rng.random_range(1..12), rng.random_range(1..12));
        let a = random_matrix(m, n, &mut rng);
        let s = svd_thin(&a, &SvdConfig::default()).expect("svd");
        worst_rec = worst_rec.max(s.reconstruct().max_abs_diff(&a));
        worst_orth = worst_orth.max(orthonormality_error(&s.u)).max(orthonormality_error(&s.v));
    }
    out.push(check(
        "svd reconstruction and orthonormal factors",
        worst_rec <= 1e-9 && worst_orth <= 1e-9,
        format!("reconstruction {worst_rec:.2e}, orthonormality {worst_orth:.2e}"),
    ));

    // projections
    let b = random_basis(9, 4, &mut rng);
    let g = random_matrix(5, 9, &mut rng);
    let p = project_rows_unchecked(&g, &b);
    let pp = project_rows_unchecked(&p, &b);
    let r = project_gradient(&g, &b).expect("shapes");
    let pyth = (frobenius_norm(&p).powi(2) + frobenius_norm(&r).powi(2) - frobenius_norm(&g).powi(2)).abs();
    let orth = frobenius_norm(&r.matmul(&b).expect("shapes"));
    out.push(check(
        "projection idempotent, residual orthogonal",
        pp.max_abs_diff(&p) <= 1e-12 && orth <= 1e-12 && pyth <= 1e-10,
        format!("idempotence {:.1e}, residual·B {orth:.1e}, pythagoras {pyth:.1e}", pp.max_abs_diff(&p)),
    ));

    // gradients
    let gc = gradient_check(root, 100);
    out.push(check(
        "analytic gradients match central differences",
        gc.max_rel_err_weights <= 1e-4 && gc.max_rel_err_scales <= 1e-4,
        format!(
            "W: {:.2e} over {} coords, Q: {:.2e} over {} coords",
            gc.max_rel_err_weights, gc.weight_coords, gc.max_rel_err_scales, gc.scale_coords
        ),
    ));

    // basis extraction: minimal rank and orthonormality
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let m = random_matrix(8, 12, &mut rng);
        let r = RepresentationMatrix {
            task: i,
            layer: 0,
            matrix: m.clone(),
        };
        let eps = rng.random_range(0.5..0.99);
        let mut basis = extract_basis_first_task(&r, eps, &SvdConfig::default()).expect("extraction");
        let total = frobenius_norm(&m).powi(2);
        let captured = |k: usize| {
            let idx: Vec<usize> = (0..k).collect();
            frobenius_norm(&project_rows_unchecked(&m.transpose(), &basis.basis.select_columns(&idx))).powi(2)
        };
        let k = basis.rank();
        ok &= captured(k) >= eps * total * (1.0 - 1e-9) && (k == 1 || captured(k - 1) < eps * total);
        if faults.basis_orthonormality && i == 0 {
            let mut bad = (*basis.basis).clone();
            bad.set(0, 0, bad.get(0, 0) + 0.1);
            basis.basis = Arc::new(bad);
        }
        worst = worst.max(orthonormality_error(&basis.basis));
    }
    out.push(check(
        "extracted bases orthonormal",
        worst <= 1e-6,
        format!("max |B'B − I| = {worst:.2e}"),
    ));
    out.push(check("extracted rank is minimal for the energy threshold", ok, "20 random matrices".into()));
    let oracle = subspace_oracle(root, 50);
    out.push(check(
        "basis extraction agrees with brute-force rank oracle",
        oracle.passed(1e-6),
        format!(
            "{} cases, {} failures, max |B'B − I| = {:.2e}",
            oracle.cases,
            oracle.failures.len(),
            oracle.max_orthonormality_error
        ),
    ));

    // metrics
    let a = AccuracyMatrix::from_rows(vec![vec![0.9], vec![0.8, 0.9], vec![0.7, 0.85, 0.95]]).expect("valid");
    let m = compute_metrics(&a).expect("metrics");
    let bwt = m.bwt.unwrap_or(f64::NAN);
    out.push(check(
        "ACC/BWT on the 3×3 example",
        (m.acc - 2.5 / 3.0).abs() <= 1e-12 && (bwt + 0.125).abs() <= 1e-12,
        format!("ACC {:.4}, BWT {:.4}", m.acc, bwt),
    ));

    // toy problems
    let flip = toy_sign_flip(root);
    out.push(check(
        "sign-flip toy: GPM blocked, TRGP recovers",
        flip.gpm_residual_ratio <= 0.2 && flip.trgp_task2_loss <= 0.9 * flip.gpm_task2_loss,
        format!(
            "GPM residual ratio {:.3}, task-2 loss GPM {:.4} vs TRGP {:.4}",
            flip.gpm_residual_ratio, flip.gpm_task2_loss, flip.trgp_task2_loss
        ),
    ));
    let ortho = toy_orthogonal(root);
    out.push(check(
        "orthogonal-task toy: projection leaves gradient unchanged",
        ortho <= 1e-8,
        format!("‖g − proj(g)‖_F = {ortho:.2e}"),
    ));

    // no forgetting on a small synthetic stream
    let stream = gen_split_synthetic(
        &SplitSyntheticConfig {
            num_tasks: 3,
            dim: 12,
            train_per_class: 80,
            test_per_class: 40,
            ambient_noise: 0.2,
            ..Default::default()
        },
        root,
    )
    .expect("valid geometry");
    let cfg = TrainerConfig {
        method: Method::Trgp,
        epochs: 2,
        lr: 0.05,
        hidden: vec![16],
        head: HeadMode::PerTask,
        seed: root,
        subspace: SubspaceConfig {
            eps_th: vec![0.97],
            ..Default::default()
        },
        ..TrainerConfig::default()
    };
    let mut l = ContinualLearner::new(cfg, 12, 2, 3).expect("config");
    let mut drift: f64 = 0.0;
    for t in &stream.tasks {
        l.learn_task(t).expect("training");
        drift = drift.max(l.frozen_projection_drift());
    }
    out.push(check(
        "weights inside old subspaces stay frozen",
        drift <= 1e-5,
        format!("max drift {drift:.2e}"),
    ));
    out
}

/// Prints one line per property and returns whether all passed.
pub fn run_and_report(root: u64, faults: FaultInjection) -> bool {
    let start = Instant::now();
    let results = run_properties(root, faults);
    for r in &results {
        println!("{} {:<58} {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} properties, {} failed ({:.1}s)",
        results.len(),
        failed,
        start.elapsed().as_secs_f64()
    );
    failed == 0
}
