use serde::{Deserialize, Serialize};

use super::{dot, norm, LinalgError, Matrix};

/// Stopping rules for the one-sided Jacobi iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvdConfig {
    pub max_sweeps: usize,
    /// A column pair is considered orthogonal once
    /// `|a_p · a_q| <= tolerance · ‖a_p‖ ‖a_q‖`.
    pub tolerance: f64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 60,
            tolerance: 1e-13,
        }
    }
}

/// Thin SVD `A = U · diag(σ) · V'` with `r = min(rows, cols)` triplets.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × r`, orthonormal columns.
    pub u: Matrix,
    /// Descending, non-negative, length `r`.
    pub singular_values: Vec<f64>,
    /// `n × r`, orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let r = self.singular_values.len();
        let us = Matrix::from_fn(self.u.rows(), r, |i, j| self.u.get(i, j) * self.singular_values[j]);
        us.matmul_t(&self.v).expect("svd factor shapes")
    }

    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Columns of the taller orientation are rotated pairwise until mutually
/// orthogonal; their norms are the singular values. Left vectors belonging
/// to numerically zero singular values are completed to an orthonormal set.
pub fn svd_thin(a: &Matrix, cfg: &SvdConfig) -> Result<Svd, LinalgError> {
    if a.is_empty() {
        return Err(LinalgError::EmptyMatrix);
    }
    if let Some(pos) = a.as_slice().iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite {
            row: pos / a.cols(),
            col: pos % a.cols(),
        });
    }
    if a.rows() >= a.cols() {
        jacobi_tall(a, cfg)
    } else {
        let t = jacobi_tall(&a.transpose(), cfg)?;
        Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

fn jacobi_tall(a: &Matrix, cfg: &SvdConfig) -> Result<Svd, LinalgError> {
    let (m, n) = a.shape();
    let mut cols = a.columns();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _ in 0..cfg.max_sweeps {
        let mut sq: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = sq[p];
                let beta = sq[q];
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&cols[p], &cols[q]);
                if gamma.abs() <= cfg.tolerance * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut cols, p, q, c, s);
                rotate(&mut vcols, p, q, c, s);
                sq[p] = alpha - t * gamma;
                sq[q] = beta + t * gamma;
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::NumericalFailure {
            sweeps: cfg.max_sweeps,
        });
    }

    let sigma: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));

    let sigma_max = sigma[order[0]];
    let negligible = sigma_max * (m as f64) * f64::EPSILON;
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if sigma[j] > negligible && sigma[j] > 0.0 {
            ucols.push(cols[j].iter().map(|v| v / sigma[j]).collect());
        } else {
            ucols.push(vec![0.0; m]);
            pending.push(slot);
        }
    }
    for slot in pending {
        let j = order[slot];
        let seed = if sigma[j] > 0.0 {
            Some(cols[j].iter().map(|v| v / sigma[j]).collect::<Vec<_>>())
        } else {
            None
        };
        ucols[slot] = complete_column(&ucols, slot, seed, m);
    }

    let singular_values = order.iter().map(|&j| sigma[j]).collect();
    let vsorted: Vec<Vec<f64>> = order.iter().map(|&j| vcols[j].clone()).collect();
    Ok(Svd {
        u: Matrix::from_columns(m, &ucols),
        singular_values,
        v: Matrix::from_columns(n, &vsorted),
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Unit vector orthogonal to every other filled column of `ucols`.
fn complete_column(ucols: &[Vec<f64>], slot: usize, seed: Option<Vec<f64>>, m: usize) -> Vec<f64> {
    let others: Vec<&Vec<f64>> = ucols
        .iter()
        .enumerate()
        .filter(|(i, c)| *i != slot && c.iter().any(|v| *v != 0.0))
        .map(|(_, c)| c)
        .collect();
    let reject = |mut v: Vec<f64>| -> (Vec<f64>, f64) {
        for _ in 0..2 {
            for o in &others {
                let c = dot(o, &v);
                for (vi, oi) in v.iter_mut().zip(o.iter()) {
                    *vi -= c * oi;
                }
            }
        }
        let n = norm(&v);
        (v, n)
    };
    let candidates = seed.into_iter().chain((0..m).map(|i| {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        e
    }));
    for cand in candidates {
        let (v, n) = reject(cand);
        if n > 0.5 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
    unreachable!("fewer than m orthonormal columns always leave a free direction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, orthonormality_error};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check_invariants(a: &Matrix, svd: &Svd) {
        let r = a.rows().min(a.cols());
        assert_eq!(svd.singular_values.len(), r);
        assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        assert!(svd.singular_values.iter().all(|s| *s >= 0.0));
        assert!(orthonormality_error(&svd.u) <= 1e-6);
        assert!(orthonormality_error(&svd.v) <= 1e-6);
        let err = frobenius_norm(&svd.reconstruct().sub(a).unwrap());
        assert!(err <= 1e-6 * frobenius_norm(a).max(1e-300), "reconstruction error {err}");
    }

    #[test]
    fn identity_and_diagonal() {
        let cfg = SvdConfig::default();
        let s = svd_thin(&Matrix::identity(2), &cfg).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0]);

        let d = Matrix::from_rows(&[[3.0, 0.0], [0.0, 0.0]]);
        let s = svd_thin(&d, &cfg).unwrap();
        assert_eq!(s.singular_values, vec![3.0, 0.0]);
        assert!((s.u.get(0, 0).abs() - 1.0).abs() < 1e-15);
        assert!(s.u.get(1, 0).abs() < 1e-15);
        check_invariants(&d, &s);
    }

    #[test]
    fn random_rectangular_reconstructs() {
        let cfg = SvdConfig::default();
        for (rows, cols, seed) in [(5, 4, 1), (4, 5, 2), (30, 7, 3), (7, 30, 4), (1, 6, 5), (6, 1, 6)] {
            let a = random(rows, cols, seed);
            let s = svd_thin(&a, &cfg).unwrap();
            check_invariants(&a, &s);
            // oracle: U'U = I and explicit reconstruction
            let gram = s.u.t_matmul(&s.u).unwrap();
            assert!(gram.max_abs_diff(&Matrix::identity(gram.rows())) < 1e-10);
        }
    }

    #[test]
    fn rank_deficient_completes_left_vectors() {
        // rank one: outer product of u and v
        let u = [1.0, 2.0, -1.0, 0.5];
        let v = [0.3, -0.7, 1.1];
        let a = Matrix::from_fn(4, 3, |i, j| u[i] * v[j]);
        let s = svd_thin(&a, &SvdConfig::default()).unwrap();
        check_invariants(&a, &s);
        assert!(s.singular_values[1] < 1e-12);

        let zeros = Matrix::zeros(3, 2);
        let s = svd_thin(&zeros, &SvdConfig::default()).unwrap();
        assert_eq!(s.singular_values, vec![0.0, 0.0]);
        assert!(orthonormality_error(&s.u) < 1e-12);
    }

    #[test]
    fn errors() {
        let cfg = SvdConfig::default();
        assert_eq!(svd_thin(&Matrix::zeros(0, 3), &cfg).unwrap_err(), LinalgError::EmptyMatrix);
        let starved = SvdConfig {
            max_sweeps: 0,
            ..cfg
        };
        assert!(matches!(
            svd_thin(&random(4, 4, 9), &starved),
            Err(LinalgError::NumericalFailure { .. })
        ));
    }

    #[test]
    fn energy_identity_and_determinism() {
        let a = random(12, 9, 77);
        let s1 = svd_thin(&a, &SvdConfig::default()).unwrap();
        let s2 = svd_thin(&a, &SvdConfig::default()).unwrap();
        assert_eq!(s1.singular_values, s2.singular_values);
        assert_eq!(s1.u, s2.u);
        let energy: f64 = s1.singular_values.iter().map(|s| s * s).sum();
        let fro = frobenius_norm(&a);
        assert!((energy - fro * fro).abs() <= 1e-6 * fro * fro);
    }
}
