//! Dense linear algebra used throughout the crate: a row-major [`Matrix`],
//! a one-sided Jacobi thin SVD, Frobenius norms and projections onto
//! subspaces given by orthonormal bases.
//!
//! Every function here is pure and deterministic. Matrix products go through
//! `matrixmultiply`, which runs single-threaded with a fixed summation order.

mod matrix;
mod svd;

pub use matrix::Matrix;
pub use svd::{svd_thin, Svd, SvdConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is empty")]
    EmptyMatrix,
    #[error("svd did not converge after {sweeps} sweeps")]
    NumericalFailure { sweeps: usize },
    #[error("basis is not orthonormal: Gram deviation {deviation:.3e} exceeds {tolerance:.1e}")]
    NonOrthonormalBasis { deviation: f64, tolerance: f64 },
}

/// Numerical tolerances shared by the linear-algebra checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Max entry of `|B'B − I|` accepted for an orthonormal basis.
    pub orthonormality: f64,
    /// Relative Frobenius error accepted for an SVD reconstruction.
    pub reconstruction: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            orthonormality: 1e-6,
            reconstruction: 1e-6,
        }
    }
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    // scaled accumulation so huge or tiny entries do not overflow
    let scale = a.as_slice().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = a.as_slice().iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * sum.sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Largest absolute entry of `B'B − I`. Zero for an empty basis.
pub fn orthonormality_error(basis: &Matrix) -> f64 {
    if basis.cols() == 0 {
        return 0.0;
    }
    let gram = basis.t_matmul(basis).expect("gram shape");
    let k = gram.rows();
    let mut worst = 0.0_f64;
    for i in 0..k {
        for j in 0..k {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram.get(i, j) - target).abs());
        }
    }
    worst
}

pub fn check_orthonormal(basis: &Matrix, tolerance: f64) -> Result<(), LinalgError> {
    let deviation = orthonormality_error(basis);
    if deviation > tolerance {
        Err(LinalgError::NonOrthonormalBasis {
            deviation,
            tolerance,
        })
    } else {
        Ok(())
    }
}

/// `A · B · B'`, the projection of the rows of `a` onto `span(B)`.
///
/// `basis` must have orthonormal columns within `tol.orthonormality`.
pub fn project_onto_basis(a: &Matrix, basis: &Matrix, tol: &Tolerances) -> Result<Matrix, LinalgError> {
    if a.cols() != basis.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "project_onto_basis",
            left: a.shape(),
            right: basis.shape(),
        });
    }
    check_orthonormal(basis, tol.orthonormality)?;
    Ok(project_rows_unchecked(a, basis))
}

/// `A · B · B'` without the orthonormality check.
pub fn project_rows_unchecked(a: &Matrix, basis: &Matrix) -> Matrix {
    if basis.cols() == 0 {
        return Matrix::zeros(a.rows(), a.cols());
    }
    let coords = a.matmul(basis).expect("projection shape");
    coords.matmul_t(basis).expect("projection shape")
}

/// `A − A · B · B'`, the component of each row of `a` orthogonal to `span(B)`.
pub fn reject_rows_unchecked(a: &Matrix, basis: &Matrix) -> Matrix {
    let mut out = a.clone();
    if basis.cols() == 0 {
        return out;
    }
    let coords = a.matmul(basis).expect("projection shape");
    out.gemm_acc(-1.0, &coords, false, basis, true)
        .expect("projection shape");
    out
}

/// Removes from `v` its component in `span(basis)`, with one
/// re-orthogonalization pass. Returns the norm of the remainder.
pub fn orthogonalize_against(v: &mut [f64], basis: &Matrix) -> f64 {
    let m = basis.rows();
    debug_assert_eq!(v.len(), m);
    for _ in 0..2 {
        for j in 0..basis.cols() {
            let mut c = 0.0;
            for i in 0..m {
                c += basis.get(i, j) * v[i];
            }
            for i in 0..m {
                v[i] -= c * basis.get(i, j);
            }
        }
    }
    norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Orthonormalizes columns with modified Gram–Schmidt.
    fn orthonormalize(a: &Matrix) -> Matrix {
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for mut c in a.columns() {
            let current = Matrix::from_columns(a.rows(), &cols);
            let n = orthogonalize_against(&mut c, &current);
            c.iter_mut().for_each(|v| *v /= n);
            cols.push(c);
        }
        Matrix::from_columns(a.rows(), &cols)
    }

    /// Solves the small normal equations `(B'B) c = B'a` by Gaussian elimination.
    fn least_squares_fit(basis: &Matrix, row: &[f64]) -> Vec<f64> {
        let k = basis.cols();
        let mut aug = vec![vec![0.0; k + 1]; k];
        for i in 0..k {
            for j in 0..k {
                aug[i][j] = (0..basis.rows()).map(|r| basis.get(r, i) * basis.get(r, j)).sum();
            }
            aug[i][k] = (0..basis.rows()).map(|r| basis.get(r, i) * row[r]).sum();
        }
        for p in 0..k {
            let piv = aug[p][p];
            for j in p..=k {
                aug[p][j] /= piv;
            }
            for i in 0..k {
                if i != p {
                    let f = aug[i][p];
                    for j in p..=k {
                        aug[i][j] -= f * aug[p][j];
                    }
                }
            }
        }
        let coef: Vec<f64> = aug.iter().map(|r| r[k]).collect();
        (0..basis.rows())
            .map(|r| (0..k).map(|c| basis.get(r, c) * coef[c]).sum())
            .collect()
    }

    #[test]
    fn frobenius_examples() {
        assert_eq!(frobenius_norm(&Matrix::zeros(3, 2)), 0.0);
        assert_eq!(frobenius_norm(&Matrix::from_rows(&[[3.0, 4.0]])), 5.0);
        let a = random(6, 6, 3);
        let svd = svd_thin(&a, &SvdConfig::default()).unwrap();
        let from_sigma = svd.singular_values.iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!((frobenius_norm(&a) - from_sigma).abs() < 1e-8);
    }

    #[test]
    fn projection_examples() {
        let tol = Tolerances::default();
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let e1 = Matrix::from_rows(&[[1.0], [0.0]]);
        let p = project_onto_basis(&a, &e1, &tol).unwrap();
        assert_eq!(p, Matrix::from_rows(&[[1.0, 0.0], [3.0, 0.0]]));
        assert_eq!(project_onto_basis(&a, &Matrix::identity(2), &tol).unwrap(), a);
    }

    #[test]
    fn projection_matches_least_squares() {
        let a = random(4, 3, 11);
        let b = orthonormalize(&random(3, 2, 12));
        let p = project_onto_basis(&a, &b, &Tolerances::default()).unwrap();
        for i in 0..4 {
            let fit = least_squares_fit(&b, a.row(i));
            for j in 0..3 {
                assert!((p.get(i, j) - fit[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_errors() {
        let tol = Tolerances::default();
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            project_onto_basis(&a, &Matrix::identity(2), &tol),
            Err(LinalgError::DimensionMismatch { .. })
        ));
        let skew = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0]]);
        assert!(matches!(
            project_onto_basis(&Matrix::zeros(1, 2), &skew, &tol),
            Err(LinalgError::NonOrthonormalBasis { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn projection_properties(seed in any::<u64>(), rows in 1usize..6, m in 2usize..7, k in 1usize..4) {
            let k = k.min(m);
            let a = random(rows, m, seed);
            let b = orthonormalize(&random(m, k, seed.wrapping_add(1)));
            let tol = Tolerances::default();
            let p = project_onto_basis(&a, &b, &tol).unwrap();
            let pp = project_onto_basis(&p, &b, &tol).unwrap();
            prop_assert!(pp.max_abs_diff(&p) <= 1e-8);
            let na = frobenius_norm(&a);
            let np = frobenius_norm(&p);
            prop_assert!(np <= na + 1e-9);
            let rest = frobenius_norm(&a.sub(&p).unwrap());
            prop_assert!((na * na - np * np - rest * rest).abs() <= 1e-6 * (na * na).max(1e-300));
        }
    }
}
