//! Energy-thresholded basis extraction for a first and a later task, and
//! how the merged memory grows.
//!
//! ```text
//! cargo run --release --example subspace_extraction
//! ```

use std::sync::Arc;

use trgp::linalg::{frobenius_norm, Matrix, SvdConfig};
use trgp::selftest::{random_basis, random_matrix};
use trgp::seed;
use trgp::subspace::{extract_basis_first_task, extract_basis_with_memory, RepresentationMatrix, SubspaceStore};

/// `m × n` samples concentrated in `k` random directions plus a little noise.
fn samples(m: usize, n: usize, directions: &Matrix, rng: &mut impl rand::Rng) -> Matrix {
    let coeffs = random_matrix(directions.cols(), n, rng);
    let mut r = directions.matmul(&coeffs).unwrap();
    r.axpy(0.05, &random_matrix(m, n, rng)).unwrap();
    r
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seed::rng(0, "example", 0);
    let m = 20;
    let svd = SvdConfig::default();
    let shared = random_basis(m, 6, &mut rng);

    let task0 = RepresentationMatrix {
        task: 0,
        layer: 0,
        matrix: samples(m, 100, &shared.select_columns(&[0, 1, 2, 3]), &mut rng),
    };
    let mut store = SubspaceStore::new(vec![m], 1e-3);
    for eps in [0.9, 0.97, 0.999] {
        let b = extract_basis_first_task(&task0, eps, &svd)?;
        println!("task 0, eps_th {eps}: rank {}", b.rank());
    }
    let b0 = extract_basis_first_task(&task0, 0.97, &svd)?;
    store.insert_task(0, vec![b0])?;
    println!("memory after task 0: {} columns", store.merged(0).num_columns());

    // the second task shares two directions with the first and adds two
    let task1 = RepresentationMatrix {
        task: 1,
        layer: 0,
        matrix: samples(m, 100, &shared.select_columns(&[2, 3, 4, 5]), &mut rng),
    };
    let b1 = extract_basis_with_memory(&task1, &store.merged(0).basis, 0.97, &svd)?;
    let reused = b1.reused.iter().filter(|r| **r).count();
    println!(
        "task 1: rank {} ({} directions reused from memory, {} new)",
        b1.rank(),
        reused,
        b1.rank() - reused
    );
    let captured = frobenius_norm(&b1.basis.t_matmul(&task1.matrix)?).powi(2) / frobenius_norm(&task1.matrix).powi(2);
    println!("task 1 energy captured by its basis: {:.4}", captured);
    store.insert_task(1, vec![b1])?;
    println!("memory after task 1: {} columns", store.merged(0).num_columns());
    store.check_orthonormal(1e-9)?;
    let _: Arc<Matrix> = store.basis(1, 0).expect("stored").basis.clone();
    Ok(())
}
