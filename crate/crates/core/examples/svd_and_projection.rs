//! Thin SVD and the row projection used for gradient updates.
//!
//! ```text
//! cargo run --release --example svd_and_projection
//! ```

use trgp::linalg::{frobenius_norm, orthonormality_error, svd_thin, Matrix, SvdConfig};
use trgp::network::project_gradient;
use trgp::selftest::{random_basis, random_matrix};
use trgp::seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seed::rng(0, "example", 0);

    let a = random_matrix(6, 4, &mut rng);
    let s = svd_thin(&a, &SvdConfig::default())?;
    println!("singular values: {:.4?}", s.singular_values);
    println!("reconstruction error: {:.2e}", s.reconstruct().max_abs_diff(&a));
    println!("|U'U − I|: {:.2e}  |V'V − I|: {:.2e}", orthonormality_error(&s.u), orthonormality_error(&s.v));

    // a gradient for a layer with 8 inputs, and a 3-dimensional memory
    let g = random_matrix(5, 8, &mut rng);
    let m = random_basis(8, 3, &mut rng);
    let projected = project_gradient(&g, &m)?;
    let inside = g.sub(&projected)?;
    println!();
    println!("‖g‖ = {:.4}", frobenius_norm(&g));
    println!("‖g − gMM'‖ = {:.4}  (the part that may be applied)", frobenius_norm(&projected));
    println!("‖gMM'‖ = {:.4}  (the part that would disturb old tasks)", frobenius_norm(&inside));
    println!("‖(g − gMM')·M‖ = {:.2e}", frobenius_norm(&projected.matmul(&m)?));

    let ident = Matrix::identity(3);
    println!("M'M = I: {}", m.t_matmul(&m)?.max_abs_diff(&ident) < 1e-12);
    Ok(())
}
