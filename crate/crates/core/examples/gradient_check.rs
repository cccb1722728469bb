//! Analytic gradients of weights and scaling matrices against central
//! finite differences on a random 3-layer network.
//!
//! ```text
//! cargo run --release --example gradient_check -- [coords]
//! ```

use trgp::selftest::gradient_check;

fn main() {
    let coords = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(200);
    for root in 0..3 {
        let c = gradient_check(root, coords);
        println!(
            "seed {root}: max relative error dL/dW {:.2e} ({} coords), dL/dQ {:.2e} ({} coords)",
            c.max_rel_err_weights, c.weight_coords, c.max_rel_err_scales, c.scale_coords
        );
    }
}
