//! When a new task's inputs are orthogonal to everything learned so far,
//! projection leaves its gradient untouched.
//!
//! ```text
//! cargo run --release --example orthogonal_tasks
//! ```

use trgp::selftest::toy_orthogonal;

fn main() {
    for root in 0..5 {
        println!("seed {root}: ‖g − proj(g)‖_F = {:.2e}", toy_orthogonal(root));
    }
}
