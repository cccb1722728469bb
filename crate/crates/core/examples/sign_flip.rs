//! Two 2-d tasks where the second negates the first's inputs. Both tasks
//! live in the same 1-d input subspace, so pure gradient projection cannot
//! move at all on task 2, while a trust region lets the frozen component be
//! rescaled (here: flipped).
//!
//! ```text
//! cargo run --release --example sign_flip
//! ```

use trgp::selftest::toy_sign_flip;

fn main() {
    let o = toy_sign_flip(0);
    println!("task-2 gradient left after projection (GPM): {:.3} of its norm", o.gpm_residual_ratio);
    println!("trust-region ratio of task 1 seen by task 2:  {:.3}", o.trgp_ratio);
    println!("task-2 training loss  GPM {:.4}   TRGP {:.4}", o.gpm_task2_loss, o.trgp_task2_loss);
}
