//! All four methods on a synthetic stream, with accuracy matrices.
//!
//! ```text
//! cargo run --release --example split_synthetic -- [overlap]
//! ```

use trgp::bench::experiment::{run_experiment, ExperimentOptions, StreamConfig};
use trgp::network::HeadMode;
use trgp::subspace::SubspaceConfig;
use trgp::trainer::{Method, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let overlap = std::env::args().nth(1).map_or(Ok(0.9), |s| s.parse())?;
    let stream = StreamConfig::SplitSynthetic {
        num_tasks: 5,
        classes_per_task: 2,
        dim: 32,
        separation: 2.0,
        overlap,
        ambient_noise: 1.0,
        train_per_class: 200,
        test_per_class: 100,
    }
    .build(0)?;
    for method in Method::ALL {
        let cfg = TrainerConfig {
            method,
            epochs: 5,
            lr: 0.05,
            hidden: vec![32],
            head: HeadMode::Single,
            subspace: SubspaceConfig {
                eps_th: vec![0.97],
                ..Default::default()
            },
            ..TrainerConfig::default()
        };
        let r = run_experiment(&cfg, &stream, &ExperimentOptions::default())?;
        let bwt = r.metrics.bwt.map_or("-".into(), |b| format!("{:+.2}", 100.0 * b));
        println!("{method}: ACC {:.2}%  BWT {bwt} pp", 100.0 * r.metrics.acc);
        for row in &r.acc_rows {
            let cells: Vec<String> = row.iter().map(|a| format!("{:5.1}", 100.0 * a)).collect();
            println!("    {}", cells.join(" "));
        }
    }
    Ok(())
}
