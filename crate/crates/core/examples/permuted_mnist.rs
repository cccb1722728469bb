//! Permuted MNIST with TRGP and GPM (and optionally SGD / multitask).
//!
//! ```text
//! cargo run --release --example permuted_mnist -- [tasks] [train_subset|full] [methods]
//! cargo run --release --example permuted_mnist -- 3 10000 trgp,gpm,sgd
//! ```
//!
//! Expects the IDX files in `data/mnist` (see `scripts/fetch_mnist.sh`).

use std::path::PathBuf;

use trgp::bench::experiment::{run_experiment, ExperimentOptions, StreamConfig};
use trgp::trainer::{Method, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tasks: usize = args.first().map_or(Ok(10), |s| s.parse())?;
    let subset = match args.get(1).map(String::as_str) {
        None | Some("full") => None,
        Some(n) => Some(n.parse()?),
    };
    let methods: Vec<Method> = args
        .get(2)
        .map_or("trgp,gpm", String::as_str)
        .split(',')
        .map(str::parse)
        .collect::<Result<_, _>>()?;

    let stream_cfg = StreamConfig::Permuted {
        mnist_dir: PathBuf::from(std::env::var("MNIST_DIR").unwrap_or_else(|_| "data/mnist".into())),
        num_tasks: tasks,
        train_subset: subset,
        test_subset: None,
    };
    let seed = 0;
    let stream = stream_cfg.build(seed)?;
    println!("{} tasks, {} training images each", stream.len(), stream.tasks[0].train.len());

    for method in methods {
        let cfg = TrainerConfig {
            method,
            seed,
            ..TrainerConfig::default()
        };
        let opts = ExperimentOptions {
            progress: true,
            ..Default::default()
        };
        let r = run_experiment(&cfg, &stream, &opts)?;
        let bwt = r.metrics.bwt.map_or("-".to_string(), |b| format!("{:.2}", 100.0 * b));
        println!(
            "{method:>9}: ACC {:.2}%  BWT {bwt} pp  ({:.0}s)",
            100.0 * r.metrics.acc,
            r.seconds
        );
        for a in &r.artifacts {
            let chosen: Vec<String> = a
                .selection
                .layers
                .iter()
                .map(|l| format!("{:?}", l.chosen.iter().map(|c| c.old_task).collect::<Vec<_>>()))
                .collect();
            println!(
                "    task {}: basis ranks {:?}, memory {:?}, trust region {}",
                a.task,
                a.basis_ranks,
                a.merged_columns,
                chosen.join(" ")
            );
        }
    }
    Ok(())
}
