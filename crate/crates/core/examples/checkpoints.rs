//! Saving and restoring a learner: per-task checkpoints (weights plus the
//! task's scaling matrices) and the subspace store.
//!
//! ```text
//! cargo run --release --example checkpoints
//! ```

use trgp::bench::stream::{gen_split_synthetic, SplitSyntheticConfig};
use trgp::checkpoint::Checkpoint;
use trgp::network::HeadMode;
use trgp::subspace::SubspaceStore;
use trgp::trainer::{accuracy, selections_from_scalings, ContinualLearner, Method, TrainerConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let stream = gen_split_synthetic(&SplitSyntheticConfig::default(), 0)?;
    let cfg = TrainerConfig {
        method: Method::Trgp,
        epochs: 2,
        lr: 0.05,
        hidden: vec![32],
        head: HeadMode::PerTask,
        ..TrainerConfig::default()
    };
    let mut l = ContinualLearner::new(cfg, stream.dim(), stream.classes(), stream.len())?;
    let dir = std::env::temp_dir().join("trgp-checkpoints");
    std::fs::create_dir_all(&dir)?;
    for t in &stream.tasks {
        l.learn_task(t)?;
        let ck = Checkpoint {
            task: t.id,
            model: l.model.clone(),
            scalings: l.artifacts[t.id].scalings.clone(),
        };
        ck.save(&dir.join(format!("model_task{}.bin", t.id)))?;
    }
    std::fs::write(dir.join("store.bin"), l.store.to_bytes())?;

    // restore: final weights, the store, and each task's own scalings
    let store = SubspaceStore::from_bytes(&std::fs::read(dir.join("store.bin"))?)?;
    let last = Checkpoint::load(&dir.join(format!("model_task{}.bin", stream.len() - 1)))?;
    for t in &stream.tasks {
        let own = Checkpoint::load(&dir.join(format!("model_task{}.bin", t.id)))?;
        let sel = selections_from_scalings(&store, &own.scalings, last.model.num_layers())?;
        let restored = accuracy(&last.model, &sel, &t.test, t.id)?;
        println!(
            "task {}: accuracy {:.2}% (live learner {:.2}%), {} scaling matrices",
            t.id,
            100.0 * restored,
            100.0 * l.evaluate(t)?,
            own.scalings.len()
        );
    }
    println!("checkpoints in {}", dir.display());
    Ok(())
}
