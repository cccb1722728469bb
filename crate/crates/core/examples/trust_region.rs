//! Trust-region selection as task similarity varies: the projection ratio
//! of a new task's gradient onto an old task's subspace, per layer, for
//! streams whose tasks share more or less of their input space.
//!
//! ```text
//! cargo run --release --example trust_region
//! ```

use trgp::bench::stream::{gen_split_synthetic, SplitSyntheticConfig};
use trgp::network::HeadMode;
use trgp::subspace::SubspaceConfig;
use trgp::trainer::{ContinualLearner, Method, TrainerConfig};
use trgp::trust_region::{TrustMode, TrustRegionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("overlap  mode       ratios of task 0 at task 1 (per layer)  chosen");
    for overlap in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let stream = gen_split_synthetic(
            &SplitSyntheticConfig {
                num_tasks: 2,
                dim: 16,
                overlap,
                ..Default::default()
            },
            0,
        )?;
        for mode in [TrustMode::Layerwise, TrustMode::Taskwise] {
            let cfg = TrainerConfig {
                method: Method::Trgp,
                epochs: 2,
                lr: 0.05,
                hidden: vec![24, 24],
                head: HeadMode::PerTask,
                subspace: SubspaceConfig {
                    eps_th: vec![0.97],
                    ..Default::default()
                },
                trust: TrustRegionConfig {
                    mode,
                    ..Default::default()
                },
                ..TrainerConfig::default()
            };
            let mut l = ContinualLearner::new(cfg, 16, 2, 2)?;
            for t in &stream.tasks {
                l.learn_task(t)?;
            }
            let sel = &l.artifacts[1].selection;
            let ratios: Vec<String> = sel
                .layers
                .iter()
                .map(|ls| ls.candidates.first().map_or("-".into(), |c| format!("{:.3}", c.ratio)))
                .collect();
            let chosen: Vec<usize> = sel.layers.iter().map(|ls| ls.chosen.len()).collect();
            println!("{overlap:>7}  {:<9}  {:<40}  {chosen:?}", format!("{mode:?}"), ratios.join("  "));
        }
    }
    Ok(())
}
