//! The library side of `trgp run` and `trgp report`: load a TOML config,
//! apply overrides, train, then aggregate the results directory.
//!
//! ```text
//! cargo run --release --example run_from_config -- configs/sign_flip.toml
//! ```

use std::path::PathBuf;

use trgp::cli::{cmd_report, cmd_run, summary_table};
use trgp::config::{Overrides, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "configs/sign_flip.toml".into()));
    let mut cfg = RunConfig::load(&path)?;
    let out = std::env::temp_dir().join("trgp-run-from-config");
    cfg.apply(&Overrides {
        output_dir: Some(out.clone()),
        ..Default::default()
    });
    cfg.validate()?;
    println!("resolved config:\n{}", cfg.to_toml());

    let results = cmd_run(&cfg, true)?;
    print!("{}", summary_table(&cfg.run.methods, &results));
    println!("\n{}", cmd_report(&out, true)?);
    println!("outputs in {}", out.display());
    Ok(())
}
