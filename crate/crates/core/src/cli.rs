//! `trgp run | report | selftest`.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime error,
//! 3 selftest failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::bench::experiment::{run_experiment, ExperimentError, ExperimentOptions, ExperimentResult};
use crate::config::{ConfigError, Overrides, RunConfig};
use crate::network::HeadMode;
use crate::report::{build_report, mean_std, ReportError};
use crate::selftest::{run_and_report, FaultInjection};
use crate::trainer::Method;
use crate::trust_region::TrustMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_SELFTEST: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "trgp", version, about = "Continual learning with trust-region gradient projection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Train one or more methods on a task stream and write results.
    Run(RunArgs),
    /// Aggregate results.json files under a directory.
    Report {
        runs_dir: PathBuf,
        /// Skip writing report.svg.
        #[arg(long)]
        no_plot: bool,
    },
    /// Run the fast invariant suite.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Deliberately break a property (negative control).
        #[arg(long, hide = true, value_parser = ["basis-orthonormality"])]
        inject_fault: Option<String>,
    },
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// TOML config, or a results.json to re-run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed or comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seed: Option<Vec<u64>>,
    /// Method or comma-separated methods: trgp, gpm, sgd, multitask.
    #[arg(long, value_delimiter = ',')]
    pub method: Option<Vec<Method>>,
    #[arg(long)]
    pub tasks: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epsilon_l: Option<f64>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// One threshold, or one per layer separated by commas.
    #[arg(long, value_delimiter = ',')]
    pub eps_th: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub head: Option<HeadArg>,
    #[arg(long, value_enum)]
    pub trust: Option<TrustArg>,
    /// Output directory (default: $TRGP_OUTPUT_DIR, then ./runs).
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub parallel_seeds: Option<usize>,
    /// No per-task progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum HeadArg {
    Single,
    PerTask,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum TrustArg {
    Layerwise,
    Taskwise,
}

impl RunArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seeds: self.seed.clone(),
            methods: self.method.clone(),
            tasks: self.tasks,
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            epsilon_l: self.epsilon_l,
            top_k: self.top_k,
            eps_th: self.eps_th.clone(),
            head: self.head.map(|h| match h {
                HeadArg::Single => HeadMode::Single,
                HeadArg::PerTask => HeadMode::PerTask,
            }),
            trust: self.trust.map(|t| match t {
                TrustArg::Layerwise => TrustMode::Layerwise,
                TrustArg::Taskwise => TrustMode::Taskwise,
            }),
            output_dir: self.output.clone(),
            parallel_seeds: self.parallel_seeds,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        }
    }
}

/// Resolves defaults < file < flags and validates.
pub fn resolve_config(args: &RunArgs) -> Result<RunConfig, ConfigError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&args.overrides());
    cfg.validate()?;
    Ok(cfg)
}

pub fn run_dir(out: &Path, method: Method, seed: u64) -> PathBuf {
    out.join(method.name()).join(format!("seed{seed}"))
}

/// Trains every requested (method, seed) pair; methods of one seed share one
/// stream.
pub fn cmd_run(cfg: &RunConfig, progress: bool) -> Result<Vec<ExperimentResult>, CliError> {
    let out = cfg.output_dir();
    std::fs::create_dir_all(&out).map_err(|source| CliError::Io { path: out.clone(), source })?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|source| CliError::Io { path: cfg_path, source })?;

    let run_seed = |seed: u64| -> Result<Vec<ExperimentResult>, CliError> {
        let stream = cfg.stream.build(seed)?;
        let mut results = Vec::new();
        for &method in &cfg.run.methods {
            let single = cfg.single(method, seed);
            let opts = ExperimentOptions {
                out_dir: Some(run_dir(&out, method, seed)),
                progress,
                config_echo: serde_json::to_value(&single).expect("config serializes"),
            };
            results.push(run_experiment(&cfg.trainer_config(method, seed), &stream, &opts)?);
        }
        Ok(results)
    };

    let mut all = Vec::new();
    for chunk in cfg.run.seeds.chunks(cfg.run.parallel_seeds.max(1)) {
        if chunk.len() == 1 {
            all.extend(run_seed(chunk[0])?);
            continue;
        }
        let outcomes: Vec<Result<Vec<ExperimentResult>, CliError>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || run_seed(seed))).collect();
            handles.into_iter().map(|h| h.join().expect("seed worker panicked")).collect()
        });
        for o in outcomes {
            all.extend(o?);
        }
    }
    Ok(all)
}

/// ACC/BWT per method, with ΔACC relative to the first method.
pub fn summary_table(methods: &[Method], results: &[ExperimentResult]) -> String {
    let mut s = format!(
        "{:<10} {:>5} {:>16} {:>16} {:>10}\n",
        "method", "runs", "ACC (%)", "BWT (pp)", "ΔACC (pp)"
    );
    let mut base = None;
    for &m in methods {
        let rs: Vec<&ExperimentResult> = results.iter().filter(|r| r.method == m).collect();
        if rs.is_empty() {
            continue;
        }
        let accs: Vec<f64> = rs.iter().map(|r| 100.0 * r.metrics.acc).collect();
        let bwts: Vec<f64> = rs.iter().filter_map(|r| r.metrics.bwt).map(|b| 100.0 * b).collect();
        let (am, asd) = mean_std(&accs);
        let acc = crate::report::format_mean_std(am, asd);
        let bwt = if bwts.is_empty() {
            "–".to_string()
        } else {
            let (bm, bsd) = mean_std(&bwts);
            crate::report::format_mean_std(bm, bsd)
        };
        let delta = match base {
            None => {
                base = Some(am);
                String::new()
            }
            Some(b) => format!("{:+.2}", am - b),
        };
        s.push_str(&format!("{:<10} {:>5} {:>16} {:>16} {:>10}\n", m.name(), rs.len(), acc, bwt, delta));
    }
    s
}

pub fn cmd_report(dir: &Path, plot: bool) -> Result<String, CliError> {
    let (md, svg) = build_report(dir)?;
    let md_path = dir.join("report.md");
    std::fs::write(&md_path, &md).map_err(|source| CliError::Io { path: md_path, source })?;
    if plot {
        let svg_path = dir.join("report.svg");
        std::fs::write(&svg_path, svg).map_err(|source| CliError::Io { path: svg_path, source })?;
    }
    Ok(md)
}

pub fn cmd_selftest(seed: u64, faults: FaultInjection) -> bool {
    run_and_report(seed, faults)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::Run(args) => {
            let cfg = match resolve_config(&args) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            };
            match cmd_run(&cfg, !args.quiet) {
                Ok(results) => {
                    print!("{}", summary_table(&cfg.run.methods, &results));
                    println!("results written to {}", cfg.output_dir().display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Command::Report { runs_dir, no_plot } => match cmd_report(&runs_dir, !no_plot) {
            Ok(md) => {
                print!("{md}");
                EXIT_OK
            }
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Command::Selftest { seed, inject_fault } => {
            let faults = FaultInjection {
                basis_orthonormality: inject_fault.as_deref() == Some("basis-orthonormality"),
            };
            if cmd_selftest(seed, faults) {
                EXIT_OK
            } else {
                EXIT_SELFTEST
            }
        }
    }
}
