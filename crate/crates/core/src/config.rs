//! Run configuration: a versioned TOML file with one section per component.
//!
//! ```toml
//! version = 1
//!
//! [run]
//! methods = ["gpm", "trgp"]
//! seeds = [0]
//! output_dir = "runs/pmnist"
//!
//! [trainer]
//! epochs = 5
//! batch_size = 10
//! lr = 0.01
//! hidden = [100, 100]
//! head = "single"            # or "per-task"
//!
//! [trust_region]
//! epsilon = 0.5
//! top_k = 2
//! probe_batch = 64
//! mode = "layerwise"         # or "taskwise"
//!
//! [subspace]
//! eps_th = [0.95, 0.99, 0.99]
//! samples = 300
//!
//! [stream]
//! kind = "permuted"          # or "split-synthetic", "sign-flip"
//! mnist_dir = "data/mnist"
//! num_tasks = 10
//! ```
//!
//! Every key is optional; missing keys take their defaults. Unknown keys
//! are rejected. A `results.json` written by a run can be used as a config
//! too: its `config` field holds the exact configuration of that run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::experiment::StreamConfig;
use crate::network::HeadMode;
use crate::subspace::SubspaceConfig;
use crate::trainer::{Method, TrainerConfig};
use crate::trust_region::TrustRegionConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "TRGP_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    /// Falls back to `$TRGP_OUTPUT_DIR`, then `runs`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Number of seeds trained concurrently.
    pub parallel_seeds: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            methods: vec![Method::Trgp],
            seeds: vec![0],
            output_dir: None,
            parallel_seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale_lr: Option<f64>,
    pub hidden: Vec<usize>,
    pub head: HeadMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            scale_lr: t.scale_lr,
            hidden: t.hidden,
            head: t.head,
            patience: t.patience,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub run: RunSection,
    pub trainer: TrainerSection,
    pub trust_region: TrustRegionConfig,
    pub subspace: SubspaceConfig,
    pub stream: StreamConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            run: RunSection::default(),
            trainer: TrainerSection::default(),
            trust_region: TrustRegionConfig::default(),
            subspace: TrainerConfig::default().subspace,
            stream: StreamConfig::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub methods: Option<Vec<Method>>,
    pub tasks: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub epsilon_l: Option<f64>,
    pub top_k: Option<usize>,
    pub eps_th: Option<Vec<f64>>,
    pub head: Option<HeadMode>,
    pub trust: Option<crate::trust_region::TrustMode>,
    pub output_dir: Option<PathBuf>,
    pub parallel_seeds: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Accepts a TOML config, a JSON config, or a `results.json` (whose
    /// `config` field is used).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            let parse_err = |e: serde_json::Error| ConfigError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            };
            let mut v: serde_json::Value = serde_json::from_str(&text).map_err(parse_err)?;
            if v.get("schema_version").is_some() {
                v = v.get("config").cloned().unwrap_or_default();
            }
            serde_json::from_value(v).map_err(parse_err)
        } else {
            Self::from_toml(&text, path)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.seeds {
            self.run.seeds = v.clone();
        }
        if let Some(v) = &o.methods {
            self.run.methods = v.clone();
        }
        if let Some(v) = o.tasks {
            self.stream.set_num_tasks(v);
        }
        if let Some(v) = o.epochs {
            self.trainer.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.trainer.batch_size = v;
        }
        if let Some(v) = o.lr {
            self.trainer.lr = v;
        }
        if let Some(v) = o.epsilon_l {
            self.trust_region.epsilon = v;
        }
        if let Some(v) = o.top_k {
            self.trust_region.top_k = v;
        }
        if let Some(v) = &o.eps_th {
            self.subspace.eps_th = v.clone();
        }
        if let Some(v) = o.head {
            self.trainer.head = v;
        }
        if let Some(v) = o.trust {
            self.trust_region.mode = v;
        }
        if let Some(v) = &o.output_dir {
            self.run.output_dir = Some(v.clone());
        }
        if let Some(v) = o.parallel_seeds {
            self.run.parallel_seeds = v;
        }
    }

    /// Trainer settings for one (method, seed) pair.
    pub fn trainer_config(&self, method: Method, seed: u64) -> TrainerConfig {
        let t = &self.trainer;
        TrainerConfig {
            method,
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: t.lr,
            scale_lr: t.scale_lr,
            hidden: t.hidden.clone(),
            head: t.head,
            seed,
            patience: t.patience,
            trust: self.trust_region.clone(),
            subspace: self.subspace.clone(),
        }
    }

    /// The configuration of a single (method, seed) run, as echoed into its
    /// results.
    pub fn single(&self, method: Method, seed: u64) -> Self {
        let mut c = self.clone();
        c.run.methods = vec![method];
        c.run.seeds = vec![seed];
        c.run.parallel_seeds = 1;
        c
    }

    pub fn output_dir(&self) -> PathBuf {
        self.run
            .output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
    }

    /// Field-level validation, including that referenced paths exist.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(invalid(
                "version",
                format!("unsupported version {} (expected {CONFIG_VERSION})", self.version),
            ));
        }
        if self.run.methods.is_empty() {
            return Err(invalid("run.methods", "at least one method is required"));
        }
        if self.run.seeds.is_empty() {
            return Err(invalid("run.seeds", "at least one seed is required"));
        }
        if self.run.parallel_seeds == 0 {
            return Err(invalid("run.parallel_seeds", "must be at least 1"));
        }
        match &self.stream {
            StreamConfig::Permuted { mnist_dir, num_tasks, .. } => {
                if *num_tasks == 0 {
                    return Err(invalid("stream.num_tasks", "must be at least 1"));
                }
                for f in ["train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"] {
                    if !mnist_dir.join(f).is_file() {
                        return Err(invalid(
                            "stream.mnist_dir",
                            format!("{} not found (run scripts/fetch_mnist.sh)", mnist_dir.join(f).display()),
                        ));
                    }
                }
            }
            StreamConfig::SplitSynthetic { num_tasks, .. } if *num_tasks == 0 => {
                return Err(invalid("stream.num_tasks", "must be at least 1"));
            }
            _ => {}
        }
        self.trainer_config(self.run.methods[0], 0)
            .validate()
            .map_err(|e| match e {
                crate::trainer::TrainerError::InvalidConfig(msg) => {
                    let key = msg.split_whitespace().next().unwrap_or_default();
                    let field = match key.strip_prefix("trust.") {
                        Some(rest) => format!("trust_region.{rest}"),
                        None if key.starts_with("subspace.") => key.to_string(),
                        None => format!("trainer.{key}"),
                    };
                    ConfigError::Invalid { field, message: msg }
                }
                other => invalid("trainer", other.to_string()),
            })
    }
}
