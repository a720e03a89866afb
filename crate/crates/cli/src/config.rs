//! Run configuration files and their resolution against a benchmark.

use std::path::{Path, PathBuf};

use nssafe::ir::{build_benchmark, Benchmark, BenchmarkConfig};
use nssafe::trainer::{Mode, TrainConfig};
use nssafe::verifier::VerifyConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Training records to generate.
    pub size: usize,
    pub noise: bool,
    /// Dataset file; `<out>/dataset.jsonl` when absent.
    pub path: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            size: 200,
            noise: true,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub benchmark: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub benchmark_config: BenchmarkConfig,
    #[serde(default)]
    pub data: DataConfig,
    /// Partial trainer settings layered over the benchmark defaults.
    #[serde(default)]
    pub train: Value,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_mode() -> Mode {
    Mode::Dse
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<Mode>,
    pub out: Option<PathBuf>,
}

/// A validated configuration with everything derived from it.
pub struct Resolved {
    pub cfg: RunConfig,
    pub train: TrainConfig,
    pub bench: Benchmark,
    pub out: PathBuf,
}

impl Resolved {
    pub fn dataset_path(&self) -> PathBuf {
        self.cfg.data.path.clone().unwrap_or_else(|| self.out.join("dataset.jsonl"))
    }
}

pub fn load(path: &Path, ov: &Overrides) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: RunConfig =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
    resolve(cfg, ov)
}

pub fn resolve(mut cfg: RunConfig, ov: &Overrides) -> Result<Resolved, CliError> {
    if let Some(s) = ov.seed {
        cfg.seed = s;
    }
    if let Some(m) = ov.mode {
        cfg.mode = m;
    }
    if let Some(o) = &ov.out {
        cfg.out = Some(o.clone());
    }
    let bench = build_benchmark(&cfg.benchmark, &cfg.benchmark_config)?;

    let mut merged = serde_json::to_value(TrainConfig::for_benchmark(&cfg.benchmark))
        .map_err(|e| CliError::usage(e.to_string()))?;
    match &cfg.train {
        Value::Null => {}
        Value::Object(_) => merge(&mut merged, &cfg.train),
        _ => return Err(CliError::usage("`train` must be an object")),
    }
    let mut train: TrainConfig =
        serde_json::from_value(merged).map_err(|e| CliError::usage(format!("invalid train settings: {e}")))?;
    train.mode = cfg.mode;
    train.seed = cfg.seed;
    train.sample.seed = cfg.seed;
    train.validate()?;
    cfg.verify.grid_for(&bench.program)?;
    if cfg.data.size == 0 {
        return Err(CliError::usage("data.size must be at least 1"));
    }
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.benchmark));
    Ok(Resolved { cfg, train, bench, out })
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}
